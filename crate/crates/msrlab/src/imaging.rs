//! Direct sampling imaging from far-field data.
//!
//! For measured far fields `u_inf(x^_j; theta_i)` over incident directions
//! `theta_i` and observation directions `x^_j`, each with quadrature weight
//! `w` (the direction spacing `2 pi / 2m`), the direct sampling indicator at
//! a probe point `z` is
//!
//! `I(z) = | sum_i sum_j w^2 u_inf(x^_j; theta_i) e^{i k x^_j . z} e^{-i k theta_i . z} |^2`.
//!
//! `I` peaks on and near the scatterer; with a limited observation arc the
//! peak concentrates on the part of the boundary illuminated towards that
//! arc. Images are evaluated on a rectangular grid, max-normalized, and can
//! be written as 16-bit PGM (for quick looks) and CSV (for analysis).

use crate::msr::MsrMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid imaging grid: {0}")]
    InvalidGrid(String),
    #[error("invalid far-field data: {0}")]
    InvalidData(String),
    #[error("image is identically zero; cannot normalize")]
    AllZero,
    #[error("non-finite indicator value at grid point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Rectangular sampling grid. Points are `x_i = x_min + i dx`,
/// `y_j = y_min + j dy` with `i < nx`, `j < ny` inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl ImagingGrid {
    pub fn new(
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
    ) -> Result<Self, ImagingError> {
        if !(x_range.0 < x_range.1 && y_range.0 < y_range.1) {
            return Err(ImagingError::InvalidGrid(format!(
                "ranges ({}, {}) x ({}, {}) must be increasing",
                x_range.0, x_range.1, y_range.0, y_range.1
            )));
        }
        if nx < 2 || ny < 2 {
            return Err(ImagingError::InvalidGrid(format!(
                "resolution {nx} x {ny} must be at least 2 x 2"
            )));
        }
        Ok(ImagingGrid {
            x_min: x_range.0,
            x_max: x_range.1,
            y_min: y_range.0,
            y_max: y_range.1,
            nx,
            ny,
        })
    }

    /// Symmetric square grid `[-half, half]^2`.
    pub fn centered(half: f64, n: usize) -> Result<Self, ImagingError> {
        Self::new((-half, half), (-half, half), n, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (self.x_max - self.x_min) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (self.y_max - self.y_min) * j as f64 / (self.ny - 1) as f64
    }
}

/// Sampled indicator. `data[[iy, ix]]` holds the value at `(x(ix), y(iy))`;
/// row 0 is the bottom of the picture (`y_min`), writers flip as needed.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorImage {
    pub grid: ImagingGrid,
    pub data: Array2<f64>,
}

impl IndicatorImage {
    /// Location of the maximum (first hit wins on exact ties, scanning rows
    /// bottom-up).
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                let v = self.data[[iy, ix]];
                if v > best_val {
                    best_val = v;
                    best = (ix, iy);
                }
            }
        }
        (self.grid.x(best.0), self.grid.y(best.1))
    }

    /// Mean over grid points selected by a spatial predicate; `None` if the
    /// predicate selects nothing.
    pub fn mean_where(&self, pred: impl Fn(f64, f64) -> bool) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                if pred(self.grid.x(ix), self.grid.y(iy)) {
                    sum += self.data[[iy, ix]];
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Far-field data set feeding the indicator: a values matrix over explicit
/// incident/observation direction lists, with the direction quadrature
/// weight of the originating grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldData {
    pub incident: Vec<[f64; 2]>,
    pub observation: Vec<[f64; 2]>,
    /// `values[[i, j]]` = far field for incident `i`, observation `j`.
    pub values: Array2<Complex64>,
    pub k: f64,
    /// Quadrature weight per direction (`2 pi / 2m` for an MSR grid).
    pub weight: f64,
}

impl FarFieldData {
    /// Full-aperture data from an MSR matrix.
    pub fn full_aperture(msr: &MsrMatrix) -> Self {
        let two_m = msr.two_m();
        let grid = crate::msr::DirectionGrid::new(two_m).expect("MSR dimensions are even");
        FarFieldData {
            incident: grid.directions(),
            observation: grid.directions(),
            values: msr.entries.clone(),
            k: msr.k,
            weight: 2.0 * PI / two_m as f64,
        }
    }

    /// Restriction of an MSR matrix to index subsets of the direction grid.
    pub fn from_msr_subset(
        msr: &MsrMatrix,
        incident_idx: &[usize],
        observation_idx: &[usize],
    ) -> Result<Self, ImagingError> {
        let two_m = msr.two_m();
        let grid = crate::msr::DirectionGrid::new(two_m).expect("MSR dimensions are even");
        if incident_idx.is_empty() || observation_idx.is_empty() {
            return Err(ImagingError::InvalidData(
                "direction subsets must be nonempty".into(),
            ));
        }
        if incident_idx.iter().chain(observation_idx).any(|&i| i >= two_m) {
            return Err(ImagingError::InvalidData(format!(
                "direction index out of range 0..{two_m}"
            )));
        }
        let values = Array2::from_shape_fn(
            (incident_idx.len(), observation_idx.len()),
            |(a, b)| msr.entries[[incident_idx[a], observation_idx[b]]],
        );
        Ok(FarFieldData {
            incident: incident_idx.iter().map(|&i| grid.direction(i)).collect(),
            observation: observation_idx.iter().map(|&j| grid.direction(j)).collect(),
            values,
            k: msr.k,
            weight: 2.0 * PI / two_m as f64,
        })
    }

    /// The limited-aperture block `F12` (front incidence, back observation)
    /// of an MSR matrix split at `m1`.
    pub fn limited_aperture(msr: &MsrMatrix, m1: usize) -> Result<Self, ImagingError> {
        let two_m = msr.two_m();
        if m1 == 0 || m1 >= two_m {
            return Err(ImagingError::InvalidData(format!(
                "split m1 = {m1} out of range for {two_m} directions"
            )));
        }
        let inc: Vec<usize> = (0..m1).collect();
        let obs: Vec<usize> = (m1..two_m).collect();
        Self::from_msr_subset(msr, &inc, &obs)
    }
}

/// Applies the translation phase `exp(i k (theta_i - x^_j) . d)` to the data,
/// which shifts the indicator of the underlying scatterer by `d`.
pub fn translate_data(data: &mut FarFieldData, d: [f64; 2]) {
    let k = data.k;
    for (i, th) in data.incident.iter().enumerate() {
        for (j, xh) in data.observation.iter().enumerate() {
            let phase = k * ((th[0] - xh[0]) * d[0] + (th[1] - xh[1]) * d[1]);
            data.values[[i, j]] *= Complex64::new(phase.cos(), phase.sin());
        }
    }
}

/// Evaluates the direct sampling indicator on `grid`.
pub fn dsm_indicator(
    data: &FarFieldData,
    grid: &ImagingGrid,
) -> Result<IndicatorImage, ImagingError> {
    if data.values.nrows() != data.incident.len() || data.values.ncols() != data.observation.len()
    {
        return Err(ImagingError::InvalidData(format!(
            "values are {}x{} but there are {} incident and {} observation directions",
            data.values.nrows(),
            data.values.ncols(),
            data.incident.len(),
            data.observation.len()
        )));
    }
    if data.values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ImagingError::InvalidData("non-finite far-field entry".into()));
    }
    let k = data.k;
    let w2 = data.weight * data.weight;
    let n_inc = data.incident.len();
    let n_obs = data.observation.len();
    let mut image = Array2::zeros((grid.ny, grid.nx));
    let mut obs_phase = vec![Complex64::new(0.0, 0.0); n_obs];
    let mut inc_phase = vec![Complex64::new(0.0, 0.0); n_inc];
    for iy in 0..grid.ny {
        let zy = grid.y(iy);
        for ix in 0..grid.nx {
            let zx = grid.x(ix);
            for (j, xh) in data.observation.iter().enumerate() {
                let p = k * (xh[0] * zx + xh[1] * zy);
                obs_phase[j] = Complex64::new(p.cos(), p.sin());
            }
            for (i, th) in data.incident.iter().enumerate() {
                let p = -k * (th[0] * zx + th[1] * zy);
                inc_phase[i] = Complex64::new(p.cos(), p.sin());
            }
            let mut total = Complex64::new(0.0, 0.0);
            for i in 0..n_inc {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..n_obs {
                    row += data.values[[i, j]] * obs_phase[j];
                }
                total += inc_phase[i] * row;
            }
            let v = (w2 * total).norm_sqr();
            if !v.is_finite() {
                return Err(ImagingError::NonFinite(zx, zy));
            }
            image[[iy, ix]] = v;
        }
    }
    Ok(IndicatorImage {
        grid: *grid,
        data: image,
    })
}

/// Divides by the maximum value, mapping the peak to exactly 1.
pub fn normalize(image: &mut IndicatorImage) -> Result<(), ImagingError> {
    let max = image.data.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(ImagingError::AllZero);
    }
    image.data.mapv_inplace(|v| v / max);
    Ok(())
}

/// Writes a 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).
/// Row 0 of the file is the top of the picture, i.e. `y = y_max`. Values are
/// clamped to `[0, 1]` before quantization.
pub fn write_pgm(image: &IndicatorImage, path: &Path) -> Result<(), ImagingError> {
    let mut out = Vec::with_capacity(32 + 2 * image.grid.nx * image.grid.ny);
    out.extend_from_slice(format!("P5\n{} {}\n65535\n", image.grid.nx, image.grid.ny).as_bytes());
    for iy in (0..image.grid.ny).rev() {
        for ix in 0..image.grid.nx {
            let v = image.data[[iy, ix]].clamp(0.0, 1.0);
            let q = (v * 65535.0).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Writes `x,y,value` CSV rows (header included), scanning bottom-up.
pub fn write_csv(image: &IndicatorImage, path: &Path) -> Result<(), ImagingError> {
    let mut out = String::with_capacity(24 * image.grid.nx * image.grid.ny);
    out.push_str("x,y,indicator\n");
    for iy in 0..image.grid.ny {
        for ix in 0..image.grid.nx {
            out.push_str(&format!(
                "{},{},{}\n",
                image.grid.x(ix),
                image.grid.y(iy),
                image.data[[iy, ix]]
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msr::DirectionGrid;

    /// Synthetic point scatterer at z0: far field e^{i k (theta - x^) . z0}.
    fn point_scatterer_data(two_m: usize, k: f64, z0: [f64; 2]) -> FarFieldData {
        let grid = DirectionGrid::new(two_m).unwrap();
        let dirs = grid.directions();
        let values = Array2::from_shape_fn((two_m, two_m), |(i, j)| {
            let th = dirs[i];
            let xh = dirs[j];
            let phase = k * ((th[0] - xh[0]) * z0[0] + (th[1] - xh[1]) * z0[1]);
            Complex64::new(phase.cos(), phase.sin())
        });
        FarFieldData {
            incident: dirs.clone(),
            observation: dirs,
            values,
            k,
            weight: 2.0 * PI / two_m as f64,
        }
    }

    #[test]
    fn grid_coordinates() {
        let g = ImagingGrid::new((-2.0, 2.0), (-1.0, 3.0), 5, 9).unwrap();
        assert_eq!(g.x(0), -2.0);
        assert_eq!(g.x(4), 2.0);
        assert_eq!(g.x(2), 0.0);
        assert_eq!(g.y(0), -1.0);
        assert_eq!(g.y(8), 3.0);
        assert!(ImagingGrid::new((1.0, -1.0), (0.0, 1.0), 5, 5).is_err());
        assert!(ImagingGrid::new((-1.0, 1.0), (0.0, 1.0), 1, 5).is_err());
    }

    #[test]
    fn point_scatterer_peaks_exactly_at_source() {
        let z0 = [0.5, -0.25];
        let data = point_scatterer_data(16, 5.0, z0);
        // Grid chosen so z0 is exactly a grid point.
        let grid = ImagingGrid::new((-1.0, 1.0), (-1.0, 1.0), 17, 17).unwrap();
        let mut img = dsm_indicator(&data, &grid).unwrap();
        normalize(&mut img).unwrap();
        assert_eq!(img.argmax(), (0.5, -0.25));
        let peak = img.data[[6, 12]]; // iy: y=-0.25 -> (âˆ'0.25+1)/0.125 = 6; ix: (0.5+1)/0.125 = 12
        assert_eq!(peak, 1.0);
    }

    #[test]
    fn translation_equivariance_on_shifted_grid() {
        let z0 = [0.25, 0.125];
        let d = [0.5, -0.375];
        let data = point_scatterer_data(12, 4.0, z0);
        let grid = ImagingGrid::new((-1.0, 1.0), (-1.0, 1.0), 17, 17).unwrap();
        let base = dsm_indicator(&data, &grid).unwrap();

        let mut moved = data.clone();
        translate_data(&mut moved, d);
        let shifted_grid =
            ImagingGrid::new((-1.0 + d[0], 1.0 + d[0]), (-1.0 + d[1], 1.0 + d[1]), 17, 17)
                .unwrap();
        let img = dsm_indicator(&moved, &shifted_grid).unwrap();
        let worst = base
            .data
            .iter()
            .zip(img.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = base.data.iter().cloned().fold(0.0, f64::max);
        assert!(worst / scale < 1e-10, "equivariance violation {}", worst / scale);
    }

    /// Independent re-evaluation with the loop order swapped; catches
    /// transposed indexing between incident and observation.
    #[test]
    fn indicator_matches_naive_recompute() {
        let data = point_scatterer_data(8, 3.0, [0.3, 0.7]);
        let grid = ImagingGrid::new((-1.0, 1.0), (-1.0, 1.0), 7, 7).unwrap();
        let img = dsm_indicator(&data, &grid).unwrap();
        for &(ix, iy) in &[(0usize, 0usize), (3, 2), (6, 6), (1, 5)] {
            let (zx, zy) = (grid.x(ix), grid.y(iy));
            let mut total = Complex64::new(0.0, 0.0);
            for (j, xh) in data.observation.iter().enumerate() {
                for (i, th) in data.incident.iter().enumerate() {
                    let p = data.k * (xh[0] * zx + xh[1] * zy - th[0] * zx - th[1] * zy);
                    total += data.values[[i, j]]
                        * Complex64::new(p.cos(), p.sin())
                        * data.weight
                        * data.weight;
                }
            }
            let want = total.norm_sqr();
            let got = img.data[[iy, ix]];
            assert!(
                (got - want).abs() <= 1e-12 * want.max(1e-300),
                "({ix},{iy}): {got} vs {want}"
            );
        }
    }

    #[test]
    fn normalize_and_all_zero() {
        let grid = ImagingGrid::centered(1.0, 4).unwrap();
        let mut img = IndicatorImage {
            grid,
            data: Array2::from_shape_fn((4, 4), |(a, b)| (a * 4 + b) as f64),
        };
        normalize(&mut img).unwrap();
        assert_eq!(img.data[[3, 3]], 1.0);
        let mut zero = IndicatorImage {
            grid,
            data: Array2::zeros((4, 4)),
        };
        assert!(matches!(normalize(&mut zero), Err(ImagingError::AllZero)));
    }

    #[test]
    fn pgm_bytes_are_exact() {
        let grid = ImagingGrid::new((0.0, 1.0), (0.0, 1.0), 2, 2).unwrap();
        let mut data = Array2::zeros((2, 2));
        data[[0, 0]] = 0.0; // bottom-left
        data[[0, 1]] = 0.25;
        data[[1, 0]] = 0.5; // top-left
        data[[1, 1]] = 1.0;
        let img = IndicatorImage { grid, data };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut want = b"P5\n2 2\n65535\n".to_vec();
        // Top row first: 0.5, 1.0 then bottom row 0.0, 0.25; big-endian u16.
        want.extend_from_slice(&32768u16.to_be_bytes());
        want.extend_from_slice(&65535u16.to_be_bytes());
        want.extend_from_slice(&0u16.to_be_bytes());
        want.extend_from_slice(&16384u16.to_be_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn csv_round_trip() {
        let grid = ImagingGrid::new((0.0, 1.0), (0.0, 1.0), 3, 2).unwrap();
        let img = IndicatorImage {
            grid,
            data: Array2::from_shape_fn((2, 3), |(a, b)| a as f64 + b as f64 / 10.0),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&img, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,indicator");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines[2], "0.5,0,0.1");
        assert_eq!(lines[6], "1,1,1.2");
    }

    #[test]
    fn limited_aperture_block_selection() {
        let two_m = 8;
        let entries = Array2::from_shape_fn((two_m, two_m), |(i, j)| {
            Complex64::new(i as f64, j as f64)
        });
        let msr = MsrMatrix { entries, k: 5.0 };
        let data = FarFieldData::limited_aperture(&msr, 3).unwrap();
        assert_eq!(data.values.dim(), (3, 5));
        assert_eq!(data.values[[0, 0]], Complex64::new(0.0, 3.0));
        assert_eq!(data.incident.len(), 3);
        assert_eq!(data.observation.len(), 5);
        let g = DirectionGrid::new(8).unwrap();
        assert_eq!(data.observation[0], g.direction(3));
        assert!(FarFieldData::limited_aperture(&msr, 0).is_err());
        assert!(FarFieldData::limited_aperture(&msr, 8).is_err());
    }
}
