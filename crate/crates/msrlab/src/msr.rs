//! Multi-static response (MSR) matrices on uniform direction grids.
//!
//! The MSR matrix collects far-field samples for all pairs of incident and
//! observation directions on the uniform grid `theta_j = 2 pi j / 2m`:
//! `F[i][j] = u_inf(x^_j; theta_i)` (row = incident, column = observation).
//!
//! Splitting the grid into a "front" arc (first `m1` directions) and the
//! complementary arc partitions `F` into four blocks
//!
//! ```text
//!         | F11  F12 |        F12 = front incidence, back observation —
//!     F = |          |              the limited-aperture measurement
//!         | F21  F22 |
//! ```
//!
//! and the retrieval network completes the remaining blocks from `F12`
//! (optionally from its moduli, or from a subsampled portion of it).

use crate::forward::{add_noise, BieSolver, ForwardError, WaveContext};
use crate::geometry::BoundaryCurve;
use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MsrError {
    #[error("invalid direction grid: {0}")]
    InvalidGrid(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid subsampling: {0}")]
    InvalidSubsample(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

/// Uniform full-aperture direction grid with an even number of directions,
/// so every direction has its antipode on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionGrid {
    two_m: usize,
}

impl DirectionGrid {
    pub fn new(two_m: usize) -> Result<Self, MsrError> {
        if two_m < 2 || two_m % 2 != 0 {
            return Err(MsrError::InvalidGrid(format!(
                "direction count {two_m} must be even and at least 2"
            )));
        }
        Ok(DirectionGrid { two_m })
    }

    pub fn len(&self) -> usize {
        self.two_m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.two_m as f64
    }

    pub fn direction(&self, j: usize) -> [f64; 2] {
        let a = self.angle(j);
        [a.cos(), a.sin()]
    }

    pub fn directions(&self) -> Vec<[f64; 2]> {
        (0..self.two_m).map(|j| self.direction(j)).collect()
    }
}

/// MSR matrix: `entries[[i, j]] = u_inf(direction j; incident direction i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrMatrix {
    pub entries: Array2<Complex64>,
    pub k: f64,
}

impl MsrMatrix {
    pub fn two_m(&self) -> usize {
        self.entries.nrows()
    }

    /// Adds complex Gaussian noise at exact relative Frobenius level `delta`
    /// (see [`crate::forward::add_noise`]).
    pub fn add_noise(&mut self, delta: f64, seed: u64) -> Result<(), MsrError> {
        let slice = self
            .entries
            .as_slice_mut()
            .expect("MSR entries are contiguous");
        add_noise(slice, delta, seed)?;
        Ok(())
    }
}

/// Assembles the MSR matrix of `curve`: one factorization, `2m` solves, far
/// fields on the full grid.
pub fn assemble_msr(
    curve: &BoundaryCurve,
    ctx: &WaveContext,
    grid: DirectionGrid,
) -> Result<MsrMatrix, MsrError> {
    let solver = BieSolver::new(curve, ctx)?;
    let dirs = grid.directions();
    let mut entries = Array2::zeros((grid.len(), grid.len()));
    for i in 0..grid.len() {
        let sol = solver.solve(dirs[i])?;
        let ff = solver.far_field(&sol, &dirs)?;
        for j in 0..grid.len() {
            entries[[i, j]] = ff.values[j];
        }
    }
    Ok(MsrMatrix { entries, k: ctx.k })
}

/// Four-block partition of an MSR matrix at aperture split `m1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrBlocks {
    pub f11: Array2<Complex64>,
    pub f12: Array2<Complex64>,
    pub f21: Array2<Complex64>,
    pub f22: Array2<Complex64>,
}

/// Splits `F` into blocks after the first `m1` directions.
pub fn partition(msr: &MsrMatrix, m1: usize) -> Result<MsrBlocks, MsrError> {
    let two_m = msr.two_m();
    if m1 == 0 || m1 >= two_m {
        return Err(MsrError::InvalidPartition(format!(
            "split m1 = {m1} must satisfy 1 <= m1 < {two_m}"
        )));
    }
    Ok(MsrBlocks {
        f11: msr.entries.slice(s![..m1, ..m1]).to_owned(),
        f12: msr.entries.slice(s![..m1, m1..]).to_owned(),
        f21: msr.entries.slice(s![m1.., ..m1]).to_owned(),
        f22: msr.entries.slice(s![m1.., m1..]).to_owned(),
    })
}

/// Rebuilds the full matrix from consistent blocks.
pub fn reassemble(blocks: &MsrBlocks, k: f64) -> Result<MsrMatrix, MsrError> {
    let m1 = blocks.f11.nrows();
    let m2 = blocks.f22.nrows();
    let ok = blocks.f11.ncols() == m1
        && blocks.f12.nrows() == m1
        && blocks.f12.ncols() == m2
        && blocks.f21.nrows() == m2
        && blocks.f21.ncols() == m1
        && blocks.f22.ncols() == m2;
    if !ok {
        return Err(MsrError::InvalidPartition(format!(
            "inconsistent block dimensions: F11 {}x{}, F12 {}x{}, F21 {}x{}, F22 {}x{}",
            blocks.f11.nrows(),
            blocks.f11.ncols(),
            blocks.f12.nrows(),
            blocks.f12.ncols(),
            blocks.f21.nrows(),
            blocks.f21.ncols(),
            blocks.f22.nrows(),
            blocks.f22.ncols()
        )));
    }
    let two_m = m1 + m2;
    let mut entries = Array2::zeros((two_m, two_m));
    entries.slice_mut(s![..m1, ..m1]).assign(&blocks.f11);
    entries.slice_mut(s![..m1, m1..]).assign(&blocks.f12);
    entries.slice_mut(s![m1.., ..m1]).assign(&blocks.f21);
    entries.slice_mut(s![m1.., m1..]).assign(&blocks.f22);
    Ok(MsrMatrix { entries, k })
}

/// Acquisition mode of the limited-aperture measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionMode {
    /// Full complex `F12` block.
    Phased,
    /// Entrywise moduli `|F12|`.
    Phaseless,
    /// Complex `F12` restricted to `p` rows and `p` columns.
    Subsampled,
}

/// The measured data handed to the retrieval network.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitedInput {
    Phased {
        f12: Array2<Complex64>,
    },
    Phaseless {
        f12_abs: Array2<f64>,
    },
    Subsampled {
        /// Selected rows/columns of `F12`, each sorted ascending.
        rows: Vec<usize>,
        cols: Vec<usize>,
        /// The `p x p` observed submatrix.
        entries: Array2<Complex64>,
        /// Dimensions of the full `F12` block.
        full_dims: (usize, usize),
    },
}

impl LimitedInput {
    pub fn mode(&self) -> AcquisitionMode {
        match self {
            LimitedInput::Phased { .. } => AcquisitionMode::Phased,
            LimitedInput::Phaseless { .. } => AcquisitionMode::Phaseless,
            LimitedInput::Subsampled { .. } => AcquisitionMode::Subsampled,
        }
    }
}

/// Deterministic sorted draw of `p` distinct rows (of `m_rows`) and `p`
/// distinct columns (of `m_cols`). Depends only on the arguments, so every
/// sample of a dataset built with the same seed observes the same entries.
pub fn subsample_indices(
    m_rows: usize,
    m_cols: usize,
    p: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), MsrError> {
    if p == 0 || p > m_rows || p > m_cols {
        return Err(MsrError::InvalidSubsample(format!(
            "p = {p} must satisfy 1 <= p <= min({m_rows}, {m_cols})"
        )));
    }
    let mut rng = crate::rng::substream(seed, 0);
    let mut rows: Vec<usize> = (0..m_rows).collect();
    rows.shuffle(&mut rng);
    rows.truncate(p);
    rows.sort_unstable();
    let mut cols: Vec<usize> = (0..m_cols).collect();
    cols.shuffle(&mut rng);
    cols.truncate(p);
    cols.sort_unstable();
    Ok((rows, cols))
}

/// Extracts the limited-aperture measurement from a full MSR matrix.
/// For [`AcquisitionMode::Subsampled`], the observed rows/columns are drawn
/// from `seed` only (`p` is ignored otherwise).
pub fn make_limited_input(
    msr: &MsrMatrix,
    m1: usize,
    mode: AcquisitionMode,
    p: usize,
    seed: u64,
) -> Result<LimitedInput, MsrError> {
    let blocks = partition(msr, m1)?;
    match mode {
        AcquisitionMode::Phased => Ok(LimitedInput::Phased { f12: blocks.f12 }),
        AcquisitionMode::Phaseless => Ok(LimitedInput::Phaseless {
            f12_abs: blocks.f12.mapv(|z| z.norm()),
        }),
        AcquisitionMode::Subsampled => {
            let (rows, cols) = subsample_indices(blocks.f12.nrows(), blocks.f12.ncols(), p, seed)?;
            let mut entries = Array2::zeros((p, p));
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    entries[[a, b]] = blocks.f12[[i, j]];
                }
            }
            Ok(LimitedInput::Subsampled {
                rows,
                cols,
                entries,
                full_dims: (blocks.f12.nrows(), blocks.f12.ncols()),
            })
        }
    }
}

/// Combines predicted blocks with the measured data into a full matrix:
/// measurements take precedence wherever they determine entries exactly
/// (the whole `F12` block when phased, the observed entries when
/// subsampled; phaseless measurements fix no complex entry).
pub fn assemble_retrieved(
    input: &LimitedInput,
    predicted: &MsrBlocks,
    k: f64,
) -> Result<MsrMatrix, MsrError> {
    let mut blocks = predicted.clone();
    match input {
        LimitedInput::Phased { f12 } => {
            if f12.dim() != blocks.f12.dim() {
                return Err(MsrError::InvalidPartition(format!(
                    "measured F12 is {:?}, predicted {:?}",
                    f12.dim(),
                    blocks.f12.dim()
                )));
            }
            blocks.f12.assign(f12);
        }
        LimitedInput::Phaseless { .. } => {}
        LimitedInput::Subsampled {
            rows,
            cols,
            entries,
            full_dims,
        } => {
            if *full_dims != blocks.f12.dim() {
                return Err(MsrError::InvalidPartition(format!(
                    "measured F12 is {:?}, predicted {:?}",
                    full_dims,
                    blocks.f12.dim()
                )));
            }
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    blocks.f12[[i, j]] = entries[[a, b]];
                }
            }
        }
    }
    reassemble(&blocks, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_msr() -> MsrMatrix {
        // Deterministic synthetic matrix, not from a solve.
        let two_m = 8;
        let entries = Array2::from_shape_fn((two_m, two_m), |(i, j)| {
            Complex64::new(i as f64 + 0.25, j as f64 - 1.5)
        });
        MsrMatrix { entries, k: 5.0 }
    }

    #[test]
    fn grid_layout() {
        let g = DirectionGrid::new(8).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.direction(0), [1.0, 0.0]);
        let d = g.direction(2);
        assert!((d[0]).abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        // Antipode property: direction(j + m) = -direction(j).
        for j in 0..8 {
            let a = g.direction(j);
            let b = g.direction((j + 4) % 8);
            assert!((a[0] + b[0]).abs() < 1e-14 && (a[1] + b[1]).abs() < 1e-14);
        }
        assert!(DirectionGrid::new(7).is_err());
        assert!(DirectionGrid::new(0).is_err());
    }

    /// Far-field reciprocity: u_inf(x^; theta) = u_inf(-theta; -x^), which on
    /// the antipodal grid reads F[i][j] = F[(j+m) % 2m][(i+m) % 2m].
    #[test]
    fn msr_satisfies_reciprocity() {
        let curve = BoundaryCurve::kite([0.0, 0.0]);
        let ctx = WaveContext::new(5.0, 64).unwrap();
        let grid = DirectionGrid::new(16).unwrap();
        let msr = assemble_msr(&curve, &ctx, grid).unwrap();
        let m = 8;
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let a = msr.entries[[i, j]];
                let b = msr.entries[[(j + m) % 16, (i + m) % 16]];
                worst = worst.max((a - b).norm());
            }
        }
        let scale = msr.entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // Reciprocity is exact in the continuum; the discrete violation is a
        // direct readout of quadrature error (~3e-9 at 64 nodes for the kite).
        assert!(worst / scale < 1e-8, "reciprocity violation {}", worst / scale);
    }

    /// Translating the obstacle by d multiplies each entry by
    /// exp(i k (theta_i - x^_j) . d).
    #[test]
    fn msr_translation_phase() {
        let ctx = WaveContext::new(5.0, 64).unwrap();
        let grid = DirectionGrid::new(8).unwrap();
        let d = [0.35, -0.55];
        let base = assemble_msr(&BoundaryCurve::kite([0.0, 0.0]), &ctx, grid).unwrap();
        let moved = assemble_msr(&BoundaryCurve::kite(d), &ctx, grid).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                let th = grid.direction(i);
                let xh = grid.direction(j);
                let phase = ctx.k * ((th[0] - xh[0]) * d[0] + (th[1] - xh[1]) * d[1]);
                let predicted = base.entries[[i, j]] * Complex64::new(phase.cos(), phase.sin());
                worst = worst.max((predicted - moved.entries[[i, j]]).norm());
            }
        }
        let scale = base.entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst / scale < 1e-10, "translation violation {}", worst / scale);
    }

    #[test]
    fn partition_and_reassemble_round_trip() {
        let msr = small_msr();
        for m1 in [1, 3, 4, 7] {
            let blocks = partition(&msr, m1).unwrap();
            assert_eq!(blocks.f11.dim(), (m1, m1));
            assert_eq!(blocks.f12.dim(), (m1, 8 - m1));
            assert_eq!(blocks.f21.dim(), (8 - m1, m1));
            assert_eq!(blocks.f22.dim(), (8 - m1, 8 - m1));
            let back = reassemble(&blocks, msr.k).unwrap();
            assert_eq!(back.entries, msr.entries);
        }
        assert!(partition(&msr, 0).is_err());
        assert!(partition(&msr, 8).is_err());
    }

    #[test]
    fn reassemble_rejects_mismatched_blocks() {
        let msr = small_msr();
        let mut blocks = partition(&msr, 4).unwrap();
        blocks.f21 = Array2::zeros((3, 4));
        assert!(reassemble(&blocks, msr.k).is_err());
    }

    #[test]
    fn limited_inputs() {
        let msr = small_msr();
        let blocks = partition(&msr, 4).unwrap();

        let phased = make_limited_input(&msr, 4, AcquisitionMode::Phased, 0, 1).unwrap();
        assert_eq!(phased, LimitedInput::Phased { f12: blocks.f12.clone() });

        let phaseless = make_limited_input(&msr, 4, AcquisitionMode::Phaseless, 0, 1).unwrap();
        match &phaseless {
            LimitedInput::Phaseless { f12_abs } => {
                assert_eq!(f12_abs.dim(), (4, 4));
                assert_eq!(f12_abs[[1, 2]], blocks.f12[[1, 2]].norm());
            }
            _ => panic!("wrong variant"),
        }

        let sub = make_limited_input(&msr, 4, AcquisitionMode::Subsampled, 3, 7).unwrap();
        match &sub {
            LimitedInput::Subsampled {
                rows,
                cols,
                entries,
                full_dims,
            } => {
                assert_eq!(rows.len(), 3);
                assert_eq!(cols.len(), 3);
                assert!(rows.windows(2).all(|w| w[0] < w[1]));
                assert!(cols.windows(2).all(|w| w[0] < w[1]));
                assert_eq!(*full_dims, (4, 4));
                assert_eq!(entries[[0, 0]], blocks.f12[[rows[0], cols[0]]]);
            }
            _ => panic!("wrong variant"),
        }
        // Same seed, same indices; different seed, (almost surely) different.
        let sub2 = make_limited_input(&msr, 4, AcquisitionMode::Subsampled, 3, 7).unwrap();
        assert_eq!(sub, sub2);

        assert!(make_limited_input(&msr, 4, AcquisitionMode::Subsampled, 5, 7).is_err());
        assert!(make_limited_input(&msr, 4, AcquisitionMode::Subsampled, 0, 7).is_err());
    }

    /// Phaseless data is invariant under a global phase factor.
    #[test]
    fn phaseless_is_phase_invariant() {
        let msr = small_msr();
        let mut rotated = msr.clone();
        let phase = Complex64::from_polar(1.0, 1.234);
        rotated.entries.mapv_inplace(|z| z * phase);
        let a = make_limited_input(&msr, 4, AcquisitionMode::Phaseless, 0, 1).unwrap();
        let b = make_limited_input(&rotated, 4, AcquisitionMode::Phaseless, 0, 1).unwrap();
        match (&a, &b) {
            (LimitedInput::Phaseless { f12_abs: fa }, LimitedInput::Phaseless { f12_abs: fb }) => {
                let worst = fa
                    .iter()
                    .zip(fb.iter())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(worst < 1e-12);
            }
            _ => panic!("wrong variants"),
        }
    }

    #[test]
    fn assemble_retrieved_respects_measurements() {
        let msr = small_msr();
        let zeros = MsrBlocks {
            f11: Array2::zeros((4, 4)),
            f12: Array2::zeros((4, 4)),
            f21: Array2::zeros((4, 4)),
            f22: Array2::zeros((4, 4)),
        };

        let phased = make_limited_input(&msr, 4, AcquisitionMode::Phased, 0, 1).unwrap();
        let full = assemble_retrieved(&phased, &zeros, msr.k).unwrap();
        assert_eq!(full.entries[[0, 5]], msr.entries[[0, 5]]); // measured F12 kept
        assert_eq!(full.entries[[5, 0]], Complex64::new(0.0, 0.0)); // predicted F21

        let sub = make_limited_input(&msr, 4, AcquisitionMode::Subsampled, 2, 3).unwrap();
        let full = assemble_retrieved(&sub, &zeros, msr.k).unwrap();
        if let LimitedInput::Subsampled { rows, cols, .. } = &sub {
            assert_eq!(
                full.entries[[rows[0], 4 + cols[0]]],
                msr.entries[[rows[0], 4 + cols[0]]]
            );
        }

        let phaseless = make_limited_input(&msr, 4, AcquisitionMode::Phaseless, 0, 1).unwrap();
        let full = assemble_retrieved(&phaseless, &zeros, msr.k).unwrap();
        assert!(full.entries.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn noise_wrapper_reaches_entries() {
        let mut msr = small_msr();
        let orig = msr.clone();
        msr.add_noise(0.05, 3).unwrap();
        let num: f64 = (&msr.entries - &orig.entries)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = orig.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((num / den - 0.05).abs() < 1e-13);
    }
}
