//! Plain-text run configuration: one `key = value` per line, `#` comments.
//!
//! Unknown keys, duplicate keys, malformed lines, and out-of-range values all
//! fail before any work starts, naming the offending key. Defaults target the
//! desk-scale experiment (32-direction grids, 2500 records, a 1/8-width
//! network) so every command finishes on a laptop CPU.

use serde::Serialize;
use std::collections::HashSet;
use std::path::Path;

use crate::msr::AcquisitionMode;
use crate::nn::LossKind;

/// Errors raised while reading or validating a configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line} is not `key = value`: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("duplicate config key {key:?}")]
    DuplicateKey { key: String },
    #[error("config key {key:?}: {message}")]
    InvalidValue { key: String, message: String },
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        message: message.into(),
    }
}

/// Complete run configuration shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    // Physics / acquisition.
    /// Wavenumber.
    pub k: f64,
    /// Directions in the full aperture grid.
    pub two_m: usize,
    /// Rows/columns of the observed aperture (block split index).
    pub m1: usize,
    /// Boundary quadrature nodes per forward solve.
    pub n_nodes: usize,
    /// Acquisition mode of the limited data.
    pub mode: AcquisitionMode,
    /// Observed rows/columns in subsampled mode.
    pub subsample_p: usize,
    /// Relative noise level applied to measured matrices (0 disables).
    pub noise: f64,
    // Dataset.
    /// Records to generate.
    pub count: usize,
    /// Training records (the first `n1`).
    pub n1: usize,
    /// Test records (the next `n2`).
    pub n2: usize,
    /// Fourier modes of the random radial perturbation.
    pub shape_modes: u32,
    /// Mode-decay exponent of the perturbation.
    pub shape_q: f64,
    /// Base-radius range of random shapes.
    pub a0_min: f64,
    pub a0_max: f64,
    // Training.
    pub epochs: usize,
    pub batch: usize,
    pub loss: LossKind,
    /// Seam-regularization weight of the L2 loss.
    pub alpha: f64,
    /// Channel-width multiplier of the reference architecture.
    pub net_scale: f64,
    pub learning_rate: f64,
    /// Standardize network inputs per channel with training-set statistics
    /// (stored in the checkpoint). Far-field values are O(1) at the default
    /// wave number, so this is off unless other `k` regimes demand it.
    pub standardize: bool,
    // Imaging.
    /// Sampling-grid extent (square, `[grid_min, grid_max]^2`).
    pub grid_min: f64,
    pub grid_max: f64,
    /// Grid points per axis.
    pub grid_res: usize,
    /// Half-width of the boundary band used by localization checks.
    pub band: f64,
    // Plumbing.
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
    /// Worker threads for dataset generation (results are identical for any
    /// value).
    pub workers: usize,
    /// Forces single-threaded generation; the pipeline is deterministic
    /// either way, so this is belt and braces.
    pub deterministic: bool,
    /// Report PSNR with the conventional squared-peak numerator instead of
    /// the printed peak-amplitude form.
    pub psnr_conventional: bool,
    /// Output directory for artifacts.
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 5.0,
            two_m: 32,
            m1: 16,
            n_nodes: 64,
            mode: AcquisitionMode::Phased,
            subsample_p: 10,
            noise: 0.0,
            count: 2500,
            n1: 2000,
            n2: 500,
            shape_modes: 5,
            shape_q: 0.0,
            a0_min: 0.5,
            a0_max: 1.5,
            epochs: 30,
            batch: 8,
            loss: LossKind::L2,
            alpha: 1e-3,
            net_scale: 0.125,
            learning_rate: 1e-3,
            standardize: false,
            grid_min: -4.0,
            grid_max: 4.0,
            grid_res: 201,
            band: 0.15,
            seed: 7,
            workers: 1,
            deterministic: false,
            psnr_conventional: false,
            out: "out".into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| bad(key, format!("expected {what}, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, format!("expected a boolean, got {value:?}"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "k" => self.k = parse_num(key, value, "a number")?,
            "two_m" => self.two_m = parse_num(key, value, "an integer")?,
            "m1" => self.m1 = parse_num(key, value, "an integer")?,
            "n_nodes" => self.n_nodes = parse_num(key, value, "an integer")?,
            "mode" => {
                self.mode = match value {
                    "phased" => AcquisitionMode::Phased,
                    "phaseless" => AcquisitionMode::Phaseless,
                    "subsampled" => AcquisitionMode::Subsampled,
                    _ => {
                        return Err(bad(
                            key,
                            format!("expected phased|phaseless|subsampled, got {value:?}"),
                        ))
                    }
                }
            }
            "subsample_p" => self.subsample_p = parse_num(key, value, "an integer")?,
            "noise" => self.noise = parse_num(key, value, "a number")?,
            "count" => self.count = parse_num(key, value, "an integer")?,
            "n1" => self.n1 = parse_num(key, value, "an integer")?,
            "n2" => self.n2 = parse_num(key, value, "an integer")?,
            "shape_modes" => self.shape_modes = parse_num(key, value, "an integer")?,
            "shape_q" => self.shape_q = parse_num(key, value, "a number")?,
            "a0_min" => self.a0_min = parse_num(key, value, "a number")?,
            "a0_max" => self.a0_max = parse_num(key, value, "a number")?,
            "epochs" => self.epochs = parse_num(key, value, "an integer")?,
            "batch" => self.batch = parse_num(key, value, "an integer")?,
            "loss" => {
                self.loss = match value {
                    "l1" => LossKind::L1,
                    "l2" => LossKind::L2,
                    _ => return Err(bad(key, format!("expected l1|l2, got {value:?}"))),
                }
            }
            "alpha" => self.alpha = parse_num(key, value, "a number")?,
            "net_scale" => self.net_scale = parse_num(key, value, "a number")?,
            "learning_rate" => self.learning_rate = parse_num(key, value, "a number")?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "grid_min" => self.grid_min = parse_num(key, value, "a number")?,
            "grid_max" => self.grid_max = parse_num(key, value, "a number")?,
            "grid_res" => self.grid_res = parse_num(key, value, "an integer")?,
            "band" => self.band = parse_num(key, value, "a number")?,
            "seed" => self.seed = parse_num(key, value, "an integer")?,
            "workers" => self.workers = parse_num(key, value, "an integer")?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "psnr_conventional" => self.psnr_conventional = parse_bool(key, value)?,
            "out" => self.out = value.to_string(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Checks every module precondition up front so commands fail before any
    /// work starts, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(bad("k", "must be a positive finite wavenumber"));
        }
        if self.two_m < 2 || self.two_m % 2 != 0 {
            return Err(bad("two_m", "must be even and at least 2"));
        }
        if self.m1 == 0 || self.m1 >= self.two_m {
            return Err(bad("m1", format!("must satisfy 1 <= m1 < two_m = {}", self.two_m)));
        }
        if self.n_nodes < 8 || self.n_nodes % 4 != 0 {
            return Err(bad(
                "n_nodes",
                "must be a multiple of 4 and at least 8 (corner grading splits the boundary into quarters)",
            ));
        }
        let p_cap = self.m1.min(self.two_m - self.m1);
        if self.subsample_p == 0 || self.subsample_p > p_cap {
            return Err(bad(
                "subsample_p",
                format!("must satisfy 1 <= p <= {p_cap} for this two_m/m1"),
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(bad("noise", "must be a nonnegative finite level"));
        }
        if self.count == 0 {
            return Err(bad("count", "must be at least 1"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(bad("n1", "split sizes n1 and n2 must be positive"));
        }
        if self.n1 + self.n2 > self.count {
            return Err(bad(
                "n1",
                format!("n1 + n2 = {} exceeds count = {}", self.n1 + self.n2, self.count),
            ));
        }
        if self.shape_q < 0.0 || !self.shape_q.is_finite() {
            return Err(bad("shape_q", "must be a nonnegative finite exponent"));
        }
        if !(self.a0_min.is_finite() && self.a0_min > 0.0) || self.a0_max < self.a0_min {
            return Err(bad("a0_min", "need 0 < a0_min <= a0_max"));
        }
        if self.epochs == 0 {
            return Err(bad("epochs", "must be at least 1"));
        }
        if self.batch < 2 {
            return Err(bad("batch", "must be at least 2 (batch normalization)"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(bad("alpha", "must be a nonnegative finite weight"));
        }
        if !(self.net_scale.is_finite() && self.net_scale > 0.0) {
            return Err(bad("net_scale", "must be a positive finite multiplier"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad("learning_rate", "must be a positive finite rate"));
        }
        if !(self.grid_min.is_finite() && self.grid_max.is_finite() && self.grid_min < self.grid_max)
        {
            return Err(bad("grid_min", "need grid_min < grid_max, both finite"));
        }
        if self.grid_res < 2 {
            return Err(bad("grid_res", "must be at least 2 points per axis"));
        }
        if !(self.band.is_finite() && self.band > 0.0) {
            return Err(bad("band", "must be a positive finite half-width"));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Effective worker count (the deterministic flag forces one).
    pub fn effective_workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.workers
        }
    }

    /// The dataset-generation subset of this configuration.
    pub fn dataset_config(&self) -> crate::retrieval::DatasetConfig {
        crate::retrieval::DatasetConfig {
            count: self.count,
            k: self.k,
            two_m: self.two_m,
            n_nodes: self.n_nodes,
            shape_modes: self.shape_modes,
            shape_q: self.shape_q,
            a0_min: self.a0_min,
            a0_max: self.a0_max,
        }
    }

    /// The training subset of this configuration.
    pub fn train_config(&self) -> crate::nn::TrainConfig {
        crate::nn::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            loss: self.loss,
            alpha: self.alpha,
            m1: self.m1,
            learning_rate: self.learning_rate,
            seed: self.seed,
            standardize_inputs: self.standardize,
        }
    }
}

/// Parses configuration text (`key = value` lines, `#` comments).
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: idx + 1,
            text: raw.trim().to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey {
                key: key.to_string(),
            });
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
