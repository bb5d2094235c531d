//! The experiment pipeline: dataset generation and binary I/O, training-pair
//! construction for all acquisition modes, model fitting, retrieval of full
//! response matrices from limited data, the nearest-sample baseline, and the
//! evaluation metrics.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::bytesio::{put_f64, put_u32, put_u64, Reader};
use crate::forward::WaveContext;
use crate::geometry::{decode_shape_from, encode_shape, random_shape, BoundaryCurve};
use crate::msr::{
    assemble_msr, assemble_retrieved, make_limited_input, partition, AcquisitionMode,
    DirectionGrid, LimitedInput, MsrMatrix,
};
use crate::nn::{train, CheckpointMeta, Network, NetworkSpec, Tensor, TrainConfig, TrainReport};
use crate::rng::mix_seed;

/// Magic bytes of the dataset format.
pub const DATASET_MAGIC: &[u8; 4] = b"MSRD";
/// Current dataset format version.
pub const DATASET_VERSION: u32 = 1;

/// Errors raised by the retrieval pipeline.
#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A forward solve failed while generating the dataset; the index makes
    /// the run resumable.
    #[error("dataset generation failed at record {index}: {message}")]
    Generation { index: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Forward(#[from] crate::forward::ForwardError),
    #[error(transparent)]
    Msr(#[from] crate::msr::MsrError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),
    #[error("manifest i/o: {0}")]
    Json(#[from] serde_json::Error),
    #[error("acquisition mode mismatch: model is {model:?}, input is {input:?}")]
    ModeMismatch {
        model: AcquisitionMode,
        input: AcquisitionMode,
    },
}

/// Generation parameters recorded in the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Number of records.
    pub count: usize,
    /// Wavenumber shared by every record.
    pub k: f64,
    /// Directions in the full aperture (rows/columns of each matrix).
    pub two_m: usize,
    /// Boundary quadrature nodes per forward solve.
    pub n_nodes: usize,
    /// Fourier modes of the random star-like radial perturbation.
    pub shape_modes: u32,
    /// Mode-decay exponent of the perturbation.
    pub shape_q: f64,
    /// Base-radius range (uniform draw).
    pub a0_min: f64,
    pub a0_max: f64,
}

/// One generated sample: the obstacle and its multi-static response matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub shape: BoundaryCurve,
    pub matrix: MsrMatrix,
}

/// An in-memory dataset; every record shares `k` and `two_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub k: f64,
    pub two_m: usize,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Sidecar JSON manifest describing how a dataset file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    pub master_seed: u64,
    /// FNV-1a (64-bit) digest of the dataset file bytes, hex-encoded.
    pub checksum_fnv1a64: String,
    pub config: DatasetConfig,
    /// `"complete"`, or `"failed"` with [`DatasetManifest::failed_index`]
    /// set — reruns can resume from that record.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_index: Option<usize>,
}

impl DatasetManifest {
    pub fn completed(config: &DatasetConfig, master_seed: u64, checksum: u64) -> Self {
        DatasetManifest {
            count: config.count,
            master_seed,
            checksum_fnv1a64: format!("{checksum:016x}"),
            config: config.clone(),
            status: "complete".into(),
            failed_index: None,
        }
    }

    pub fn failed(config: &DatasetConfig, master_seed: u64, index: usize) -> Self {
        DatasetManifest {
            count: config.count,
            master_seed,
            checksum_fnv1a64: String::new(),
            config: config.clone(),
            status: "failed".into(),
            failed_index: Some(index),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), RetrievalError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// 64-bit FNV-1a digest (dataset integrity checksum).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn generate_record(config: &DatasetConfig, master_seed: u64, index: usize) -> Result<DatasetRecord, RetrievalError> {
    let seed = mix_seed(master_seed, index as u64);
    let fail = |message: String| RetrievalError::Generation { index, message };
    let star = random_shape(
        seed,
        config.shape_modes,
        config.shape_q,
        (config.a0_min, config.a0_max),
        [0.0, 0.0],
    )
    .map_err(|e| fail(e.to_string()))?;
    let shape = BoundaryCurve::Star(star);
    let ctx = WaveContext::new(config.k, config.n_nodes).map_err(|e| fail(e.to_string()))?;
    let grid = DirectionGrid::new(config.two_m).map_err(|e| fail(e.to_string()))?;
    let matrix = assemble_msr(&shape, &ctx, grid).map_err(|e| fail(e.to_string()))?;
    Ok(DatasetRecord { shape, matrix })
}

/// Generates `config.count` records. Record `i` is built entirely from the
/// substream keyed by `(master_seed, i)`, so the output is bit-identical for
/// any worker count; with `workers > 1` records are computed in a scoped
/// thread pool. On the first failing record the error reports its index so a
/// failure manifest can be written.
pub fn generate_dataset(
    config: &DatasetConfig,
    master_seed: u64,
    workers: usize,
) -> Result<Dataset, RetrievalError> {
    if config.count == 0 {
        return Err(RetrievalError::InvalidParameter(
            "dataset count must be at least 1".into(),
        ));
    }
    if workers == 0 {
        return Err(RetrievalError::InvalidParameter(
            "workers must be at least 1".into(),
        ));
    }
    let results: Vec<Result<DatasetRecord, RetrievalError>> = if workers == 1 {
        (0..config.count)
            .map(|i| generate_record(config, master_seed, i))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| RetrievalError::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..config.count)
                .into_par_iter()
                .map(|i| generate_record(config, master_seed, i))
                .collect()
        })
    };
    // Report the lowest failing index regardless of completion order.
    let mut records = Vec::with_capacity(config.count);
    for r in results {
        records.push(r?);
    }
    Ok(Dataset {
        k: config.k,
        two_m: config.two_m,
        records,
    })
}

/// Serializes a dataset: header `{magic MSRD, version u32 = 1, k f64,
/// two_m u32, count u64}`, then per record the geometry shape record followed
/// by the matrix as `two_m x two_m` row-major entries, each `(re, im)` as two
/// little-endian `f64`. Returns the FNV-1a checksum of the written bytes.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<u64, RetrievalError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut buf, DATASET_VERSION);
    put_f64(&mut buf, ds.k);
    put_u32(&mut buf, ds.two_m as u32);
    put_u64(&mut buf, ds.records.len() as u64);
    for rec in &ds.records {
        if rec.matrix.two_m() != ds.two_m {
            return Err(RetrievalError::InvalidParameter(format!(
                "record matrix is {} x {}, dataset two_m is {}",
                rec.matrix.two_m(),
                rec.matrix.two_m(),
                ds.two_m
            )));
        }
        encode_shape(&rec.shape, &mut buf);
        for i in 0..ds.two_m {
            for j in 0..ds.two_m {
                let z = rec.matrix.entries[[i, j]];
                put_f64(&mut buf, z.re);
                put_f64(&mut buf, z.im);
            }
        }
    }
    std::fs::write(path, &buf)?;
    Ok(fnv1a64(&buf))
}

/// Reads a dataset file written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset, RetrievalError> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let trunc = |what: &str| RetrievalError::MalformedDataset(format!("truncated {what}"));
    let magic = r.bytes(4).ok_or_else(|| trunc("magic"))?;
    if magic != DATASET_MAGIC {
        return Err(RetrievalError::MalformedDataset(format!(
            "bad magic {magic:?}"
        )));
    }
    let version = r.u32().ok_or_else(|| trunc("version"))?;
    if version != DATASET_VERSION {
        return Err(RetrievalError::MalformedDataset(format!(
            "unsupported version {version}"
        )));
    }
    let k = r.f64().ok_or_else(|| trunc("k"))?;
    if !(k.is_finite() && k > 0.0) {
        return Err(RetrievalError::MalformedDataset(format!(
            "non-physical wavenumber {k}"
        )));
    }
    let two_m = r.u32().ok_or_else(|| trunc("two_m"))? as usize;
    if two_m < 2 || two_m % 2 != 0 {
        return Err(RetrievalError::MalformedDataset(format!(
            "direction count {two_m} must be even and at least 2"
        )));
    }
    let count = r.u64().ok_or_else(|| trunc("count"))? as usize;
    let matrix_bytes = two_m * two_m * 16;
    if count.saturating_mul(matrix_bytes) > bytes.len() {
        return Err(trunc("records"));
    }
    let mut records = Vec::with_capacity(count);
    for idx in 0..count {
        let shape = decode_shape_from(&mut r).map_err(|e| {
            RetrievalError::MalformedDataset(format!("record {idx} shape: {e}"))
        })?;
        let mut entries = Array2::zeros((two_m, two_m));
        for i in 0..two_m {
            for j in 0..two_m {
                let re = r.f64().ok_or_else(|| trunc("matrix entry"))?;
                let im = r.f64().ok_or_else(|| trunc("matrix entry"))?;
                entries[[i, j]] = Complex64::new(re, im);
            }
        }
        records.push(DatasetRecord {
            shape,
            matrix: MsrMatrix { entries, k },
        });
    }
    if r.remaining() != 0 {
        return Err(RetrievalError::MalformedDataset(format!(
            "{} trailing bytes",
            r.remaining()
        )));
    }
    Ok(Dataset { k, two_m, records })
}

/// Train/test split: the first `n1` records train, the next `n2` test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n1: usize,
    pub n2: usize,
}

impl SplitSpec {
    pub fn new(n1: usize, n2: usize) -> Result<Self, RetrievalError> {
        if n1 == 0 || n2 == 0 {
            return Err(RetrievalError::InvalidParameter(format!(
                "split sizes must be positive (n1 = {n1}, n2 = {n2})"
            )));
        }
        Ok(SplitSpec { n1, n2 })
    }

    pub fn validate_against(&self, count: usize) -> Result<(), RetrievalError> {
        if self.n1 + self.n2 > count {
            return Err(RetrievalError::InvalidParameter(format!(
                "split n1 + n2 = {} exceeds record count {count}",
                self.n1 + self.n2
            )));
        }
        Ok(())
    }

    /// Indices of the test records.
    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.n1..self.n1 + self.n2
    }
}

/// Sample-major training pairs for one acquisition mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    /// `(n, h, w, c)` inputs; layout depends on the mode.
    pub inputs: Tensor,
    /// `(n, 2m, 2m, 2)` targets: channel 0 real, channel 1 imaginary.
    pub targets: Tensor,
    pub mode: AcquisitionMode,
    pub m1: usize,
    pub two_m: usize,
    /// Fixed subsample indices (empty unless subsampled).
    pub subsample_rows: Vec<usize>,
    pub subsample_cols: Vec<usize>,
    /// Seed the indices were drawn from (recorded for re-use at eval time).
    pub subsample_seed: u64,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Converts one limited measurement into a network input sample.
///
/// Phased data becomes `(1, m1, 2m - m1, 2)` with real/imaginary channels,
/// phaseless data `(1, m1, 2m - m1, 1)` holding entrywise moduli, and
/// subsampled data `(1, p, p, 2)` holding the observed complex entries.
pub fn input_tensor(input: &LimitedInput) -> Result<Tensor, RetrievalError> {
    let t = match input {
        LimitedInput::Phased { f12 } => {
            let (h, w) = f12.dim();
            let mut t = Tensor::zeros([1, h, w, 2]);
            for i in 0..h {
                for j in 0..w {
                    t.set(0, i, j, 0, f12[[i, j]].re);
                    t.set(0, i, j, 1, f12[[i, j]].im);
                }
            }
            t
        }
        LimitedInput::Phaseless { f12_abs } => {
            let (h, w) = f12_abs.dim();
            let mut t = Tensor::zeros([1, h, w, 1]);
            for i in 0..h {
                for j in 0..w {
                    t.set(0, i, j, 0, f12_abs[[i, j]]);
                }
            }
            t
        }
        LimitedInput::Subsampled { entries, .. } => {
            let (h, w) = entries.dim();
            let mut t = Tensor::zeros([1, h, w, 2]);
            for i in 0..h {
                for j in 0..w {
                    t.set(0, i, j, 0, entries[[i, j]].re);
                    t.set(0, i, j, 1, entries[[i, j]].im);
                }
            }
            t
        }
    };
    Ok(t)
}

/// Full response matrix as a `(1, 2m, 2m, 2)` target tensor.
pub fn target_tensor(msr: &MsrMatrix) -> Tensor {
    let n = msr.two_m();
    let mut t = Tensor::zeros([1, n, n, 2]);
    for i in 0..n {
        for j in 0..n {
            t.set(0, i, j, 0, msr.entries[[i, j]].re);
            t.set(0, i, j, 1, msr.entries[[i, j]].im);
        }
    }
    t
}

/// Reads sample `b` of a `(batch, n, n, 2)` tensor back into a complex
/// matrix.
pub fn tensor_to_matrix(t: &Tensor, b: usize, k: f64) -> Result<MsrMatrix, RetrievalError> {
    let [batch, h, w, c] = t.shape();
    if b >= batch || h != w || c != 2 {
        return Err(RetrievalError::InvalidParameter(format!(
            "expected sample {b} of a (n, n, 2) tensor, got shape {:?}",
            t.shape()
        )));
    }
    let mut entries = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            entries[[i, j]] = Complex64::new(t.get(b, i, j, 0), t.get(b, i, j, 1));
        }
    }
    Ok(MsrMatrix { entries, k })
}

/// Builds (input, target) pairs for every record of a dataset.
///
/// `subsample_p` and `seed` only matter in subsampled mode, where one fixed
/// set of row/column indices — drawn once from `seed` — is shared by every
/// record (and later stored in the model checkpoint).
pub fn make_pairs(
    ds: &Dataset,
    m1: usize,
    mode: AcquisitionMode,
    subsample_p: usize,
    seed: u64,
) -> Result<PairSet, RetrievalError> {
    if ds.is_empty() {
        return Err(RetrievalError::InvalidParameter(
            "dataset has no records".into(),
        ));
    }
    let n = ds.len();
    let mut inputs: Option<Tensor> = None;
    let mut targets = Tensor::zeros([n, ds.two_m, ds.two_m, 2]);
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for (idx, rec) in ds.records.iter().enumerate() {
        let limited = make_limited_input(&rec.matrix, m1, mode, subsample_p, seed)?;
        if idx == 0 {
            if let LimitedInput::Subsampled {
                rows: r, cols: c, ..
            } = &limited
            {
                rows = r.clone();
                cols = c.clone();
            }
        }
        let x = input_tensor(&limited)?;
        let stacked = inputs.get_or_insert_with(|| {
            Tensor::zeros([n, x.height(), x.width(), x.channels()])
        });
        stacked.sample_mut(idx).copy_from_slice(x.sample(0));
        targets
            .sample_mut(idx)
            .copy_from_slice(target_tensor(&rec.matrix).sample(0));
    }
    Ok(PairSet {
        inputs: inputs.expect("dataset is nonempty"),
        targets,
        mode,
        m1,
        two_m: ds.two_m,
        subsample_rows: rows,
        subsample_cols: cols,
        subsample_seed: seed,
    })
}

/// A trained retrieval model plus its acquisition metadata and loss history.
#[derive(Debug, Clone)]
pub struct RetrievalModel {
    pub network: Network,
    pub meta: CheckpointMeta,
    pub history: TrainReport,
}

impl RetrievalModel {
    /// Persists the network and metadata as a checkpoint file.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        self.network.save_checkpoint(path, &self.meta)?;
        Ok(())
    }

    /// Loads a checkpoint; the loss history is not stored on disk.
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let (network, meta) = Network::load_checkpoint(path)?;
        Ok(RetrievalModel {
            network,
            meta,
            history: TrainReport {
                epoch_losses: Vec::new(),
                steps: 0,
            },
        })
    }
}

/// Trains a fresh network of the reference architecture on the first
/// `split.n1` pairs.
pub fn fit_model(
    pairs: &PairSet,
    split: &SplitSpec,
    net_scale: f64,
    cfg: &TrainConfig,
) -> Result<RetrievalModel, RetrievalError> {
    split.validate_against(pairs.len())?;
    if cfg.loss == crate::nn::LossKind::L2 && cfg.m1 != pairs.m1 {
        return Err(RetrievalError::InvalidParameter(format!(
            "loss m1 = {} does not match pair m1 = {}",
            cfg.m1, pairs.m1
        )));
    }
    let train_idx: Vec<usize> = (0..split.n1).collect();
    let mut train_x = Tensor::gather(&pairs.inputs, &train_idx);
    let train_y = Tensor::gather(&pairs.targets, &train_idx);
    let standardization = if cfg.standardize_inputs {
        let (mean, std) = channel_statistics(&train_x);
        standardize(&mut train_x, &mean, &std);
        Some((mean, std))
    } else {
        None
    };
    let in_shape = [
        pairs.inputs.height(),
        pairs.inputs.width(),
        pairs.inputs.channels(),
    ];
    let out_shape = [pairs.two_m, pairs.two_m, 2];
    let spec = NetworkSpec::reference(in_shape, out_shape, net_scale)?;
    let mut network = Network::init(spec, cfg.seed)?;
    let history = train(&mut network, &train_x, &train_y, cfg)?;
    let mut meta = match pairs.mode {
        AcquisitionMode::Phased => CheckpointMeta::full_block(
            AcquisitionMode::Phased,
            pairs.two_m as u32,
            pairs.m1 as u32,
        ),
        AcquisitionMode::Phaseless => CheckpointMeta::full_block(
            AcquisitionMode::Phaseless,
            pairs.two_m as u32,
            pairs.m1 as u32,
        ),
        AcquisitionMode::Subsampled => CheckpointMeta::subsampled(
            pairs.two_m as u32,
            pairs.m1 as u32,
            pairs.subsample_rows.iter().map(|&v| v as u32).collect(),
            pairs.subsample_cols.iter().map(|&v| v as u32).collect(),
        ),
    };
    if let Some((mean, std)) = standardization {
        meta.input_mean = mean;
        meta.input_std = std;
    }
    Ok(RetrievalModel {
        network,
        meta,
        history,
    })
}

/// Per-channel mean and population standard deviation over every sample and
/// spatial position of `t`. Degenerate (constant) channels fall back to unit
/// scale so the affine transform stays invertible.
fn channel_statistics(t: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let c = t.channels();
    let n = (t.data().len() / c) as f64;
    let mut mean = vec![0.0; c];
    for (i, &v) in t.data().iter().enumerate() {
        mean[i % c] += v;
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; c];
    for (i, &v) in t.data().iter().enumerate() {
        let d = v - mean[i % c];
        var[i % c] += d * d;
    }
    let std = var
        .iter()
        .map(|&v| {
            let s = (v / n).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Applies `x -> (x - mean_c) / std_c` per channel in place; `(n, h, w, c)`
/// layout keeps channels contiguous in the last axis.
fn standardize(t: &mut Tensor, mean: &[f64], std: &[f64]) {
    let c = t.channels();
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        *v = (*v - mean[ch]) / std[ch];
    }
}

/// Completes a limited measurement into a full response matrix: network
/// inference provides the predicted blocks, then the measured entries
/// overwrite the predictions wherever the data determines them exactly.
pub fn retrieve(
    model: &RetrievalModel,
    input: &LimitedInput,
    k: f64,
) -> Result<MsrMatrix, RetrievalError> {
    if input.mode() != model.meta.mode {
        return Err(RetrievalError::ModeMismatch {
            model: model.meta.mode,
            input: input.mode(),
        });
    }
    if let LimitedInput::Subsampled { rows, cols, .. } = input {
        let meta_rows: Vec<usize> = model.meta.row_indices.iter().map(|&v| v as usize).collect();
        let meta_cols: Vec<usize> = model.meta.col_indices.iter().map(|&v| v as usize).collect();
        if *rows != meta_rows || *cols != meta_cols {
            return Err(RetrievalError::InvalidParameter(
                "subsample indices do not match the model checkpoint".into(),
            ));
        }
    }
    let mut x = input_tensor(input)?;
    let expected = model.meta.input_shape();
    if [x.height(), x.width(), x.channels()] != expected {
        return Err(RetrievalError::InvalidParameter(format!(
            "input sample shape {:?} does not match the model ({:?})",
            [x.height(), x.width(), x.channels()],
            expected
        )));
    }
    if !model.meta.input_mean.is_empty() {
        standardize(&mut x, &model.meta.input_mean, &model.meta.input_std);
    }
    let y = model.network.forward_infer(&x)?;
    let predicted = tensor_to_matrix(&y, 0, k)?;
    let blocks = partition(&predicted, model.meta.m1 as usize)?;
    Ok(assemble_retrieved(input, &blocks, k)?)
}

/// Retrieves every test record of a dataset under a trained model, returning
/// `(truths, retrievals)` in record order. Subsampled inputs are rebuilt from
/// the seed recorded when the training pairs were made, so they observe the
/// same entries the model was trained on.
pub fn retrieve_test_set(
    model: &RetrievalModel,
    ds: &Dataset,
    split: &SplitSpec,
    subsample_seed: u64,
) -> Result<(Vec<MsrMatrix>, Vec<MsrMatrix>), RetrievalError> {
    split.validate_against(ds.len())?;
    let mut truths = Vec::with_capacity(split.n2);
    let mut retrieved = Vec::with_capacity(split.n2);
    for idx in split.test_range() {
        let rec = &ds.records[idx];
        let limited = make_limited_input(
            &rec.matrix,
            model.meta.m1 as usize,
            model.meta.mode,
            model.meta.subsample_p as usize,
            subsample_seed,
        )?;
        retrieved.push(retrieve(model, &limited, ds.k)?);
        truths.push(rec.matrix.clone());
    }
    Ok((truths, retrieved))
}

/// Finds the training sample whose limited measurement is closest to the
/// query, returning its index and full matrix. Distances are squared
/// Frobenius norms over the measured quantities — complex `F12` entries when
/// phased, entrywise moduli when phaseless, the observed `p x p` entries when
/// subsampled. Ties break toward the lowest index.
pub fn nearest_sample<'a>(
    input: &LimitedInput,
    candidates: &'a [MsrMatrix],
    m1: usize,
) -> Result<(usize, &'a MsrMatrix), RetrievalError> {
    if candidates.is_empty() {
        return Err(RetrievalError::InvalidParameter(
            "nearest-sample search needs a nonempty training set".into(),
        ));
    }
    let mut best = (0usize, f64::INFINITY);
    for (idx, cand) in candidates.iter().enumerate() {
        let blocks = partition(cand, m1)?;
        let dist = match input {
            LimitedInput::Phased { f12 } => {
                if f12.dim() != blocks.f12.dim() {
                    return Err(RetrievalError::InvalidParameter(
                        "candidate F12 extents differ from the query".into(),
                    ));
                }
                f12.iter()
                    .zip(blocks.f12.iter())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
            }
            LimitedInput::Phaseless { f12_abs } => {
                if f12_abs.dim() != blocks.f12.dim() {
                    return Err(RetrievalError::InvalidParameter(
                        "candidate F12 extents differ from the query".into(),
                    ));
                }
                f12_abs
                    .iter()
                    .zip(blocks.f12.iter())
                    .map(|(a, b)| {
                        let d = a - b.norm();
                        d * d
                    })
                    .sum::<f64>()
            }
            LimitedInput::Subsampled {
                rows,
                cols,
                entries,
                full_dims,
            } => {
                if *full_dims != blocks.f12.dim() {
                    return Err(RetrievalError::InvalidParameter(
                        "candidate F12 extents differ from the query".into(),
                    ));
                }
                let mut acc = 0.0;
                for (a, &i) in rows.iter().enumerate() {
                    for (b, &j) in cols.iter().enumerate() {
                        acc += (entries[[a, b]] - blocks.f12[[i, j]]).norm_sqr();
                    }
                }
                acc
            }
        };
        if dist < best.1 {
            best = (idx, dist);
        }
    }
    Ok((best.0, &candidates[best.0]))
}

/// Which scalar is extracted from each complex entry when a metric formula
/// is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricVariant {
    Real,
    Imag,
    Norm,
}

impl MetricVariant {
    fn diff_sq(self, a: Complex64, b: Complex64) -> f64 {
        match self {
            MetricVariant::Real => {
                let d = a.re - b.re;
                d * d
            }
            MetricVariant::Imag => {
                let d = a.im - b.im;
                d * d
            }
            MetricVariant::Norm => (a - b).norm_sqr(),
        }
    }

    fn mag_sq(self, z: Complex64) -> f64 {
        match self {
            MetricVariant::Real => z.re * z.re,
            MetricVariant::Imag => z.im * z.im,
            MetricVariant::Norm => z.norm_sqr(),
        }
    }
}

/// Per-sample values and their aggregate for one metric.
///
/// Samples whose formula is undefined (zero denominator) hold `NaN` in
/// `per_sample`, are skipped by `mean`, and are counted in `excluded`.
/// `f64::INFINITY` is a legitimate value for PSNR at zero error.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub excluded: usize,
}

impl MetricSeries {
    fn from_samples(per_sample: Vec<f64>) -> Self {
        let defined: Vec<f64> = per_sample.iter().copied().filter(|v| !v.is_nan()).collect();
        let excluded = per_sample.len() - defined.len();
        let mean = if defined.is_empty() {
            f64::NAN
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        MetricSeries {
            per_sample,
            mean,
            excluded,
        }
    }

    fn json(&self) -> serde_json::Value {
        let encode = |v: f64| -> serde_json::Value {
            if v.is_nan() {
                serde_json::Value::Null
            } else if v.is_infinite() {
                serde_json::Value::String(if v > 0.0 { "inf" } else { "-inf" }.into())
            } else {
                serde_json::json!(v)
            }
        };
        serde_json::json!({
            "mean": encode(self.mean),
            "excluded": self.excluded,
            "per_sample": self.per_sample.iter().map(|&v| encode(v)).collect::<Vec<_>>(),
        })
    }
}

/// The six metrics of one variant (real / imaginary / complex-norm).
#[derive(Debug, Clone, PartialEq)]
pub struct VariantMetrics {
    /// Relative Frobenius error of the (1,1) block.
    pub e11: MetricSeries,
    /// Relative Frobenius error of the (2,1) block.
    pub e21: MetricSeries,
    /// Relative Frobenius error of the (2,2) block.
    pub e22: MetricSeries,
    /// Combined error: summed block numerators over summed denominators.
    pub e_combined: MetricSeries,
    /// Mean squared error over the full matrix.
    pub mse: MetricSeries,
    /// Peak signal-to-noise ratio, `10*log10(max|F| / MSE)` as printed
    /// (peak amplitude, not squared).
    pub psnr: MetricSeries,
}

impl VariantMetrics {
    fn json(&self) -> serde_json::Value {
        serde_json::json!({
            "e11": self.e11.json(),
            "e21": self.e21.json(),
            "e22": self.e22.json(),
            "e": self.e_combined.json(),
            "mse": self.mse.json(),
            "psnr": self.psnr.json(),
        })
    }
}

/// Full evaluation report: every metric in all three variants.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub count: usize,
    pub m1: usize,
    pub real: VariantMetrics,
    pub imag: VariantMetrics,
    pub norm: VariantMetrics,
}

impl MetricsReport {
    /// JSON document mirroring the tabular layout
    /// (variant × metric, aggregates plus per-sample values).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "count": self.count,
            "m1": self.m1,
            "real": self.real.json(),
            "imag": self.imag.json(),
            "norm": self.norm.json(),
        })
    }
}

fn variant_metrics(
    truths: &[MsrMatrix],
    retrieved: &[MsrMatrix],
    m1: usize,
    v: MetricVariant,
    psnr_conventional: bool,
) -> Result<VariantMetrics, RetrievalError> {
    let n = truths.len();
    let mut e11 = Vec::with_capacity(n);
    let mut e21 = Vec::with_capacity(n);
    let mut e22 = Vec::with_capacity(n);
    let mut e_comb = Vec::with_capacity(n);
    let mut mse = Vec::with_capacity(n);
    let mut psnr = Vec::with_capacity(n);
    for (t, r) in truths.iter().zip(retrieved) {
        if t.two_m() != r.two_m() {
            return Err(RetrievalError::InvalidParameter(format!(
                "matrix sizes differ: {} vs {}",
                t.two_m(),
                r.two_m()
            )));
        }
        let tb = partition(t, m1)?;
        let rb = partition(r, m1)?;
        // Numerator/denominator (as Frobenius norms) per predicted block.
        let block = |a: &Array2<Complex64>, b: &Array2<Complex64>| -> (f64, f64) {
            let num = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| v.diff_sq(*x, *y))
                .sum::<f64>()
                .sqrt();
            let den = a.iter().map(|x| v.mag_sq(*x)).sum::<f64>().sqrt();
            (num, den)
        };
        let (n11, d11) = block(&tb.f11, &rb.f11);
        let (n21, d21) = block(&tb.f21, &rb.f21);
        let (n22, d22) = block(&tb.f22, &rb.f22);
        let rel = |num: f64, den: f64| if den == 0.0 { f64::NAN } else { num / den };
        e11.push(rel(n11, d11));
        e21.push(rel(n21, d21));
        e22.push(rel(n22, d22));
        e_comb.push(rel(n11 + n21 + n22, d11 + d21 + d22));

        let total = t.two_m() * t.two_m();
        let sum_sq: f64 = t
            .entries
            .iter()
            .zip(r.entries.iter())
            .map(|(x, y)| v.diff_sq(*x, *y))
            .sum();
        let mse_n = sum_sq / total as f64;
        mse.push(mse_n);
        let peak = t
            .entries
            .iter()
            .map(|z| v.mag_sq(*z).sqrt())
            .fold(0.0f64, f64::max);
        let numerator = if psnr_conventional { peak * peak } else { peak };
        let psnr_n = if peak == 0.0 {
            f64::NAN
        } else if mse_n == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (numerator / mse_n).log10()
        };
        psnr.push(psnr_n);
    }
    Ok(VariantMetrics {
        e11: MetricSeries::from_samples(e11),
        e21: MetricSeries::from_samples(e21),
        e22: MetricSeries::from_samples(e22),
        e_combined: MetricSeries::from_samples(e_comb),
        mse: MetricSeries::from_samples(mse),
        psnr: MetricSeries::from_samples(psnr),
    })
}

/// Evaluates the sub-block relative errors, the combined error (summed
/// numerators over summed denominators across the three predicted blocks),
/// the full-matrix MSE, and the printed-form PSNR, each applied to the real
/// parts, imaginary parts, and complex entries.
pub fn compute_metrics(
    truths: &[MsrMatrix],
    retrieved: &[MsrMatrix],
    m1: usize,
) -> Result<MetricsReport, RetrievalError> {
    compute_metrics_with(truths, retrieved, m1, false)
}

/// [`compute_metrics`] with an opt-in conventional PSNR numerator
/// (`max|F|^2` instead of the printed `max|F|`).
pub fn compute_metrics_with(
    truths: &[MsrMatrix],
    retrieved: &[MsrMatrix],
    m1: usize,
    psnr_conventional: bool,
) -> Result<MetricsReport, RetrievalError> {
    if truths.len() != retrieved.len() {
        return Err(RetrievalError::InvalidParameter(format!(
            "{} truths vs {} retrievals",
            truths.len(),
            retrieved.len()
        )));
    }
    if truths.is_empty() {
        return Err(RetrievalError::InvalidParameter(
            "metrics need at least one sample".into(),
        ));
    }
    let c = psnr_conventional;
    Ok(MetricsReport {
        count: truths.len(),
        m1,
        real: variant_metrics(truths, retrieved, m1, MetricVariant::Real, c)?,
        imag: variant_metrics(truths, retrieved, m1, MetricVariant::Imag, c)?,
        norm: variant_metrics(truths, retrieved, m1, MetricVariant::Norm, c)?,
    })
}

/// Multiplicative relative noise on every record's matrix; record `i` uses
/// the substream keyed by `(master_seed, NOISE_STREAM_BASE + i)` so it never
/// collides with the shape-generation streams. `delta = 0` is a no-op.
pub fn apply_noise(ds: &mut Dataset, delta: f64, master_seed: u64) -> Result<(), RetrievalError> {
    const NOISE_STREAM_BASE: u64 = 1 << 32;
    if delta == 0.0 {
        return Ok(());
    }
    for (i, rec) in ds.records.iter_mut().enumerate() {
        rec.matrix
            .add_noise(delta, mix_seed(master_seed, NOISE_STREAM_BASE + i as u64))?;
    }
    Ok(())
}
