//! Command-line front end: five subcommands wiring the modules into
//! reproducible experiments that emit datasets, checkpoints, metric tables,
//! and figure files (PGM images plus CSV grids).
//!
//! Exit codes: `0` success, `2` configuration error, `3` numerical failure,
//! `4` I/O error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

use crate::config::{load_config, ConfigError, RunConfig};
use crate::forward::{
    circle_series_far_field, far_field, scattered_field_at, ForwardError, WaveContext,
};
use crate::geometry::BoundaryCurve;
use crate::imaging::{
    dsm_indicator, normalize, write_csv, write_pgm, FarFieldData, ImagingError, ImagingGrid,
};
use crate::msr::{
    assemble_msr, make_limited_input, AcquisitionMode, DirectionGrid, MsrError, MsrMatrix,
};
use crate::nn::{grad_check, LossKind, Network, NetworkSpec, NnError, Tensor};
use crate::retrieval::{
    apply_noise, compute_metrics_with, fnv1a64, generate_dataset, make_pairs, nearest_sample,
    read_dataset, retrieve, retrieve_test_set, write_dataset, Dataset, DatasetManifest,
    RetrievalError, RetrievalModel, SplitSpec,
};
use crate::rng::{mix_seed, substream};
use num_complex::Complex64;
use rand::Rng;

/// Substream key offset for noise applied by `image` (clear of the dataset
/// shape and noise streams).
const IMAGE_NOISE_STREAM: u64 = 1 << 33;

/// Top-level command-line interface.
#[derive(Debug, Parser)]
#[command(
    name = "msrlab",
    version,
    about = "Acoustic scattering workbench: boundary-integral forward solver, \
             limited-aperture data completion networks, and direct sampling \
             reconstructions."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides its config key.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file (key = value lines, '#' comments).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; every random stream in a run derives from it.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for dataset generation.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Force single-threaded generation (results are identical either way).
    #[arg(long)]
    pub deterministic: bool,
    /// Relative noise level applied to measured matrices.
    #[arg(long, value_name = "DELTA")]
    pub noise: Option<f64>,
}

/// Which far-field data feeds the sampling indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageSource {
    /// The full multi-static response matrix.
    Full,
    /// Only the measured limited-aperture block; everything else zero.
    Limited,
    /// The full matrix retrieved by a phased completion model.
    Retrieved,
    /// The full matrix retrieved by a phaseless completion model.
    PhaselessRetrieved,
}

impl ImageSource {
    fn stem(self) -> &'static str {
        match self {
            ImageSource::Full => "full",
            ImageSource::Limited => "limited",
            ImageSource::Retrieved => "retrieved",
            ImageSource::PhaselessRetrieved => "phaseless_retrieved",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of random obstacles and their response matrices.
    GenDataset {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a completion network on a dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset file (default `<out>/dataset.msrd`).
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split of a dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset file (default `<out>/dataset.msrd`).
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Checkpoint file (default `<out>/model.msrn`).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Also evaluate the nearest-sample baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Reconstruct an obstacle image with the direct sampling indicator.
    Image {
        #[command(flatten)]
        common: CommonArgs,
        /// Far-field data source feeding the indicator.
        #[arg(long, value_enum, default_value_t = ImageSource::Full)]
        source: ImageSource,
        /// Test shape: kite | circle | square | round-square (default kite).
        #[arg(long, value_name = "NAME", conflicts_with = "index")]
        shape: Option<String>,
        /// Alternative: use a dataset record by index.
        #[arg(long, value_name = "I")]
        index: Option<usize>,
        /// Dataset file (only with --index; default `<out>/dataset.msrd`).
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Checkpoint file for retrieved sources (default `<out>/model.msrn`).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Verify the numerical pipeline against independent oracles.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Deliberately mis-scale the far-field normalization; the
        /// asymptotic-decay check must then fail (negative control).
        #[arg(long, hide = true)]
        perturb_normalization: bool,
    },
}

/// Command failures carrying their process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    #[error("{0}")]
    Config(String),
    /// Numerical failure: solver breakdown, non-finite training, failed
    /// oracle (exit 3).
    #[error("{0}")]
    Numerical(String),
    /// File-system or format failure (exit 4).
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match &e {
            RetrievalError::InvalidParameter(_) | RetrievalError::ModeMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            RetrievalError::Io(_)
            | RetrievalError::Json(_)
            | RetrievalError::MalformedDataset(_) => CliError::Io(e.to_string()),
            RetrievalError::Msr(m) => match m {
                MsrError::Forward(f) => forward_to_cli(f, e.to_string()),
                _ => CliError::Config(e.to_string()),
            },
            RetrievalError::Geometry(_) => CliError::Config(e.to_string()),
            RetrievalError::Forward(f) => forward_to_cli(f, e.to_string()),
            RetrievalError::Nn(n) => match n {
                NnError::Io(_) | NnError::MalformedCheckpoint(_) => CliError::Io(e.to_string()),
                NnError::InvalidParameter(_) | NnError::BatchTooSmall(_) => {
                    CliError::Config(e.to_string())
                }
                _ => CliError::Numerical(e.to_string()),
            },
            RetrievalError::Generation { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

fn forward_to_cli(f: &ForwardError, text: String) -> CliError {
    match f {
        ForwardError::InvalidParameter(_) | ForwardError::Geometry(_) => CliError::Config(text),
        _ => CliError::Numerical(text),
    }
}

impl From<ForwardError> for CliError {
    fn from(e: ForwardError) -> Self {
        let text = e.to_string();
        forward_to_cli(&e, text)
    }
}

impl From<MsrError> for CliError {
    fn from(e: MsrError) -> Self {
        match &e {
            MsrError::Forward(f) => forward_to_cli(f, e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::InvalidGrid(_) | ImagingError::InvalidData(_) => {
                CliError::Config(e.to_string())
            }
            ImagingError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io(_) | NnError::MalformedCheckpoint(_) => CliError::Io(e.to_string()),
            NnError::InvalidParameter(_) | NnError::BatchTooSmall(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Parses arguments, runs the selected command, and returns the process exit
/// code. Errors are printed to stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// [`run_from`] on the process arguments.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenDataset { common } => {
            let cfg = resolve(&common)?;
            cmd_gen_dataset(&cfg)
        }
        Command::Train { common, dataset } => {
            let cfg = resolve(&common)?;
            let path = dataset.unwrap_or_else(|| out_path(&cfg, "dataset.msrd"));
            cmd_train(&cfg, &path)
        }
        Command::Eval {
            common,
            dataset,
            checkpoint,
            baseline,
        } => {
            let cfg = resolve(&common)?;
            let data = dataset.unwrap_or_else(|| out_path(&cfg, "dataset.msrd"));
            let ckpt = checkpoint.unwrap_or_else(|| out_path(&cfg, "model.msrn"));
            cmd_eval(&cfg, &data, &ckpt, baseline)
        }
        Command::Image {
            common,
            source,
            shape,
            index,
            dataset,
            checkpoint,
        } => {
            let cfg = resolve(&common)?;
            let data = dataset.unwrap_or_else(|| out_path(&cfg, "dataset.msrd"));
            let ckpt = checkpoint.unwrap_or_else(|| out_path(&cfg, "model.msrn"));
            cmd_image(&cfg, source, shape.as_deref(), index, &data, &ckpt)
        }
        Command::Oracle {
            common,
            perturb_normalization,
        } => {
            let cfg = resolve(&common)?;
            cmd_oracle(&cfg, perturb_normalization)
        }
    }
}

/// Loads the configuration (defaults when no file is given) and applies the
/// flag overrides, then re-validates.
fn resolve(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out = out.display().to_string();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    if let Some(noise) = common.noise {
        cfg.noise = noise;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out).join(name)
}

fn ensure_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(())
}

fn cmd_gen_dataset(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_out(cfg)?;
    let dcfg = cfg.dataset_config();
    println!(
        "generating {} records: k = {}, {} directions, {} boundary nodes, {} worker(s)",
        dcfg.count,
        dcfg.k,
        dcfg.two_m,
        dcfg.n_nodes,
        cfg.effective_workers()
    );
    let manifest_path = out_path(cfg, "dataset.manifest.json");
    let mut ds = match generate_dataset(&dcfg, cfg.seed, cfg.effective_workers()) {
        Ok(ds) => ds,
        Err(e) => {
            if let RetrievalError::Generation { index, .. } = &e {
                DatasetManifest::failed(&dcfg, cfg.seed, *index).write(&manifest_path)?;
                eprintln!(
                    "wrote failure manifest ({}), rerun resumes the diagnosis at record {index}",
                    manifest_path.display()
                );
            }
            return Err(e.into());
        }
    };
    if cfg.noise > 0.0 {
        apply_noise(&mut ds, cfg.noise, cfg.seed)?;
        println!("applied relative noise delta = {}", cfg.noise);
    }
    let data_path = out_path(cfg, "dataset.msrd");
    let checksum = write_dataset(&ds, &data_path)?;
    DatasetManifest::completed(&dcfg, cfg.seed, checksum).write(&manifest_path)?;
    println!(
        "wrote {} ({} records) and {}",
        data_path.display(),
        ds.len(),
        manifest_path.display()
    );
    println!(
        "manifest: count = {}, seed = {}, checksum = {checksum:016x}",
        ds.len(),
        cfg.seed
    );
    Ok(())
}

/// Fails fast when the configured geometry disagrees with a dataset file.
fn check_dataset_matches(cfg: &RunConfig, ds: &Dataset) -> Result<(), CliError> {
    if ds.two_m != cfg.two_m {
        return Err(CliError::Config(format!(
            "config key \"two_m\": configured {} but the dataset holds {} directions",
            cfg.two_m, ds.two_m
        )));
    }
    if cfg.m1 >= ds.two_m {
        return Err(CliError::Config(format!(
            "config key \"m1\": {} does not split the dataset's {} directions",
            cfg.m1, ds.two_m
        )));
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dataset_path: &Path) -> Result<(), CliError> {
    ensure_out(cfg)?;
    let ds = read_dataset(dataset_path)?;
    check_dataset_matches(cfg, &ds)?;
    let split = SplitSpec::new(cfg.n1, cfg.n2)?;
    split.validate_against(ds.len())?;
    let pairs = make_pairs(&ds, cfg.m1, cfg.mode, cfg.subsample_p, cfg.seed)?;
    println!(
        "training a {:?} completion model on {} of {} records ({} epochs, batch {}, net scale {})",
        cfg.mode,
        split.n1,
        ds.len(),
        cfg.epochs,
        cfg.batch,
        cfg.net_scale
    );
    let model = fit_and_report(cfg, &pairs, &split)?;
    let ckpt_path = out_path(cfg, "model.msrn");
    model.save(&ckpt_path)?;
    let csv_path = out_path(cfg, "loss_history.csv");
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in model.history.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{loss:.12e}\n", i + 1));
    }
    std::fs::write(&csv_path, csv)?;
    println!(
        "wrote {} and {}",
        ckpt_path.display(),
        csv_path.display()
    );
    Ok(())
}

fn fit_and_report(
    cfg: &RunConfig,
    pairs: &crate::retrieval::PairSet,
    split: &SplitSpec,
) -> Result<RetrievalModel, CliError> {
    let model = crate::retrieval::fit_model(pairs, split, cfg.net_scale, &cfg.train_config())?;
    for (i, loss) in model.history.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}: training loss {loss:.6e}", i + 1);
    }
    Ok(model)
}

fn cmd_eval(
    cfg: &RunConfig,
    dataset_path: &Path,
    checkpoint_path: &Path,
    baseline: bool,
) -> Result<(), CliError> {
    ensure_out(cfg)?;
    let ds = read_dataset(dataset_path)?;
    let model = RetrievalModel::load(checkpoint_path)?;
    if model.meta.two_m as usize != ds.two_m {
        return Err(CliError::Config(format!(
            "checkpoint was trained on {} directions but the dataset holds {}",
            model.meta.two_m, ds.two_m
        )));
    }
    let split = SplitSpec::new(cfg.n1, cfg.n2)?;
    split.validate_against(ds.len())?;
    let m1 = model.meta.m1 as usize;
    println!(
        "evaluating {:?} checkpoint on records {}..{}",
        model.meta.mode,
        split.n1,
        split.n1 + split.n2
    );
    let (truths, retrieved) = retrieve_test_set(&model, &ds, &split, cfg.seed)?;
    let report = compute_metrics_with(&truths, &retrieved, m1, cfg.psnr_conventional)?;
    let mut doc = serde_json::json!({
        "config": cfg,
        "metrics": report.to_json(),
    });
    println!(
        "norm metrics: e11 = {:.4}, e21 = {:.4}, e22 = {:.4}, e = {:.4}",
        report.norm.e11.mean,
        report.norm.e21.mean,
        report.norm.e22.mean,
        report.norm.e_combined.mean
    );
    if baseline {
        let candidates: Vec<MsrMatrix> = ds.records[..split.n1]
            .iter()
            .map(|r| r.matrix.clone())
            .collect();
        let mut base = Vec::with_capacity(split.n2);
        for idx in split.test_range() {
            let limited = make_limited_input(
                &ds.records[idx].matrix,
                m1,
                model.meta.mode,
                model.meta.subsample_p as usize,
                cfg.seed,
            )?;
            let (_, found) = nearest_sample(&limited, &candidates, m1)?;
            base.push(found.clone());
        }
        let base_report = compute_metrics_with(&truths, &base, m1, cfg.psnr_conventional)?;
        println!(
            "nearest-sample baseline: e = {:.4} (model e = {:.4})",
            base_report.norm.e_combined.mean,
            report.norm.e_combined.mean
        );
        doc["baseline"] = base_report.to_json();
    }
    let metrics_path = out_path(cfg, "metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?)?;
    println!("wrote {}", metrics_path.display());
    Ok(())
}

fn shape_by_name(name: &str) -> Result<BoundaryCurve, CliError> {
    match name {
        "kite" => Ok(BoundaryCurve::kite([0.0, 0.0])),
        "circle" => Ok(BoundaryCurve::circle(1.0, [0.0, 0.0])),
        "square" => Ok(BoundaryCurve::square(1.0, [0.0, 0.0])),
        "round-square" | "round_square" => Ok(BoundaryCurve::round_square([0.0, 0.0])),
        _ => Err(CliError::Config(format!(
            "unknown shape {name:?}; expected kite | circle | square | round-square"
        ))),
    }
}

fn cmd_image(
    cfg: &RunConfig,
    source: ImageSource,
    shape: Option<&str>,
    index: Option<usize>,
    dataset_path: &Path,
    checkpoint_path: &Path,
) -> Result<(), CliError> {
    ensure_out(cfg)?;
    let (label, mut msr) = match index {
        Some(i) => {
            let ds = read_dataset(dataset_path)?;
            check_dataset_matches(cfg, &ds)?;
            let rec = ds.records.get(i).ok_or_else(|| {
                CliError::Config(format!(
                    "record index {i} out of range for {} records",
                    ds.len()
                ))
            })?;
            (format!("record {i}"), rec.matrix.clone())
        }
        None => {
            let name = shape.unwrap_or("kite");
            let curve = shape_by_name(name)?;
            let ctx = WaveContext::new(cfg.k, cfg.n_nodes)?;
            let grid = DirectionGrid::new(cfg.two_m)?;
            (name.to_string(), assemble_msr(&curve, &ctx, grid)?)
        }
    };
    if cfg.noise > 0.0 {
        msr.add_noise(cfg.noise, mix_seed(cfg.seed, IMAGE_NOISE_STREAM))?;
        println!("applied relative noise delta = {}", cfg.noise);
    }
    let data = match source {
        ImageSource::Full => FarFieldData::full_aperture(&msr),
        ImageSource::Limited => FarFieldData::limited_aperture(&msr, cfg.m1)?,
        ImageSource::Retrieved | ImageSource::PhaselessRetrieved => {
            let model = RetrievalModel::load(checkpoint_path)?;
            let want = if source == ImageSource::Retrieved {
                AcquisitionMode::Phased
            } else {
                AcquisitionMode::Phaseless
            };
            if model.meta.mode != want {
                return Err(CliError::Config(format!(
                    "source {:?} needs a {want:?} checkpoint, found {:?}",
                    source, model.meta.mode
                )));
            }
            if model.meta.two_m as usize != msr.two_m() {
                return Err(CliError::Config(format!(
                    "checkpoint expects {} directions, data has {}",
                    model.meta.two_m,
                    msr.two_m()
                )));
            }
            let limited = make_limited_input(
                &msr,
                model.meta.m1 as usize,
                want,
                model.meta.subsample_p as usize,
                cfg.seed,
            )?;
            let completed = retrieve(&model, &limited, msr.k)?;
            FarFieldData::full_aperture(&completed)
        }
    };
    let grid = ImagingGrid::new(
        (cfg.grid_min, cfg.grid_max),
        (cfg.grid_min, cfg.grid_max),
        cfg.grid_res,
        cfg.grid_res,
    )?;
    let mut image = dsm_indicator(&data, &grid)?;
    normalize(&mut image)?;
    let pgm = out_path(cfg, &format!("image_{}.pgm", source.stem()));
    let csv = out_path(cfg, &format!("image_{}.csv", source.stem()));
    write_pgm(&image, &pgm)?;
    write_csv(&image, &csv)?;
    let (ax, ay) = image.argmax();
    println!(
        "{label}, source {}: indicator peak at ({ax:.3}, {ay:.3})",
        source.stem()
    );
    println!("wrote {} and {}", pgm.display(), csv.display());
    Ok(())
}

/// One oracle verification: the measured value must not exceed the
/// tolerance.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.measured.is_finite() && self.measured <= self.tolerance
    }
}

fn frob(m: &ndarray::Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Runs the full oracle suite. `perturb_normalization` scales the computed
/// far field by 5% inside the asymptotic-decay check, which must then fail —
/// a negative control proving the check can detect a broken normalization.
pub fn run_oracle_suite(
    cfg: &RunConfig,
    perturb_normalization: bool,
) -> Result<Vec<OracleCheck>, CliError> {
    let mut checks = Vec::new();

    // 1. Disk far fields against the separation-of-variables series.
    let mut worst = 0.0f64;
    let grid = DirectionGrid::new(32)?;
    let dirs = grid.directions();
    for &a in &[0.5, 1.0, 1.5] {
        for &k in &[2.0, 5.0, 10.0] {
            let ctx = WaveContext::new(k, 128)?;
            let curve = BoundaryCurve::circle(a, [0.0, 0.0]);
            let msr = assemble_msr(&curve, &ctx, DirectionGrid::new(32)?)?;
            let mut series = ndarray::Array2::zeros((32, 32));
            for (i, &theta) in dirs.iter().enumerate() {
                let row = circle_series_far_field(a, k, theta, &dirs);
                for (j, v) in row.into_iter().enumerate() {
                    series[[i, j]] = v;
                }
            }
            let diff = &msr.entries - &series;
            worst = worst.max(frob(&diff) / frob(&series));
        }
    }
    checks.push(OracleCheck {
        name: "disk-series",
        measured: worst,
        tolerance: 1e-6,
    });

    // 2. Reciprocity on a smooth, non-symmetric obstacle.
    let ctx = WaveContext::new(cfg.k, cfg.n_nodes)?;
    let kite = BoundaryCurve::kite([0.2, -0.1]);
    let f0 = assemble_msr(&kite, &ctx, DirectionGrid::new(32)?)?;
    let two_m = f0.two_m();
    let m = two_m / 2;
    let scale = f0.entries.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let mut rec_resid = 0.0f64;
    for i in 0..two_m {
        for j in 0..two_m {
            let mirror = f0.entries[[(j + m) % two_m, (i + m) % two_m]];
            rec_resid = rec_resid.max((f0.entries[[i, j]] - mirror).norm() / scale);
        }
    }
    checks.push(OracleCheck {
        name: "reciprocity",
        measured: rec_resid,
        tolerance: 1e-8,
    });

    // 3. Translation: phase identity for the fields, invariance for moduli.
    let d = [0.35, -0.2];
    let kite0 = BoundaryCurve::kite([0.0, 0.0]);
    let kited = BoundaryCurve::kite(d);
    let f_origin = assemble_msr(&kite0, &ctx, DirectionGrid::new(32)?)?;
    let f_moved = assemble_msr(&kited, &ctx, DirectionGrid::new(32)?)?;
    let base = f_origin
        .entries
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    let mut phase_resid = 0.0f64;
    let mut modulus_resid = 0.0f64;
    let k = cfg.k;
    for (i, &theta) in dirs.iter().enumerate() {
        for (j, &xhat) in dirs.iter().enumerate() {
            let phase = k * ((theta[0] - xhat[0]) * d[0] + (theta[1] - xhat[1]) * d[1]);
            let predicted =
                f_origin.entries[[i, j]] * Complex64::new(phase.cos(), phase.sin());
            phase_resid =
                phase_resid.max((f_moved.entries[[i, j]] - predicted).norm() / base);
            modulus_resid = modulus_resid
                .max((f_moved.entries[[i, j]].norm() - f_origin.entries[[i, j]].norm()).abs() / base);
        }
    }
    checks.push(OracleCheck {
        name: "translation-phase",
        measured: phase_resid,
        tolerance: 1e-8,
    });
    checks.push(OracleCheck {
        name: "phaseless-invariance",
        measured: modulus_resid,
        tolerance: 1e-8,
    });

    // 4. Far-field normalization: in the asymptotic representation
    //    u^s = e^{i pi/4}/sqrt(8 k pi) e^{ikr}/sqrt(r) (u_inf + O(1/r)),
    //    the scaled remainder decays like 1/r, so doubling r must shrink it
    //    to <= 0.6x.
    let obs: Vec<[f64; 2]> = (0..8)
        .map(|j| {
            let t = 2.0 * std::f64::consts::PI * j as f64 / 8.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let incident = [1.0, 0.0];
    let ff = far_field(&kite0, &ctx, incident, &obs)?;
    let perturbation = if perturb_normalization { 1.05 } else { 1.0 };
    let prefactor = Complex64::new(0.0, std::f64::consts::FRAC_PI_4).exp()
        / (8.0 * k * std::f64::consts::PI).sqrt();
    let residual_at = |r: f64| -> Result<f64, CliError> {
        let points: Vec<[f64; 2]> = obs.iter().map(|o| [r * o[0], r * o[1]]).collect();
        let us = scattered_field_at(&kite0, &ctx, incident, &points)?;
        let mut worst = 0.0f64;
        for (j, u) in us.iter().enumerate() {
            let kr = k * r;
            let lead = prefactor * Complex64::new(kr.cos(), kr.sin()) / r.sqrt()
                * (ff.values[j] * perturbation);
            worst = worst.max((u - lead).norm() * r.sqrt());
        }
        Ok(worst)
    };
    let r100 = residual_at(100.0)?;
    let r200 = residual_at(200.0)?;
    checks.push(OracleCheck {
        name: "far-field-asymptotics",
        measured: r200 / r100,
        tolerance: 0.6,
    });

    // 5. Analytic gradients of a small end-to-end network.
    let spec = NetworkSpec::reference([4, 4, 2], [6, 6, 2], 0.05)?;
    let mut net = Network::init(spec, cfg.seed)?;
    let mut rng = substream(cfg.seed, 3);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    };
    let input = Tensor::from_vec([2, 4, 4, 2], sample(&mut rng, 2 * 4 * 4 * 2))?;
    let target = Tensor::from_vec([2, 6, 6, 2], sample(&mut rng, 2 * 6 * 6 * 2))?;
    let grad_err = grad_check(
        &mut net,
        &input,
        &target,
        LossKind::L2,
        3,
        1e-3,
        200,
        cfg.seed,
    )?;
    checks.push(OracleCheck {
        name: "network-gradient",
        measured: grad_err,
        tolerance: 1e-4,
    });

    Ok(checks)
}

fn cmd_oracle(cfg: &RunConfig, perturb_normalization: bool) -> Result<(), CliError> {
    let checks = run_oracle_suite(cfg, perturb_normalization)?;
    let mut failures = 0;
    for c in &checks {
        let verdict = if c.passed() { "pass" } else { "FAIL" };
        println!(
            "{:<24} measured {:>12.4e}  tolerance {:>8.1e}  {verdict}",
            c.name, c.measured, c.tolerance
        );
        if !c.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Numerical(format!(
            "{failures} of {} oracle checks failed",
            checks.len()
        )));
    }
    println!("all {} oracle checks passed", checks.len());
    Ok(())
}

/// Digest of a file's bytes (used by tests and reproducibility checks).
pub fn file_checksum(path: &Path) -> Result<u64, CliError> {
    Ok(fnv1a64(&std::fs::read(path)?))
}
