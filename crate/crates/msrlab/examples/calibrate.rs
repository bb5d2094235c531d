//! Temporary desk-scale calibration run (deleted before release).
//!
//! Measures the data-scaling trend, mode comparisons, and query-shape
//! retrieval quality under the reference protocol so the acceptance
//! thresholds can be pinned to observed behaviour.

use std::time::Instant;

use msrlab::forward::WaveContext;
use msrlab::geometry::BoundaryCurve;
use msrlab::imaging::{dsm_indicator, FarFieldData, ImagingGrid, IndicatorImage};
use msrlab::msr::{assemble_msr, make_limited_input, AcquisitionMode, DirectionGrid, MsrMatrix};
use msrlab::nn::TrainConfig;
use msrlab::retrieval::{
    compute_metrics, fit_model, generate_dataset, make_pairs, nearest_sample, retrieve,
    retrieve_test_set, DatasetConfig, RetrievalModel, SplitSpec,
};

const K: f64 = 5.0;
const TWO_M: usize = 32;
const M1: usize = 16;

fn combined_e(truth: &MsrMatrix, retrieved: &MsrMatrix) -> f64 {
    compute_metrics(
        std::slice::from_ref(truth),
        std::slice::from_ref(retrieved),
        M1,
    )
    .unwrap()
    .norm
    .e_combined
    .mean
}

fn displacement(img: &IndicatorImage) -> f64 {
    let (x, y) = img.argmax();
    (x * x + y * y).sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let batch: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(64);
    println!("batch size {batch}");
    let t_all = Instant::now();
    let cfg = DatasetConfig {
        count: 2500,
        k: K,
        two_m: TWO_M,
        n_nodes: 64,
        shape_modes: 5,
        shape_q: 0.0,
        a0_min: 0.5,
        a0_max: 1.5,
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let t = Instant::now();
    let ds = generate_dataset(&cfg, 7, workers)?;
    println!(
        "dataset: {} records in {:.1}s ({workers} workers)",
        ds.len(),
        t.elapsed().as_secs_f64()
    );

    let test_split = SplitSpec::new(2000, 500)?;
    let train_cfg = TrainConfig::new(30, batch, M1, 7);

    // --- scaling trend (phased) --------------------------------------------
    let pairs = make_pairs(&ds, M1, AcquisitionMode::Phased, 10, 7)?;
    let mut prev = f64::INFINITY;
    let mut phased_model: Option<RetrievalModel> = None;
    let mut phased_e21 = f64::NAN;
    for &n1 in &[250usize, 500, 1000, 2000] {
        let t = Instant::now();
        let model = fit_model(&pairs, &SplitSpec::new(n1, 500)?, 0.125, &train_cfg)?;
        let t_train = t.elapsed().as_secs_f64();
        let (truths, retrieved) = retrieve_test_set(&model, &ds, &test_split, 7)?;
        let rep = compute_metrics(&truths, &retrieved, M1)?;
        let e21 = rep.norm.e21.mean;
        println!(
            "phased    n1={n1:4}: norm e21 = {e21:.4}  (drop {:+.1}%)  e = {:.4}  [{t_train:.0}s train]",
            100.0 * (1.0 - e21 / prev),
            rep.norm.e_combined.mean,
        );
        prev = e21;
        if n1 == 2000 {
            phased_e21 = e21;
            phased_model = Some(model);
        }
    }
    let phased_model = phased_model.unwrap();

    // --- phaseless / subsampled at n1 = 2000 -------------------------------
    let t = Instant::now();
    let pl_pairs = make_pairs(&ds, M1, AcquisitionMode::Phaseless, 10, 7)?;
    let pl_model = fit_model(&pl_pairs, &test_split, 0.125, &train_cfg)?;
    let (truths, retrieved) = retrieve_test_set(&pl_model, &ds, &test_split, 7)?;
    let pl_e21 = compute_metrics(&truths, &retrieved, M1)?.norm.e21.mean;
    println!(
        "phaseless n1=2000: norm e21 = {pl_e21:.4}  (vs phased {phased_e21:.4})  [{:.0}s]",
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let ss_pairs = make_pairs(&ds, M1, AcquisitionMode::Subsampled, 10, 7)?;
    let ss_model = fit_model(&ss_pairs, &test_split, 0.125, &train_cfg)?;
    let (truths, retrieved) = retrieve_test_set(&ss_model, &ds, &test_split, 7)?;
    let ss_e21 = compute_metrics(&truths, &retrieved, M1)?.norm.e21.mean;
    println!(
        "subsample n1=2000: norm e21 = {ss_e21:.4}  (vs full {phased_e21:.4})  [{:.0}s]",
        t.elapsed().as_secs_f64()
    );

    // --- query shapes -------------------------------------------------------
    let ctx = WaveContext::new(K, 64)?;
    let train_mats: Vec<MsrMatrix> = ds.records[..2000]
        .iter()
        .map(|r| r.matrix.clone())
        .collect();
    let igrid = ImagingGrid::centered(4.0, 201)?;

    let square = BoundaryCurve::square(1.0, [0.0, 0.0]);
    let sq_msr = assemble_msr(&square, &ctx, DirectionGrid::new(TWO_M)?)?;
    let sq_in = make_limited_input(&sq_msr, M1, AcquisitionMode::Phased, 10, 7)?;
    let sq_ret = retrieve(&phased_model, &sq_in, K)?;
    let (sq_ni, sq_near) = nearest_sample(&sq_in, &train_mats, M1)?;
    println!(
        "square  phased   : network e = {:.4}, nearest (record {sq_ni}) e = {:.4}",
        combined_e(&sq_msr, &sq_ret),
        combined_e(&sq_msr, sq_near),
    );
    let d_full = displacement(&dsm_indicator(&FarFieldData::full_aperture(&sq_msr), &igrid)?);
    let d_lim = displacement(&dsm_indicator(
        &FarFieldData::limited_aperture(&sq_msr, M1)?,
        &igrid,
    )?);
    let d_ret = displacement(&dsm_indicator(&FarFieldData::full_aperture(&sq_ret), &igrid)?);
    println!("square  argmax displacement: full {d_full:.3}, limited {d_lim:.3}, retrieved {d_ret:.3}");

    let circle = BoundaryCurve::circle(1.0, [0.0, 0.0]);
    let ci_msr = assemble_msr(&circle, &ctx, DirectionGrid::new(TWO_M)?)?;
    let ci_in = make_limited_input(&ci_msr, M1, AcquisitionMode::Phaseless, 10, 7)?;
    let ci_ret = retrieve(&pl_model, &ci_in, K)?;
    let (ci_ni, ci_near) = nearest_sample(&ci_in, &train_mats, M1)?;
    println!(
        "circle  phaseless: network e = {:.4}, nearest (record {ci_ni}) e = {:.4}",
        combined_e(&ci_msr, &ci_ret),
        combined_e(&ci_msr, ci_near),
    );
    let d_full = displacement(&dsm_indicator(&FarFieldData::full_aperture(&ci_msr), &igrid)?);
    let d_lim = displacement(&dsm_indicator(
        &FarFieldData::limited_aperture(&ci_msr, M1)?,
        &igrid,
    )?);
    let d_ret = displacement(&dsm_indicator(&FarFieldData::full_aperture(&ci_ret), &igrid)?);
    println!("circle  argmax displacement: full {d_full:.3}, limited {d_lim:.3}, retrieved {d_ret:.3}");

    println!("total calibration time {:.1}s", t_all.elapsed().as_secs_f64());
    Ok(())
}
