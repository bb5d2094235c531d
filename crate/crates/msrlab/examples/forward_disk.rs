//! Plane-wave scattering by sound-soft disks: solves the boundary integral
//! equation and compares the computed far-field pattern against the
//! separation-of-variables series, demonstrating spectral convergence in the
//! node count.

use msrlab::forward::{circle_series_far_field, far_field, WaveContext};
use msrlab::geometry::BoundaryCurve;
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let observation: Vec<[f64; 2]> = (0..32)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / 32.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let incident = [1.0, 0.0];

    println!("disk far field vs the analytic series (32 observation directions)");
    println!("{:>7} {:>5} {:>7}   relative error", "radius", "k", "nodes");
    for &(a, k) in &[(1.0, 2.0), (1.0, 5.0), (0.5, 5.0), (1.5, 10.0)] {
        let series = circle_series_far_field(a, k, incident, &observation);
        let series_norm: f64 = series.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for &n in &[16usize, 32, 64, 128] {
            let ctx = WaveContext::new(k, n)?;
            let curve = BoundaryCurve::circle(a, [0.0, 0.0]);
            let ff = far_field(&curve, &ctx, incident, &observation)?;
            let err: f64 = ff
                .values
                .iter()
                .zip(&series)
                .map(|(u, s)| (u - s).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / series_norm;
            println!("{a:>7} {k:>5} {n:>7}   {err:.3e}");
        }
        println!();
    }
    println!("each doubling of the node count multiplies the error by orders of magnitude");
    println!("until it saturates at rounding level: the quadrature is spectrally accurate.");
    Ok(())
}
