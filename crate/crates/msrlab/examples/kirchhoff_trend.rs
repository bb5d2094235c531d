//! Physical-optics (Kirchhoff) approximation: integrates only over the
//! illuminated part of the boundary and compares against the full solver.
//! The approximation is a high-frequency one, so its error shrinks as the
//! wavenumber grows.

use msrlab::forward::{far_field, kirchhoff_far_field, WaveContext};
use msrlab::geometry::BoundaryCurve;
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curve = BoundaryCurve::circle(1.0, [0.0, 0.0]);
    let incident = [1.0, 0.0];
    // Back-scattering sector: observation directions within 60 degrees of
    // the reflection direction, where physical optics is sharpest.
    let observation: Vec<[f64; 2]> = (-8..=8)
        .map(|j| {
            let t = PI + j as f64 * (PI / 24.0);
            [t.cos(), t.sin()]
        })
        .collect();

    println!("Kirchhoff vs full solver on the unit disk (back-scattering sector)");
    println!("{:>6} {:>7}   relative error", "k", "nodes");
    let mut errors = Vec::new();
    for &k in &[5.0f64, 10.0, 20.0, 40.0] {
        // Scale the quadrature with the wavenumber to keep the solve
        // converged.
        let n = ((8.0 * k).ceil() as usize).next_power_of_two().max(64);
        let ctx = WaveContext::new(k, n)?;
        let exact = far_field(&curve, &ctx, incident, &observation)?;
        let approx = kirchhoff_far_field(&curve, &ctx, incident, &observation)?;
        let num: f64 = exact
            .values
            .iter()
            .zip(&approx.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = exact.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let err = num / den;
        println!("{k:>6} {n:>7}   {err:.4}");
        errors.push(err);
    }
    assert!(
        errors.windows(2).all(|w| w[1] < w[0]),
        "physical optics should improve with frequency"
    );
    println!("the error decreases monotonically with k, as a high-frequency asymptotic should.");
    Ok(())
}
