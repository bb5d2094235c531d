//! The verification oracles behind the numerical pipeline: analytic disk
//! series, reciprocity, translation identities, the far-field normalization,
//! and end-to-end network gradients — plus a negative control proving the
//! asymptotic check actually detects a broken normalization.

use msrlab::cli::run_oracle_suite;
use msrlab::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();

    println!("oracle suite:");
    let checks = run_oracle_suite(&cfg, false)?;
    for c in &checks {
        println!(
            "  {:<24} measured {:>12.4e}  tolerance {:>8.1e}  {}",
            c.name,
            c.measured,
            c.tolerance,
            if c.passed() { "pass" } else { "FAIL" }
        );
    }
    assert!(checks.iter().all(|c| c.passed()));

    println!();
    println!("negative control (far field deliberately mis-scaled by 5%):");
    let perturbed = run_oracle_suite(&cfg, true)?;
    for c in perturbed.iter().filter(|c| c.name == "far-field-asymptotics") {
        println!(
            "  {:<24} measured {:>12.4e}  tolerance {:>8.1e}  {}",
            c.name,
            c.measured,
            c.tolerance,
            if c.passed() { "pass" } else { "FAIL (expected)" }
        );
        assert!(!c.passed(), "the control must trip the check");
    }
    println!();
    println!("all checks pass on the real pipeline; the control fails as it should.");
    Ok(())
}
