//! Analytic far field of a sound-soft disk via separation of variables.
//!
//! With the Jacobi-Anger expansion of the incident plane wave, the scattered
//! field of the disk of radius `a` is a Hankel series whose far field (in the
//! crate's normalization) is
//!
//! `u_inf(x^) = 4 i * [ J_0(ka)/H_0(ka) + 2 sum_n (J_n(ka)/H_n(ka)) cos(n phi) ]`,
//!
//! where `phi` is the angle between observation and incidence. This is a
//! validation oracle: nothing in the production pipeline depends on it.

use crate::special::{bessel_j, hankel1};
use num_complex::Complex64;

/// Far field of the sound-soft disk of radius `a` centred at the origin for
/// incident direction `theta`, evaluated at `observation` directions (unit
/// vectors). The series is truncated at `ceil(ka) + 40` terms, far past the
/// turnover into superexponential decay.
pub fn circle_series_far_field(
    a: f64,
    k: f64,
    theta: [f64; 2],
    observation: &[[f64; 2]],
) -> Vec<Complex64> {
    assert!(a > 0.0 && k > 0.0, "disk radius and wavenumber must be positive");
    let ka = k * a;
    let terms = ka.ceil() as usize + 40;
    let ratios: Vec<Complex64> = (0..=terms)
        .map(|n| Complex64::new(bessel_j(n as u32, ka), 0.0) / hankel1(n as u32, ka))
        .collect();
    observation
        .iter()
        .map(|obs| {
            // cos(n phi) via the Chebyshev recurrence on cos(phi) = obs . theta.
            let c = obs[0] * theta[0] + obs[1] * theta[1];
            let mut sum = ratios[0];
            let mut cos_prev = 1.0;
            let mut cos_cur = c;
            for ratio in &ratios[1..] {
                sum += 2.0 * ratio * cos_cur;
                let next = 2.0 * c * cos_cur - cos_prev;
                cos_prev = cos_cur;
                cos_cur = next;
            }
            Complex64::new(0.0, 4.0) * sum
        })
        .collect()
}
