//! Bessel and Hankel functions of integer order.
//!
//! Thin wrappers over libm's `jn`/`yn` (which dispatch to `j0`/`j1`/`y0`/`y1`
//! for low orders), plus the first-kind Hankel function used throughout the
//! Helmholtz kernels. Accuracy is pinned in tests against high-precision
//! reference values and an independent integral representation.

use num_complex::Complex64;

/// Bessel function of the first kind, `J_n(x)`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    libm::jn(n as i32, x)
}

/// Bessel function of the second kind, `Y_n(x)`. Requires `x > 0`.
pub fn bessel_y(n: u32, x: f64) -> f64 {
    debug_assert!(x > 0.0, "Y_n requires a positive argument");
    libm::yn(n as i32, x)
}

/// Hankel function of the first kind, `H^(1)_n(x) = J_n(x) + i Y_n(x)`.
/// Requires `x > 0`.
pub fn hankel1(n: u32, x: f64) -> Complex64 {
    Complex64::new(bessel_j(n, x), bessel_y(n, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Reference values computed with 40-digit arithmetic.
    const J_REF: &[(u32, f64, f64)] = &[
        (0, 0.7, 0.881_200_888_607_405_295_45),
        (0, 3.3, -0.344_296_260_398_884_598_19),
        (1, 0.7, 0.328_995_741_540_058_929_59),
        (1, 12.5, -0.165_483_804_614_759_718_46),
        (5, 2.0, 0.007_039_629_755_871_685_484_2),
        (12, 7.5, 0.005_225_044_685_803_462_471_9),
        (41, 1.0, 1.351_313_102_452_444_924_8e-62),
        (30, 15.0, 1.037_471_020_107_871_819e-7),
    ];

    const Y_REF: &[(u32, f64, f64)] = &[
        (0, 0.7, -0.190_664_929_337_395_116_43),
        (0, 3.3, 0.269_091_995_054_533_843_93),
        (1, 0.7, -1.103_249_871_907_633_431_2),
        (1, 12.5, -0.153_838_256_537_501_180_08),
        (5, 2.0, -9.935_989_128_481_974_981),
        (12, 7.5, -6.555_706_818_653_759_196_7),
        (41, 1.0, -5.746_978_544_205_162_822_4e59),
        (30, 15.0, -118_134.193_104_196_335_27),
    ];

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs()
    }

    #[test]
    fn j_matches_reference() {
        for &(n, x, want) in J_REF {
            let got = bessel_j(n, x);
            assert!(
                rel_err(got, want) < 1e-13,
                "J_{n}({x}): got {got:e}, want {want:e}"
            );
        }
    }

    #[test]
    fn y_matches_reference() {
        for &(n, x, want) in Y_REF {
            let got = bessel_y(n, x);
            assert!(
                rel_err(got, want) < 1e-13,
                "Y_{n}({x}): got {got:e}, want {want:e}"
            );
        }
    }

    #[test]
    fn hankel_combines_j_and_y() {
        let h = hankel1(3, 2.25);
        assert_eq!(h.re, bessel_j(3, 2.25));
        assert_eq!(h.im, bessel_y(3, 2.25));
    }

    /// Independent route: J_n(x) = (1/2pi) * int_0^{2pi} cos(n t - x sin t) dt.
    /// The integrand is entire and 2pi-periodic, so the rectangle rule
    /// converges spectrally; 512 nodes is far beyond machine precision here.
    #[test]
    fn j_matches_integral_representation() {
        let nodes = 512;
        for &(n, x) in &[(0u32, 0.7), (1, 3.3), (5, 2.0), (12, 7.5), (8, 14.0)] {
            let mut sum = 0.0;
            for j in 0..nodes {
                let t = 2.0 * PI * j as f64 / nodes as f64;
                sum += (n as f64 * t - x * t.sin()).cos();
            }
            let integral = sum / nodes as f64;
            let direct = bessel_j(n, x);
            assert!(
                (integral - direct).abs() < 1e-13,
                "J_{n}({x}): integral {integral:e} vs libm {direct:e}"
            );
        }
    }
}
