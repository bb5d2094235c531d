//! Training losses: batch-mean squared Frobenius error, optionally with a
//! seam-regularization term on the assembled response matrix.

use super::tensor::Tensor;
use super::NnError;

/// Which loss a training run minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Plain squared Frobenius error over all output entries.
    L1,
    /// [`LossKind::L1`] plus the seam penalty (`loss_l2`).
    L2,
}

impl LossKind {
    /// Evaluates the chosen loss; `m1` and `alpha` only matter for `L2`.
    pub fn evaluate(
        self,
        pred: &Tensor,
        target: &Tensor,
        m1: usize,
        alpha: f64,
    ) -> Result<(f64, Tensor), NnError> {
        match self {
            LossKind::L1 => loss_l1(pred, target),
            LossKind::L2 => loss_l2(pred, target, m1, alpha),
        }
    }
}

fn check_same_shape(pred: &Tensor, target: &Tensor) -> Result<(), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            context: "loss shapes",
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over the batch of the squared Frobenius error
/// `(1/batch) * sum_n ||pred_n - target_n||_F^2`, summed over all four blocks
/// of the response matrix (i.e. over every output entry, both channels).
///
/// Returns the scalar loss and its exact gradient with respect to `pred`.
pub fn loss_l1(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    check_same_shape(pred, target)?;
    let batch = pred.batch().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        loss += d * d;
        grad.data_mut()[i] = 2.0 * d / batch;
    }
    Ok((loss / batch, grad))
}

/// [`loss_l1`] plus `alpha/batch` times the squared seam-jump seminorm of the
/// assembled matrix `[[F11^C, F12^true], [F21^C, F22^C]]`.
///
/// The assembled matrix takes rows `0..m1` × columns `m1..2m` (the (1,2)
/// block) from `target` — those entries are measured, not predicted — and
/// everything else from `pred`. The penalty sums, over both channels, the
/// squared jumps across the two block seams: columns `m1-1` vs `m1` along
/// every row, and rows `m1-1` vs `m1` along every column. Entries taken from
/// `target` contribute no gradient, so the (1,2)/(2,2) seam pulls the
/// predicted `F22` toward the measured `F12` boundary line.
///
/// With `alpha = 0` the result is bit-for-bit identical to [`loss_l1`].
pub fn loss_l2(
    pred: &Tensor,
    target: &Tensor,
    m1: usize,
    alpha: f64,
) -> Result<(f64, Tensor), NnError> {
    check_same_shape(pred, target)?;
    let [batch, h, w, ch] = pred.shape();
    if h != w || ch != 2 {
        return Err(NnError::ShapeMismatch {
            context: "loss_l2 expects square two-channel outputs",
            expected: vec![h, h, 2],
            got: vec![h, w, ch],
        });
    }
    if m1 == 0 || m1 >= h {
        return Err(NnError::InvalidParameter(format!(
            "m1 must satisfy 1 <= m1 < {h} (got {m1})"
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(NnError::InvalidParameter(format!(
            "alpha must be finite and non-negative (got {alpha})"
        )));
    }
    let (mut loss, mut grad) = loss_l1(pred, target)?;
    if alpha == 0.0 {
        return Ok((loss, grad));
    }

    let bf = batch.max(1) as f64;
    let scale = 2.0 * alpha / bf;
    let mut seam_sum = 0.0;
    for b in 0..batch {
        // Assembled entry: true F12 in rows 0..m1 x cols m1..2m, else pred.
        let a = |r: usize, c: usize, k: usize| -> (f64, bool) {
            if r < m1 && c >= m1 {
                (target.get(b, r, c, k), false)
            } else {
                (pred.get(b, r, c, k), true)
            }
        };
        for k in 0..2 {
            // Vertical seam: column m1-1 against column m1, every row.
            for r in 0..h {
                let (left, left_pred) = a(r, m1 - 1, k);
                let (right, right_pred) = a(r, m1, k);
                let d = left - right;
                seam_sum += d * d;
                if left_pred {
                    grad.data_mut()[pred.index(b, r, m1 - 1, k)] += scale * d;
                }
                if right_pred {
                    grad.data_mut()[pred.index(b, r, m1, k)] -= scale * d;
                }
            }
            // Horizontal seam: row m1-1 against row m1, every column.
            for c in 0..w {
                let (top, top_pred) = a(m1 - 1, c, k);
                let (bottom, bottom_pred) = a(m1, c, k);
                let d = top - bottom;
                seam_sum += d * d;
                if top_pred {
                    grad.data_mut()[pred.index(b, m1 - 1, c, k)] += scale * d;
                }
                if bottom_pred {
                    grad.data_mut()[pred.index(b, m1, c, k)] -= scale * d;
                }
            }
        }
    }
    loss += alpha * seam_sum / bf;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = substream(seed, 0);
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let t = random_tensor([3, 4, 4, 2], 1);
        let (l1, g1) = loss_l1(&t, &t).unwrap();
        assert_eq!(l1, 0.0);
        assert!(g1.data().iter().all(|v| *v == 0.0));
        // The seam penalty measures the assembled matrix itself, so at the
        // truth it equals alpha times the true matrix's own seam roughness.
        let (batch, m1, alpha) = (3usize, 2usize, 1e-3);
        let mut seam = 0.0;
        for b in 0..batch {
            for k in 0..2 {
                for r in 0..4 {
                    let d = t.get(b, r, m1 - 1, k) - t.get(b, r, m1, k);
                    seam += d * d;
                }
                for c in 0..4 {
                    let d = t.get(b, m1 - 1, c, k) - t.get(b, m1, c, k);
                    seam += d * d;
                }
            }
        }
        let (l2, _) = loss_l2(&t, &t, m1, alpha).unwrap();
        assert!((l2 - alpha * seam / batch as f64).abs() < 1e-15);
    }

    #[test]
    fn l1_matches_hand_arithmetic_on_unit_blocks() {
        // Four 1x1 blocks with residuals (1, 2, 0, 2) in channel 0:
        // loss = 1 + 4 + 0 + 4 = 9 for a single sample.
        let pred = Tensor::from_vec(
            [1, 2, 2, 2],
            vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0, 0.0],
        )
        .unwrap();
        let target = Tensor::zeros([1, 2, 2, 2]);
        let (l, g) = loss_l1(&pred, &target).unwrap();
        assert_eq!(l, 9.0);
        assert_eq!(g.get(0, 0, 0, 0), 2.0);
        assert_eq!(g.get(0, 0, 1, 0), 4.0);
    }

    #[test]
    fn l1_scales_quadratically_with_residuals() {
        let target = random_tensor([2, 3, 3, 2], 2);
        let resid = random_tensor([2, 3, 3, 2], 3);
        let make_pred = |c: f64| {
            let mut p = target.clone();
            for (pv, rv) in p.data_mut().iter_mut().zip(resid.data()) {
                *pv += c * rv;
            }
            p
        };
        let (l1, _) = loss_l1(&make_pred(1.0), &target).unwrap();
        let (l3, _) = loss_l1(&make_pred(3.0), &target).unwrap();
        assert!((l3 - 9.0 * l1).abs() < 1e-12 * l3.abs());
    }

    #[test]
    fn l2_with_zero_alpha_is_bitwise_l1() {
        let pred = random_tensor([2, 4, 4, 2], 4);
        let target = random_tensor([2, 4, 4, 2], 5);
        let (l1, g1) = loss_l1(&pred, &target).unwrap();
        let (l2, g2) = loss_l2(&pred, &target, 2, 0.0).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn constant_assembled_matrix_has_zero_seam_penalty() {
        let mut pred = Tensor::zeros([1, 4, 4, 2]);
        let mut target = Tensor::zeros([1, 4, 4, 2]);
        pred.data_mut().fill(0.75);
        target.data_mut().fill(0.75);
        // Perturb target outside the F12 region so l1 > 0 but the assembled
        // matrix (pred with true F12) stays constant.
        target.set(0, 3, 0, 0, 0.5);
        let (l1, _) = loss_l1(&pred, &target).unwrap();
        let (l2, _) = loss_l2(&pred, &target, 2, 0.8).unwrap();
        assert!(l1 > 0.0);
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn seam_term_matches_the_two_by_two_example() {
        // m1 = 1, blocks {F11^C = 0, F12^true = 1, F21^C = 2, F22^C = 3}:
        // seam = |0-1|^2 + |2-3|^2 + |0-2|^2 + |1-3|^2 = 10.
        let mut pred = Tensor::zeros([1, 2, 2, 2]);
        pred.set(0, 0, 0, 0, 0.0);
        pred.set(0, 0, 1, 0, 99.0); // ignored by the seam: true F12 overrides
        pred.set(0, 1, 0, 0, 2.0);
        pred.set(0, 1, 1, 0, 3.0);
        let mut target = Tensor::zeros([1, 2, 2, 2]);
        target.set(0, 0, 0, 0, 0.0);
        target.set(0, 0, 1, 0, 1.0);
        target.set(0, 1, 0, 0, 2.0);
        target.set(0, 1, 1, 0, 3.0);
        let (l1, _) = loss_l1(&pred, &target).unwrap();
        assert_eq!(l1, 98.0 * 98.0);
        let (l2, _) = loss_l2(&pred, &target, 1, 0.5).unwrap();
        assert_eq!(l2, 98.0 * 98.0 + 0.5 * 10.0);
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let mut pred = random_tensor([2, 4, 4, 2], 6);
        let target = random_tensor([2, 4, 4, 2], 7);
        let (m1, alpha) = (2usize, 0.7);
        let (_, grad) = loss_l2(&pred, &target, m1, alpha).unwrap();
        let h = 1e-6;
        for i in 0..pred.len() {
            let saved = pred.data()[i];
            pred.data_mut()[i] = saved + h;
            let (fp, _) = loss_l2(&pred, &target, m1, alpha).unwrap();
            pred.data_mut()[i] = saved - h;
            let (fm, _) = loss_l2(&pred, &target, m1, alpha).unwrap();
            pred.data_mut()[i] = saved;
            let num = (fp - fm) / (2.0 * h);
            let a = grad.data()[i];
            assert!(
                (a - num).abs() / a.abs().max(num.abs()).max(1e-3) < 1e-6,
                "grad[{i}]: analytic {a} vs numeric {num}"
            );
        }
        // Entries inside the measured F12 region carry only the L1 term.
        let (_, g1) = loss_l1(&pred, &target).unwrap();
        for r in 0..m1 {
            for c in m1..4 {
                for k in 0..2 {
                    let idx = pred.index(0, r, c, k);
                    assert_eq!(grad.data()[idx].to_bits(), g1.data()[idx].to_bits());
                }
            }
        }
    }

    #[test]
    fn l2_validates_its_arguments() {
        let t = random_tensor([1, 4, 4, 2], 8);
        assert!(loss_l2(&t, &t, 0, 0.1).is_err());
        assert!(loss_l2(&t, &t, 4, 0.1).is_err());
        assert!(loss_l2(&t, &t, 2, -0.5).is_err());
        let odd = random_tensor([1, 4, 4, 1], 9);
        assert!(loss_l2(&odd, &odd, 2, 0.1).is_err());
        let other = random_tensor([1, 4, 3, 2], 10);
        assert!(loss_l1(&t, &other).is_err());
    }
}
