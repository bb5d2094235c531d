//! The four layer kinds used by the retrieval architecture, each with an
//! exact backward pass.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::tensor::Tensor;
use super::NnError;

/// Stride-1 2-D convolution (cross-correlation) with "same" zero padding.
///
/// Weights are stored row-major as `(kh, kw, in_ch, out_ch)`:
/// `weight[((di*kw + dj)*in_ch + ci)*out_ch + co]`. Padding is asymmetric for
/// even kernels — `floor((k-1)/2)` on the top/left and `ceil((k-1)/2)` on the
/// bottom/right — so every kernel size preserves the spatial extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub kh: usize,
    pub kw: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// A zero-initialized convolution of the given geometry.
    pub fn new(kh: usize, kw: usize, in_ch: usize, out_ch: usize) -> Result<Self, NnError> {
        if kh == 0 || kw == 0 || in_ch == 0 || out_ch == 0 {
            return Err(NnError::InvalidParameter(format!(
                "convolution extents must be positive (kh={kh}, kw={kw}, in={in_ch}, out={out_ch})"
            )));
        }
        Ok(Conv2d {
            kh,
            kw,
            in_ch,
            out_ch,
            weight: vec![0.0; kh * kw * in_ch * out_ch],
            bias: vec![0.0; out_ch],
        })
    }

    /// Top/left padding; bottom/right is `k - 1 - pad`.
    fn pads(&self) -> (usize, usize) {
        ((self.kh - 1) / 2, (self.kw - 1) / 2)
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.channels() != self.in_ch {
            return Err(NnError::ShapeMismatch {
                context: "Conv2d input channels",
                expected: vec![self.in_ch],
                got: vec![x.channels()],
            });
        }
        Ok(())
    }

    /// Writes the im2col patch matrix of sample `b` into `cols`
    /// (`h*w` rows, `kh*kw*in_ch` columns; out-of-range taps stay zero).
    fn im2col(&self, x: &Tensor, b: usize, cols: &mut Array2<f64>) {
        let (h, w) = (x.height(), x.width());
        let (pad_t, pad_l) = self.pads();
        cols.fill(0.0);
        for oi in 0..h {
            for oj in 0..w {
                let row = oi * w + oj;
                for di in 0..self.kh {
                    let ii = oi as isize + di as isize - pad_t as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for dj in 0..self.kw {
                        let jj = oj as isize + dj as isize - pad_l as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let src = x.index(b, ii as usize, jj as usize, 0);
                        let dst = (di * self.kw + dj) * self.in_ch;
                        for ci in 0..self.in_ch {
                            cols[[row, dst + ci]] = x.data()[src + ci];
                        }
                    }
                }
            }
        }
    }

    /// Convolves a batch; output shape `(b, h, w, out_ch)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let [batch, h, w, _] = x.shape();
        let taps = self.kh * self.kw * self.in_ch;
        let wview = ArrayView2::from_shape((taps, self.out_ch), &self.weight)
            .expect("weight buffer matches kernel extents");
        let mut out = Tensor::zeros([batch, h, w, self.out_ch]);
        let mut cols = Array2::zeros((h * w, taps));
        for b in 0..batch {
            self.im2col(x, b, &mut cols);
            let mut oview =
                ArrayViewMut2::from_shape((h * w, self.out_ch), out.sample_mut(b)).unwrap();
            general_mat_mul(1.0, &cols, &wview, 0.0, &mut oview);
        }
        for b in 0..batch {
            let s = out.sample_mut(b);
            for row in s.chunks_exact_mut(self.out_ch) {
                for (v, bias) in row.iter_mut().zip(&self.bias) {
                    *v += bias;
                }
            }
        }
        Ok(out)
    }

    /// Gradients of the forward map: returns
    /// `(d loss/d x, d loss/d weight, d loss/d bias)` given `d loss/d out`.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
        self.check_input(x)?;
        let [batch, h, w, _] = x.shape();
        if grad_out.shape() != [batch, h, w, self.out_ch] {
            return Err(NnError::ShapeMismatch {
                context: "Conv2d grad_out",
                expected: vec![batch, h, w, self.out_ch],
                got: grad_out.shape().to_vec(),
            });
        }
        let taps = self.kh * self.kw * self.in_ch;
        let (pad_t, pad_l) = self.pads();
        let wview = ArrayView2::from_shape((taps, self.out_ch), &self.weight).unwrap();

        let mut grad_x = Tensor::zeros(x.shape());
        let mut grad_w = Array2::<f64>::zeros((taps, self.out_ch));
        let mut grad_b = vec![0.0; self.out_ch];
        let mut cols = Array2::zeros((h * w, taps));
        let mut grad_cols = Array2::zeros((h * w, taps));

        for b in 0..batch {
            let gview = ArrayView2::from_shape((h * w, self.out_ch), grad_out.sample(b)).unwrap();
            // Bias gradient: column sums of the output gradient.
            for row in grad_out.sample(b).chunks_exact(self.out_ch) {
                for (g, acc) in row.iter().zip(grad_b.iter_mut()) {
                    *acc += g;
                }
            }
            // Weight gradient: cols^T · grad_out, accumulated over the batch.
            self.im2col(x, b, &mut cols);
            general_mat_mul(1.0, &cols.t(), &gview, 1.0, &mut grad_w);
            // Input gradient: grad_out · W^T scattered back through im2col.
            general_mat_mul(1.0, &gview, &wview.t(), 0.0, &mut grad_cols);
            for oi in 0..h {
                for oj in 0..w {
                    let row = oi * w + oj;
                    for di in 0..self.kh {
                        let ii = oi as isize + di as isize - pad_t as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for dj in 0..self.kw {
                            let jj = oj as isize + dj as isize - pad_l as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            let dst = grad_x.index(b, ii as usize, jj as usize, 0);
                            let src = (di * self.kw + dj) * self.in_ch;
                            for ci in 0..self.in_ch {
                                grad_x.data_mut()[dst + ci] += grad_cols[[row, src + ci]];
                            }
                        }
                    }
                }
            }
        }
        let (grad_w_vec, _) = grad_w.into_raw_vec_and_offset();
        Ok((grad_x, grad_w_vec, grad_b))
    }
}

/// Cached batch statistics from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub inv_std: Vec<f64>,
    pub x_hat: Tensor,
}

/// Per-channel batch normalization over `(batch, height, width)`.
///
/// Training mode normalizes by the biased (population) batch variance and
/// updates the running statistics with momentum 0.9; inference mode uses the
/// running statistics only.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.channels() != self.channels() {
            return Err(NnError::ShapeMismatch {
                context: "BatchNorm2d channels",
                expected: vec![self.channels()],
                got: vec![x.channels()],
            });
        }
        Ok(())
    }

    /// Normalizes with batch statistics, updates the running statistics, and
    /// returns the cache needed by [`BatchNorm2d::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache), NnError> {
        self.check_input(x)?;
        if x.batch() < 2 {
            return Err(NnError::BatchTooSmall(x.batch()));
        }
        let ch = self.channels();
        let n = (x.len() / ch) as f64;
        let mut mean = vec![0.0; ch];
        for (c, v) in x.data().iter().enumerate().map(|(i, v)| (i % ch, v)) {
            mean[c] += v;
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; ch];
        for (c, v) in x.data().iter().enumerate().map(|(i, v)| (i % ch, v)) {
            let d = v - mean[c];
            var[c] += d * d;
        }
        for v in &mut var {
            *v /= n;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut x_hat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        for (i, v) in x.data().iter().enumerate() {
            let c = i % ch;
            let xh = (v - mean[c]) * inv_std[c];
            x_hat.data_mut()[i] = xh;
            out.data_mut()[i] = self.gamma[c] * xh + self.beta[c];
        }
        for c in 0..ch {
            self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
            self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c];
        }
        Ok((out, BnCache { inv_std, x_hat }))
    }

    /// Normalizes with the stored running statistics (no state change).
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let ch = self.channels();
        let inv_std: Vec<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect();
        let mut out = Tensor::zeros(x.shape());
        for (i, v) in x.data().iter().enumerate() {
            let c = i % ch;
            out.data_mut()[i] = self.gamma[c] * (v - self.running_mean[c]) * inv_std[c] + self.beta[c];
        }
        Ok(out)
    }

    /// Exact gradient through the batch statistics:
    /// `(d loss/d x, d gamma, d beta)`.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let ch = self.channels();
        let n = (grad_out.len() / ch) as f64;
        let mut d_gamma = vec![0.0; ch];
        let mut d_beta = vec![0.0; ch];
        for (i, g) in grad_out.data().iter().enumerate() {
            let c = i % ch;
            d_beta[c] += g;
            d_gamma[c] += g * cache.x_hat.data()[i];
        }
        let mut grad_x = Tensor::zeros(grad_out.shape());
        for (i, g) in grad_out.data().iter().enumerate() {
            let c = i % ch;
            let term = g - d_beta[c] / n - cache.x_hat.data()[i] * d_gamma[c] / n;
            grad_x.data_mut()[i] = self.gamma[c] * cache.inv_std[c] * term;
        }
        (grad_x, d_gamma, d_beta)
    }
}

/// Parametric ReLU with one learnable slope per channel:
/// `y = x` for `x >= 0`, `y = alpha_c * x` for `x < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PRelu {
    pub alpha: Vec<f64>,
}

impl PRelu {
    /// Slopes initialized to 0.25 for every channel.
    pub fn new(channels: usize) -> Self {
        PRelu {
            alpha: vec![0.25; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.channels() != self.channels() {
            return Err(NnError::ShapeMismatch {
                context: "PRelu channels",
                expected: vec![self.channels()],
                got: vec![x.channels()],
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let ch = self.channels();
        let mut out = Tensor::zeros(x.shape());
        for (i, v) in x.data().iter().enumerate() {
            out.data_mut()[i] = if *v >= 0.0 { *v } else { self.alpha[i % ch] * v };
        }
        Ok(out)
    }

    /// `(d loss/d x, d alpha)`; the slope gradient accumulates `g * x` over
    /// the negative entries of each channel.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> (Tensor, Vec<f64>) {
        let ch = self.channels();
        let mut grad_x = Tensor::zeros(x.shape());
        let mut d_alpha = vec![0.0; ch];
        for (i, (v, g)) in x.data().iter().zip(grad_out.data()).enumerate() {
            let c = i % ch;
            if *v >= 0.0 {
                grad_x.data_mut()[i] = *g;
            } else {
                grad_x.data_mut()[i] = self.alpha[c] * g;
                d_alpha[c] += g * v;
            }
        }
        (grad_x, d_alpha)
    }
}

/// Fully connected layer on flattened samples.
///
/// The weight matrix is stored row-major as `(in_features, out_features)`;
/// the input tensor is read as `(batch, features)` where
/// `features = height * width * channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self, NnError> {
        if in_features == 0 || out_features == 0 {
            return Err(NnError::InvalidParameter(format!(
                "dense extents must be positive (in={in_features}, out={out_features})"
            )));
        }
        Ok(Dense {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.features() != self.in_features {
            return Err(NnError::ShapeMismatch {
                context: "Dense input features",
                expected: vec![self.in_features],
                got: vec![x.features()],
            });
        }
        Ok(())
    }

    /// Affine map; output shape `(batch, 1, 1, out_features)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let batch = x.batch();
        let xv = ArrayView2::from_shape((batch, self.in_features), x.data()).unwrap();
        let wv = ArrayView2::from_shape((self.in_features, self.out_features), &self.weight).unwrap();
        let mut out = Tensor::zeros([batch, 1, 1, self.out_features]);
        {
            let mut ov =
                ArrayViewMut2::from_shape((batch, self.out_features), out.data_mut()).unwrap();
            general_mat_mul(1.0, &xv, &wv, 0.0, &mut ov);
        }
        for b in 0..batch {
            for (v, bias) in out.sample_mut(b).iter_mut().zip(&self.bias) {
                *v += bias;
            }
        }
        Ok(out)
    }

    /// `(d loss/d x, d weight, d bias)`; `grad_x` is returned in the shape of
    /// `x`.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
        self.check_input(x)?;
        let batch = x.batch();
        if grad_out.features() != self.out_features || grad_out.batch() != batch {
            return Err(NnError::ShapeMismatch {
                context: "Dense grad_out",
                expected: vec![batch, self.out_features],
                got: vec![grad_out.batch(), grad_out.features()],
            });
        }
        let xv = ArrayView2::from_shape((batch, self.in_features), x.data()).unwrap();
        let wv = ArrayView2::from_shape((self.in_features, self.out_features), &self.weight).unwrap();
        let gv = ArrayView2::from_shape((batch, self.out_features), grad_out.data()).unwrap();

        let mut grad_x = Tensor::zeros(x.shape());
        {
            let mut gx =
                ArrayViewMut2::from_shape((batch, self.in_features), grad_x.data_mut()).unwrap();
            general_mat_mul(1.0, &gv, &wv.t(), 0.0, &mut gx);
        }
        let mut grad_w = Array2::<f64>::zeros((self.in_features, self.out_features));
        general_mat_mul(1.0, &xv.t(), &gv, 0.0, &mut grad_w);
        let mut grad_b = vec![0.0; self.out_features];
        for row in grad_out.data().chunks_exact(self.out_features) {
            for (g, acc) in row.iter().zip(grad_b.iter_mut()) {
                *acc += g;
            }
        }
        let (grad_w_vec, _) = grad_w.into_raw_vec_and_offset();
        Ok((grad_x, grad_w_vec, grad_b))
    }
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

    /// Central finite difference of `f` with respect to `buf[i]`.
    fn central_diff(buf: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let h = 1e-6;
        let saved = buf[i];
        buf[i] = saved + h;
        let fp = f(buf);
        buf[i] = saved - h;
        let fm = f(buf);
        buf[i] = saved;
        (fp - fm) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn conv_1x1_identity_kernel_passes_input_through() {
        let mut conv = Conv2d::new(1, 1, 1, 1).unwrap();
        conv.weight[0] = 1.0;
        let x = random_tensor([2, 3, 4, 1], 1);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_2x2_ones_kernel_matches_hand_convolution() {
        // 3x3 input 1..9, 2x2 all-ones kernel, asymmetric same padding
        // (top/left 0, bottom/right 1): out[0][0] = 1+2+4+5 = 12, and the
        // bottom-right corner only sees x[2][2] = 9.
        let x = Tensor::from_vec([1, 3, 3, 1], (1..=9).map(f64::from).collect()).unwrap();
        let mut conv = Conv2d::new(2, 2, 1, 1).unwrap();
        conv.weight.fill(1.0);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), [1, 3, 3, 1]);
        assert_eq!(y.get(0, 0, 0, 0), 12.0);
        assert_eq!(y.get(0, 1, 1, 0), 5.0 + 6.0 + 8.0 + 9.0);
        assert_eq!(y.get(0, 2, 2, 0), 9.0);
    }

    #[test]
    fn conv_matches_direct_loop_oracle() {
        let conv = Conv2d {
            kh: 3,
            kw: 2,
            in_ch: 2,
            out_ch: 3,
            weight: random_tensor([3, 2, 2, 3], 2).into_data(),
            bias: vec![0.3, -0.1, 0.7],
        };
        let x = random_tensor([2, 5, 4, 2], 3);
        let y = conv.forward(&x).unwrap();

        let (pad_t, pad_l) = ((conv.kh - 1) / 2, (conv.kw - 1) / 2);
        for b in 0..2 {
            for oi in 0..5usize {
                for oj in 0..4usize {
                    for co in 0..3 {
                        let mut acc = conv.bias[co];
                        for di in 0..conv.kh {
                            for dj in 0..conv.kw {
                                let ii = oi as isize + di as isize - pad_t as isize;
                                let jj = oj as isize + dj as isize - pad_l as isize;
                                if ii < 0 || ii >= 5 || jj < 0 || jj >= 4 {
                                    continue;
                                }
                                for ci in 0..conv.in_ch {
                                    let w = conv.weight
                                        [((di * conv.kw + dj) * conv.in_ch + ci) * conv.out_ch + co];
                                    acc += w * x.get(b, ii as usize, jj as usize, ci);
                                }
                            }
                        }
                        assert!(
                            (acc - y.get(b, oi, oj, co)).abs() < 1e-12,
                            "mismatch at ({b},{oi},{oj},{co})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut conv = Conv2d::new(2, 2, 2, 3).unwrap();
        conv.weight = random_tensor([2, 2, 2, 3], 4).into_data();
        conv.bias = vec![0.1, -0.2, 0.05];
        let mut x = random_tensor([2, 4, 4, 2], 5);
        // Fixed linear functional of the output keeps the check scalar.
        let probe = random_tensor([2, 4, 4, 3], 6);
        let loss_of = |conv: &Conv2d, x: &Tensor| -> f64 {
            conv.forward(x)
                .unwrap()
                .data()
                .iter()
                .zip(probe.data())
                .map(|(y, p)| y * p)
                .sum()
        };
        let (gx, gw, gb) = conv.backward(&x, &probe).unwrap();

        let base = conv.clone();
        for i in 0..x.len() {
            let shape = x.shape();
            let num = central_diff(x.data_mut(), i, |buf| {
                loss_of(&base, &Tensor::from_vec(shape, buf.to_vec()).unwrap())
            });
            assert!(rel_err(gx.data()[i], num) < 1e-6, "grad_x[{i}]");
        }
        for i in 0..conv.weight.len() {
            let mut c = conv.clone();
            let num = central_diff(&mut c.weight.clone(), i, |buf| {
                c.weight.copy_from_slice(buf);
                loss_of(&c, &x)
            });
            assert!(rel_err(gw[i], num) < 1e-6, "grad_w[{i}]");
        }
        for i in 0..conv.bias.len() {
            let mut c = conv.clone();
            let num = central_diff(&mut c.bias.clone(), i, |buf| {
                c.bias.copy_from_slice(buf);
                loss_of(&c, &x)
            });
            assert!(rel_err(gb[i], num) < 1e-6, "grad_b[{i}]");
        }
    }

    #[test]
    fn batchnorm_constant_channel_returns_beta() {
        let mut bn = BatchNorm2d::new(2);
        bn.gamma = vec![3.0, -1.5];
        bn.beta = vec![0.7, 2.0];
        let mut x = Tensor::zeros([3, 2, 2, 2]);
        for i in 0..x.len() {
            x.data_mut()[i] = if i % 2 == 0 { 5.0 } else { -4.0 };
        }
        let (y, _) = bn.forward_train(&x).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let expected = bn.beta[i % 2];
            assert!((v - expected).abs() < 1e-6, "entry {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut bn = BatchNorm2d::new(3);
        let x = random_tensor([4, 3, 3, 3], 7);
        let (y, _) = bn.forward_train(&x).unwrap();
        let n = (y.len() / 3) as f64;
        for c in 0..3 {
            let raw: Vec<f64> = x.data().iter().skip(c).step_by(3).copied().collect();
            let raw_mean = raw.iter().sum::<f64>() / n;
            let raw_var = raw.iter().map(|v| (v - raw_mean) * (v - raw_mean)).sum::<f64>() / n;

            let vals: Vec<f64> = y.data().iter().skip(c).step_by(3).copied().collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-8, "mean[{c}] = {mean}");
            // The eps stabilizer makes the exact output variance v/(v+eps).
            let expected = raw_var / (raw_var + bn.eps);
            assert!((var - expected).abs() < 1e-8, "var[{c}] = {var} vs {expected}");
        }
    }

    #[test]
    fn batchnorm_updates_running_statistics_with_momentum() {
        let mut bn = BatchNorm2d::new(1);
        let x = Tensor::from_vec([2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        bn.forward_train(&x).unwrap();
        // batch mean 2, biased variance 1; running = 0.9*old + 0.1*batch.
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.9 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn batchnorm_infer_uses_running_statistics() {
        let mut bn = BatchNorm2d::new(1);
        bn.running_mean = vec![2.0];
        bn.running_var = vec![4.0];
        bn.gamma = vec![3.0];
        bn.beta = vec![-1.0];
        let x = Tensor::from_vec([1, 1, 1, 1], vec![4.0]).unwrap();
        let y = bn.forward_infer(&x).unwrap();
        let expected = 3.0 * (4.0 - 2.0) / (4.0f64 + 1e-5).sqrt() - 1.0;
        assert!((y.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_rejects_batch_of_one_in_train_mode() {
        let mut bn = BatchNorm2d::new(1);
        let x = Tensor::zeros([1, 2, 2, 1]);
        assert!(matches!(
            bn.forward_train(&x),
            Err(NnError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let bn0 = BatchNorm2d {
            gamma: vec![1.3, 0.8],
            beta: vec![-0.2, 0.4],
            ..BatchNorm2d::new(2)
        };
        let mut x = random_tensor([3, 2, 2, 2], 8);
        let probe = random_tensor([3, 2, 2, 2], 9);
        let loss_of = |bn: &BatchNorm2d, x: &Tensor| -> f64 {
            let mut bn = bn.clone();
            bn.forward_train(x)
                .unwrap()
                .0
                .data()
                .iter()
                .zip(probe.data())
                .map(|(y, p)| y * p)
                .sum()
        };
        let mut bn = bn0.clone();
        let (_, cache) = bn.forward_train(&x).unwrap();
        let (gx, dgamma, dbeta) = bn0.backward(&cache, &probe);

        for i in 0..x.len() {
            let shape = x.shape();
            let num = central_diff(x.data_mut(), i, |buf| {
                loss_of(&bn0, &Tensor::from_vec(shape, buf.to_vec()).unwrap())
            });
            assert!(rel_err(gx.data()[i], num) < 1e-5, "grad_x[{i}]");
        }
        for c in 0..2 {
            let mut b = bn0.clone();
            let num = central_diff(&mut b.gamma.clone(), c, |buf| {
                b.gamma.copy_from_slice(buf);
                loss_of(&b, &x)
            });
            assert!(rel_err(dgamma[c], num) < 1e-5, "dgamma[{c}]");
            let mut b = bn0.clone();
            let num = central_diff(&mut b.beta.clone(), c, |buf| {
                b.beta.copy_from_slice(buf);
                loss_of(&b, &x)
            });
            assert!(rel_err(dbeta[c], num) < 1e-5, "dbeta[{c}]");
        }
    }

    #[test]
    fn prelu_applies_the_paper_rule() {
        let act = PRelu {
            alpha: vec![0.1],
        };
        let x = Tensor::from_vec([1, 1, 2, 1], vec![3.0, -2.0]).unwrap();
        let y = act.forward(&x).unwrap();
        assert_eq!(y.data()[0], 3.0);
        assert!((y.data()[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn prelu_alpha_gradient_accumulates_negative_inputs() {
        let act = PRelu {
            alpha: vec![0.1],
        };
        let x = Tensor::from_vec([1, 1, 1, 1], vec![-2.0]).unwrap();
        let ones = Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
        let (gx, dalpha) = act.backward(&x, &ones);
        assert_eq!(dalpha[0], -2.0);
        assert!((gx.data()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn prelu_gradients_match_finite_differences() {
        let act = PRelu {
            alpha: vec![0.25, -0.3],
        };
        let mut x = random_tensor([2, 3, 3, 2], 10);
        assert!(x.data().iter().all(|v| *v != 0.0), "kink exclusion");
        let probe = random_tensor([2, 3, 3, 2], 11);
        let loss_of = |act: &PRelu, x: &Tensor| -> f64 {
            act.forward(x)
                .unwrap()
                .data()
                .iter()
                .zip(probe.data())
                .map(|(y, p)| y * p)
                .sum()
        };
        let (gx, dalpha) = act.backward(&x, &probe);
        for i in 0..x.len() {
            let shape = x.shape();
            let num = central_diff(x.data_mut(), i, |buf| {
                loss_of(&act, &Tensor::from_vec(shape, buf.to_vec()).unwrap())
            });
            assert!(rel_err(gx.data()[i], num) < 1e-6, "grad_x[{i}]");
        }
        for c in 0..2 {
            let mut a = act.clone();
            let num = central_diff(&mut a.alpha.clone(), c, |buf| {
                a.alpha.copy_from_slice(buf);
                loss_of(&a, &x)
            });
            assert!(rel_err(dalpha[c], num) < 1e-6, "dalpha[{c}]");
        }
    }

    #[test]
    fn dense_identity_weight_passes_through() {
        let mut dense = Dense::new(3, 3).unwrap();
        for i in 0..3 {
            dense.weight[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec([1, 1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = dense.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dense_matches_hand_arithmetic() {
        let dense = Dense {
            in_features: 2,
            out_features: 2,
            weight: vec![1.0, 2.0, 3.0, 4.0],
            bias: vec![0.0, 0.0],
        };
        let x = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 1.0]).unwrap();
        let y = dense.forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0]);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let dense = Dense {
            in_features: 6,
            out_features: 4,
            weight: random_tensor([1, 1, 6, 4], 12).into_data(),
            bias: vec![0.1, -0.3, 0.0, 0.9],
        };
        let mut x = random_tensor([3, 1, 2, 3], 13);
        let probe = random_tensor([3, 1, 1, 4], 14);
        let loss_of = |d: &Dense, x: &Tensor| -> f64 {
            d.forward(x)
                .unwrap()
                .data()
                .iter()
                .zip(probe.data())
                .map(|(y, p)| y * p)
                .sum()
        };
        let (gx, gw, gb) = dense.backward(&x, &probe).unwrap();
        for i in 0..x.len() {
            let shape = x.shape();
            let num = central_diff(x.data_mut(), i, |buf| {
                loss_of(&dense, &Tensor::from_vec(shape, buf.to_vec()).unwrap())
            });
            assert!(rel_err(gx.data()[i], num) < 1e-6, "grad_x[{i}]");
        }
        for i in 0..dense.weight.len() {
            let mut d = dense.clone();
            let num = central_diff(&mut d.weight.clone(), i, |buf| {
                d.weight.copy_from_slice(buf);
                loss_of(&d, &x)
            });
            assert!(rel_err(gw[i], num) < 1e-6, "grad_w[{i}]");
        }
        for i in 0..dense.bias.len() {
            let mut d = dense.clone();
            let num = central_diff(&mut d.bias.clone(), i, |buf| {
                d.bias.copy_from_slice(buf);
                loss_of(&d, &x)
            });
            assert!(rel_err(gb[i], num) < 1e-6, "grad_b[{i}]");
        }
    }
}
