//! The retrieval architecture: five conv → batch-norm → PReLU blocks followed
//! by one dense head, plus checkpoint serialization.

use std::path::Path;

use super::init::glorot_uniform;
use super::layers::{BatchNorm2d, BnCache, Conv2d, Dense, PRelu};
use super::tensor::Tensor;
use super::NnError;
use crate::bytesio::{put_f64, put_u32, put_u64, put_u8, Reader};
use crate::msr::AcquisitionMode;
use crate::rng::substream;

/// Magic bytes of the checkpoint format.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSRN";
/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// One conv → batch-norm → PReLU stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub act: PRelu,
}

/// Architecture description.
///
/// The reference stack is five blocks with out-channels
/// `(128, 64, 128, 64, 1)` scaled by a channel multiplier (desk scale 0.125
/// gives `(16, 8, 16, 8, 1)`; the final block always has one channel) and
/// kernels `3×3, 2×2, 4×4, 5×5, 4×4`, followed by a dense map onto the full
/// `(2m, 2m, 2)` response tensor. All convolutions preserve the spatial
/// extent, so the dense input has `in_h * in_w * channels.last()` features.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// Input sample shape `(height, width, channels)`.
    pub in_shape: [usize; 3],
    /// Output sample shape `(height, width, channels)`.
    pub out_shape: [usize; 3],
    /// Conv out-channels, one per block.
    pub channels: Vec<usize>,
    /// Kernel extents `(kh, kw)`, one per block.
    pub kernels: Vec<(usize, usize)>,
}

impl NetworkSpec {
    /// The five-block reference architecture at a given channel multiplier.
    pub fn reference(
        in_shape: [usize; 3],
        out_shape: [usize; 3],
        net_scale: f64,
    ) -> Result<Self, NnError> {
        if !net_scale.is_finite() || net_scale <= 0.0 {
            return Err(NnError::InvalidParameter(format!(
                "net_scale must be positive (got {net_scale})"
            )));
        }
        let mut channels: Vec<usize> = [128.0, 64.0, 128.0, 64.0]
            .iter()
            .map(|base| ((base * net_scale).round() as usize).max(1))
            .collect();
        channels.push(1);
        let spec = NetworkSpec {
            in_shape,
            out_shape,
            channels,
            kernels: vec![(3, 3), (2, 2), (4, 4), (5, 5), (4, 4)],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_shape.contains(&0) || self.out_shape.contains(&0) {
            return Err(NnError::InvalidParameter(
                "network shapes must have positive extents".into(),
            ));
        }
        if self.channels.is_empty() || self.channels.len() != self.kernels.len() {
            return Err(NnError::InvalidParameter(format!(
                "need one kernel per block ({} channels, {} kernels)",
                self.channels.len(),
                self.kernels.len()
            )));
        }
        if self.channels.contains(&0) || self.kernels.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(NnError::InvalidParameter(
                "block extents must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Features entering the dense head.
    pub fn dense_in_features(&self) -> usize {
        self.in_shape[0] * self.in_shape[1] * self.channels[self.channels.len() - 1]
    }

    /// Features leaving the dense head.
    pub fn out_features(&self) -> usize {
        self.out_shape.iter().product()
    }
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    bn_caches: Vec<BnCache>,
    act_inputs: Vec<Tensor>,
    dense_input: Tensor,
}

/// Checkpoint header fields describing the acquisition geometry the model was
/// trained for. For [`AcquisitionMode::Subsampled`] the fixed row/column
/// indices (length `subsample_p` each) are stored; other modes keep
/// `subsample_p = 0` with empty index lists. Models trained with input
/// standardization carry the per-channel statistics; both lists are empty
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub mode: AcquisitionMode,
    pub two_m: u32,
    pub m1: u32,
    pub subsample_p: u32,
    pub row_indices: Vec<u32>,
    pub col_indices: Vec<u32>,
    /// Per-channel input mean subtracted before inference (empty = raw inputs).
    pub input_mean: Vec<f64>,
    /// Per-channel input standard deviation divided out before inference.
    pub input_std: Vec<f64>,
}

impl CheckpointMeta {
    /// Header metadata for a full-block (phased or phaseless) model.
    pub fn full_block(mode: AcquisitionMode, two_m: u32, m1: u32) -> Self {
        CheckpointMeta {
            mode,
            two_m,
            m1,
            subsample_p: 0,
            row_indices: Vec::new(),
            col_indices: Vec::new(),
            input_mean: Vec::new(),
            input_std: Vec::new(),
        }
    }

    /// Header metadata for a subsampled model with its fixed index sets.
    pub fn subsampled(two_m: u32, m1: u32, rows: Vec<u32>, cols: Vec<u32>) -> Self {
        CheckpointMeta {
            mode: AcquisitionMode::Subsampled,
            two_m,
            m1,
            subsample_p: rows.len() as u32,
            row_indices: rows,
            col_indices: cols,
            input_mean: Vec::new(),
            input_std: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.m1 == 0 || self.m1 >= self.two_m {
            return Err(NnError::InvalidParameter(format!(
                "checkpoint split m1 = {} must lie strictly inside (0, {})",
                self.m1, self.two_m
            )));
        }
        let p = self.subsample_p as usize;
        let want = if self.mode == AcquisitionMode::Subsampled {
            if p == 0 {
                return Err(NnError::InvalidParameter(
                    "subsampled checkpoints need p >= 1".into(),
                ));
            }
            p
        } else {
            0
        };
        if self.row_indices.len() != want || self.col_indices.len() != want {
            return Err(NnError::InvalidParameter(format!(
                "checkpoint index lists must have length {want} (got {}, {})",
                self.row_indices.len(),
                self.col_indices.len()
            )));
        }
        if self.input_mean.len() != self.input_std.len() {
            return Err(NnError::InvalidParameter(format!(
                "standardization mean/std lengths differ ({} vs {})",
                self.input_mean.len(),
                self.input_std.len()
            )));
        }
        if !self.input_mean.is_empty() {
            let c = self.input_shape()[2];
            if self.input_mean.len() != c {
                return Err(NnError::InvalidParameter(format!(
                    "standardization statistics have {} channels, input has {c}",
                    self.input_mean.len()
                )));
            }
            if !self
                .input_mean
                .iter()
                .chain(&self.input_std)
                .all(|v| v.is_finite())
                || self.input_std.iter().any(|&s| s <= 0.0)
            {
                return Err(NnError::InvalidParameter(
                    "standardization statistics must be finite with positive std".into(),
                ));
            }
        }
        Ok(())
    }

    fn mode_tag(mode: AcquisitionMode) -> u8 {
        match mode {
            AcquisitionMode::Phased => 0,
            AcquisitionMode::Phaseless => 1,
            AcquisitionMode::Subsampled => 2,
        }
    }

    fn mode_from_tag(tag: u8) -> Result<AcquisitionMode, NnError> {
        match tag {
            0 => Ok(AcquisitionMode::Phased),
            1 => Ok(AcquisitionMode::Phaseless),
            2 => Ok(AcquisitionMode::Subsampled),
            other => Err(NnError::MalformedCheckpoint(format!(
                "unknown acquisition mode tag {other}"
            ))),
        }
    }

    /// Input sample shape `(h, w, c)` implied by the acquisition mode: the
    /// measured block is `m1 x (2m - m1)`, observed fully (phased), as moduli
    /// (phaseless), or at `p x p` fixed positions (subsampled).
    pub fn input_shape(&self) -> [usize; 3] {
        let h = self.m1 as usize;
        let w = (self.two_m - self.m1) as usize;
        match self.mode {
            AcquisitionMode::Phased => [h, w, 2],
            AcquisitionMode::Phaseless => [h, w, 1],
            AcquisitionMode::Subsampled => {
                [self.subsample_p as usize, self.subsample_p as usize, 2]
            }
        }
    }

    /// Output sample shape `(2m, 2m, 2)`.
    pub fn output_shape(&self) -> [usize; 3] {
        [self.two_m as usize, self.two_m as usize, 2]
    }
}

/// The full model: conv blocks plus the dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub blocks: Vec<ConvBlock>,
    pub dense: Dense,
}

impl Network {
    /// Builds the network with Glorot-uniform weights, zero biases,
    /// `gamma = 1`, `beta = 0`, and PReLU slopes 0.25. Draws happen in
    /// parameter-storage order, block by block, dense last, from a dedicated
    /// substream of `seed`, so initialization is deterministic.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = substream(seed, 0);
        let mut blocks = Vec::with_capacity(spec.channels.len());
        let mut in_ch = spec.in_shape[2];
        for (&out_ch, &(kh, kw)) in spec.channels.iter().zip(&spec.kernels) {
            let mut conv = Conv2d::new(kh, kw, in_ch, out_ch)?;
            conv.weight = glorot_uniform(
                conv.weight.len(),
                kh * kw * in_ch,
                kh * kw * out_ch,
                &mut rng,
            )?;
            blocks.push(ConvBlock {
                conv,
                bn: BatchNorm2d::new(out_ch),
                act: PRelu::new(out_ch),
            });
            in_ch = out_ch;
        }
        let mut dense = Dense::new(spec.dense_in_features(), spec.out_features())?;
        dense.weight = glorot_uniform(
            dense.weight.len(),
            dense.in_features,
            dense.out_features,
            &mut rng,
        )?;
        Ok(Network {
            spec,
            blocks,
            dense,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        let [h, w, c] = self.spec.in_shape;
        if x.height() != h || x.width() != w || x.channels() != c {
            return Err(NnError::ShapeMismatch {
                context: "Network input",
                expected: vec![h, w, c],
                got: vec![x.height(), x.width(), x.channels()],
            });
        }
        Ok(())
    }

    fn reshape_out(&self, dense_out: Tensor) -> Result<Tensor, NnError> {
        let [oh, ow, oc] = self.spec.out_shape;
        let b = dense_out.batch();
        dense_out.reshape([b, oh, ow, oc])
    }

    /// Inference pass using batch-norm running statistics. Debug builds
    /// assert every intermediate stays finite.
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            cur = block.conv.forward(&cur)?;
            cur.debug_assert_finite(&format!("conv{i}"));
            cur = block.bn.forward_infer(&cur)?;
            cur.debug_assert_finite(&format!("bn{i}"));
            cur = block.act.forward(&cur)?;
            cur.debug_assert_finite(&format!("prelu{i}"));
        }
        let out = self.dense.forward(&cur)?;
        out.debug_assert_finite("dense");
        self.reshape_out(out)
    }

    /// Training pass: batch statistics, running-stat updates, and a cache for
    /// [`Network::backward`]. Finiteness is *not* asserted here — the training
    /// loop detects non-finite losses and restores the last good state.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ForwardCache), NnError> {
        self.check_input(x)?;
        let n = self.blocks.len();
        let mut conv_inputs = Vec::with_capacity(n);
        let mut bn_caches = Vec::with_capacity(n);
        let mut act_inputs = Vec::with_capacity(n);
        let mut cur = x.clone();
        for block in &mut self.blocks {
            let conv_out = block.conv.forward(&cur)?;
            conv_inputs.push(cur);
            let (bn_out, bn_cache) = block.bn.forward_train(&conv_out)?;
            bn_caches.push(bn_cache);
            let act_out = block.act.forward(&bn_out)?;
            act_inputs.push(bn_out);
            cur = act_out;
        }
        let dense_out = self.dense.forward(&cur)?;
        let out = self.reshape_out(dense_out)?;
        Ok((
            out,
            ForwardCache {
                conv_inputs,
                bn_caches,
                act_inputs,
                dense_input: cur,
            },
        ))
    }

    /// Backpropagates `grad_out` (shaped like the network output) through the
    /// cached pass and returns gradients in canonical parameter order.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Tensor,
    ) -> Result<Vec<Vec<f64>>, NnError> {
        let b = grad_out.batch();
        let g = grad_out
            .clone()
            .reshape([b, 1, 1, self.spec.out_features()])?;
        let (mut g, dw_dense, db_dense) = self.dense.backward(&cache.dense_input, &g)?;
        // Built back-to-front and reversed at the end, so push within each
        // stage in reverse canonical order.
        let mut rev: Vec<Vec<f64>> = vec![db_dense, dw_dense];
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let (g_act, d_alpha) = block.act.backward(&cache.act_inputs[i], &g);
            let (g_bn, d_gamma, d_beta) = block.bn.backward(&cache.bn_caches[i], &g_act);
            let (g_conv, d_w, d_b) = block.conv.backward(&cache.conv_inputs[i], &g_bn)?;
            g = g_conv;
            rev.push(d_alpha);
            rev.push(d_beta);
            rev.push(d_gamma);
            rev.push(d_b);
            rev.push(d_w);
        }
        rev.reverse();
        Ok(rev)
    }

    /// Canonical parameter-block names: per block `conv{i}.weight`,
    /// `conv{i}.bias`, `bn{i}.gamma`, `bn{i}.beta`, `prelu{i}.alpha`; then
    /// `dense.weight`, `dense.bias`. Gradients, Adam moments, and checkpoints
    /// all follow this order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.blocks.len() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
            names.push(format!("bn{i}.gamma"));
            names.push(format!("bn{i}.beta"));
            names.push(format!("prelu{i}.alpha"));
        }
        names.push("dense.weight".into());
        names.push("dense.bias".into());
        names
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(&b.conv.weight);
            out.push(&b.conv.bias);
            out.push(&b.bn.gamma);
            out.push(&b.bn.beta);
            out.push(&b.act.alpha);
        }
        out.push(&self.dense.weight);
        out.push(&self.dense.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
            out.push(&mut b.act.alpha);
        }
        out.push(&mut self.dense.weight);
        out.push(&mut self.dense.bias);
        out
    }

    /// Sizes of the canonical parameter blocks (for optimizer construction).
    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Clones all parameter blocks (training snapshots).
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().into_iter().cloned().collect()
    }

    /// Restores parameter blocks from [`Network::snapshot`].
    pub fn restore(&mut self, snapshot: &[Vec<f64>]) {
        let params = self.params_mut();
        assert_eq!(params.len(), snapshot.len(), "snapshot block count");
        for (p, s) in params.into_iter().zip(snapshot) {
            p.copy_from_slice(s);
        }
    }

    /// Copies of the batch-norm running statistics (mean, variance) per block.
    pub(crate) fn running_stats(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.blocks
            .iter()
            .map(|b| (b.bn.running_mean.clone(), b.bn.running_var.clone()))
            .collect()
    }

    pub(crate) fn set_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) {
        for (b, (mean, var)) in self.blocks.iter_mut().zip(stats) {
            b.bn.running_mean.copy_from_slice(mean);
            b.bn.running_var.copy_from_slice(var);
        }
    }

    fn checkpoint_tensors(&self) -> Vec<(String, Vec<u64>, &[f64])> {
        let mut out: Vec<(String, Vec<u64>, &[f64])> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = &b.conv;
            out.push((
                format!("conv{i}.weight"),
                vec![c.kh as u64, c.kw as u64, c.in_ch as u64, c.out_ch as u64],
                &c.weight,
            ));
            out.push((format!("conv{i}.bias"), vec![c.out_ch as u64], &c.bias));
            out.push((format!("bn{i}.gamma"), vec![b.bn.gamma.len() as u64], &b.bn.gamma));
            out.push((format!("bn{i}.beta"), vec![b.bn.beta.len() as u64], &b.bn.beta));
            out.push((
                format!("bn{i}.running_mean"),
                vec![b.bn.running_mean.len() as u64],
                &b.bn.running_mean,
            ));
            out.push((
                format!("bn{i}.running_var"),
                vec![b.bn.running_var.len() as u64],
                &b.bn.running_var,
            ));
            out.push((
                format!("prelu{i}.alpha"),
                vec![b.act.alpha.len() as u64],
                &b.act.alpha,
            ));
        }
        out.push((
            "dense.weight".into(),
            vec![self.dense.in_features as u64, self.dense.out_features as u64],
            &self.dense.weight,
        ));
        out.push((
            "dense.bias".into(),
            vec![self.dense.out_features as u64],
            &self.dense.bias,
        ));
        out
    }

    /// Serializes the model (parameters plus batch-norm running statistics)
    /// and the acquisition metadata into the little-endian checkpoint format:
    /// magic `MSRN`, version, mode tag, `two_m`, `m1`, `p`, the subsample
    /// row/column indices, then named tensors `{name_len u32, name bytes,
    /// rank u32, extents u64..., data f64...}` in canonical order.
    pub fn save_checkpoint(&self, path: &Path, meta: &CheckpointMeta) -> Result<(), NnError> {
        meta.validate()?;
        let mut tensors = self.checkpoint_tensors();
        if !meta.input_mean.is_empty() {
            let c = meta.input_mean.len() as u64;
            tensors.push(("standardize.mean".into(), vec![c], &meta.input_mean));
            tensors.push(("standardize.std".into(), vec![c], &meta.input_std));
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut buf, CHECKPOINT_VERSION);
        put_u8(&mut buf, CheckpointMeta::mode_tag(meta.mode));
        put_u32(&mut buf, meta.two_m);
        put_u32(&mut buf, meta.m1);
        put_u32(&mut buf, meta.subsample_p);
        for &r in &meta.row_indices {
            put_u32(&mut buf, r);
        }
        for &c in &meta.col_indices {
            put_u32(&mut buf, c);
        }
        put_u32(&mut buf, tensors.len() as u32);
        for (name, extents, data) in tensors {
            put_u32(&mut buf, name.len() as u32);
            buf.extend_from_slice(name.as_bytes());
            put_u32(&mut buf, extents.len() as u32);
            let len: u64 = extents.iter().product();
            debug_assert_eq!(len as usize, data.len());
            for e in extents {
                put_u64(&mut buf, e);
            }
            for &v in data {
                put_f64(&mut buf, v);
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads a checkpoint back into a network plus its metadata.
    pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta), NnError> {
        let bytes = std::fs::read(path)?;
        let mut r = Reader::new(&bytes);
        let magic = r
            .bytes(4)
            .ok_or_else(|| NnError::MalformedCheckpoint("truncated magic".into()))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(NnError::MalformedCheckpoint(format!(
                "bad magic {magic:?}"
            )));
        }
        let version = r
            .u32()
            .ok_or_else(|| NnError::MalformedCheckpoint("truncated version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::MalformedCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let trunc = |what: &str| NnError::MalformedCheckpoint(format!("truncated {what}"));
        let mode = CheckpointMeta::mode_from_tag(r.u8().ok_or_else(|| trunc("mode"))?)?;
        let two_m = r.u32().ok_or_else(|| trunc("two_m"))?;
        let m1 = r.u32().ok_or_else(|| trunc("m1"))?;
        let p = r.u32().ok_or_else(|| trunc("p"))?;
        let mut row_indices = Vec::with_capacity(p as usize);
        let mut col_indices = Vec::with_capacity(p as usize);
        for _ in 0..p {
            row_indices.push(r.u32().ok_or_else(|| trunc("row index"))?);
        }
        for _ in 0..p {
            col_indices.push(r.u32().ok_or_else(|| trunc("col index"))?);
        }
        let mut meta = CheckpointMeta {
            mode,
            two_m,
            m1,
            subsample_p: p,
            row_indices,
            col_indices,
            input_mean: Vec::new(),
            input_std: Vec::new(),
        };
        meta.validate().map_err(|e| {
            NnError::MalformedCheckpoint(format!("inconsistent header: {e}"))
        })?;

        let count = r.u32().ok_or_else(|| trunc("tensor count"))? as usize;
        let mut tensors: Vec<(String, Vec<u64>, Vec<f64>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32().ok_or_else(|| trunc("name length"))? as usize;
            if name_len > 1024 {
                return Err(NnError::MalformedCheckpoint(format!(
                    "implausible tensor name length {name_len}"
                )));
            }
            let name_bytes = r.bytes(name_len).ok_or_else(|| trunc("name"))?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| NnError::MalformedCheckpoint("non-utf8 tensor name".into()))?
                .to_string();
            let rank = r.u32().ok_or_else(|| trunc("rank"))? as usize;
            if rank > 8 {
                return Err(NnError::MalformedCheckpoint(format!(
                    "implausible rank {rank}"
                )));
            }
            let mut extents = Vec::with_capacity(rank);
            for _ in 0..rank {
                extents.push(r.u64().ok_or_else(|| trunc("extent"))?);
            }
            let len: u64 = extents.iter().product();
            if len as usize * 8 > r.remaining() {
                return Err(trunc("tensor data"));
            }
            let mut data = Vec::with_capacity(len as usize);
            for _ in 0..len {
                data.push(r.f64().ok_or_else(|| trunc("tensor value"))?);
            }
            tensors.push((name, extents, data));
        }
        if r.remaining() != 0 {
            return Err(NnError::MalformedCheckpoint(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        if tensors
            .last()
            .is_some_and(|(name, _, _)| name == "standardize.std")
        {
            let (_, std_ext, std) = tensors.pop().expect("last checked above");
            let (mean_name, mean_ext, mean) = tensors.pop().ok_or_else(|| {
                NnError::MalformedCheckpoint("standardization std without mean".into())
            })?;
            if mean_name != "standardize.mean" || mean_ext != std_ext || mean_ext.len() != 1 {
                return Err(NnError::MalformedCheckpoint(
                    "malformed standardization tensors".into(),
                ));
            }
            meta.input_mean = mean;
            meta.input_std = std;
            meta.validate().map_err(|e| {
                NnError::MalformedCheckpoint(format!("bad standardization statistics: {e}"))
            })?;
        }
        Self::from_tensors(meta, tensors)
    }

    fn from_tensors(
        meta: CheckpointMeta,
        tensors: Vec<(String, Vec<u64>, Vec<f64>)>,
    ) -> Result<(Network, CheckpointMeta), NnError> {
        // 7 tensors per block + 2 for the dense head.
        if tensors.len() < 9 || (tensors.len() - 2) % 7 != 0 {
            return Err(NnError::MalformedCheckpoint(format!(
                "unexpected tensor count {}",
                tensors.len()
            )));
        }
        let n_blocks = (tensors.len() - 2) / 7;
        let mut it = tensors.into_iter();
        let mut next = |expect: String, rank: usize| -> Result<(Vec<u64>, Vec<f64>), NnError> {
            let (name, extents, data) = it.next().expect("count checked above");
            if name != expect {
                return Err(NnError::MalformedCheckpoint(format!(
                    "expected tensor {expect}, found {name}"
                )));
            }
            if extents.len() != rank {
                return Err(NnError::MalformedCheckpoint(format!(
                    "tensor {name} has rank {} (expected {rank})",
                    extents.len()
                )));
            }
            Ok((extents, data))
        };

        let mut blocks = Vec::with_capacity(n_blocks);
        let mut channels = Vec::with_capacity(n_blocks);
        let mut kernels = Vec::with_capacity(n_blocks);
        let in_shape = meta.input_shape();
        let mut expect_in = in_shape[2];
        for i in 0..n_blocks {
            let (we, wd) = next(format!("conv{i}.weight"), 4)?;
            let (kh, kw, in_ch, out_ch) = (
                we[0] as usize,
                we[1] as usize,
                we[2] as usize,
                we[3] as usize,
            );
            if in_ch != expect_in {
                return Err(NnError::MalformedCheckpoint(format!(
                    "conv{i} expects {expect_in} input channels, file says {in_ch}"
                )));
            }
            let (_, bias) = next(format!("conv{i}.bias"), 1)?;
            let (_, gamma) = next(format!("bn{i}.gamma"), 1)?;
            let (_, beta) = next(format!("bn{i}.beta"), 1)?;
            let (_, rmean) = next(format!("bn{i}.running_mean"), 1)?;
            let (_, rvar) = next(format!("bn{i}.running_var"), 1)?;
            let (_, alpha) = next(format!("prelu{i}.alpha"), 1)?;
            for (what, v) in [
                ("bias", &bias),
                ("gamma", &gamma),
                ("beta", &beta),
                ("running_mean", &rmean),
                ("running_var", &rvar),
                ("alpha", &alpha),
            ] {
                if v.len() != out_ch {
                    return Err(NnError::MalformedCheckpoint(format!(
                        "block {i} {what} length {} (expected {out_ch})",
                        v.len()
                    )));
                }
            }
            let mut conv = Conv2d::new(kh, kw, in_ch, out_ch)?;
            if wd.len() != conv.weight.len() {
                return Err(NnError::MalformedCheckpoint(format!(
                    "conv{i} weight length {} does not match extents",
                    wd.len()
                )));
            }
            conv.weight = wd;
            conv.bias = bias;
            let mut bn = BatchNorm2d::new(out_ch);
            bn.gamma = gamma;
            bn.beta = beta;
            bn.running_mean = rmean;
            bn.running_var = rvar;
            blocks.push(ConvBlock {
                conv,
                bn,
                act: PRelu { alpha },
            });
            channels.push(out_ch);
            kernels.push((kh, kw));
            expect_in = out_ch;
        }
        let (de, dw) = next("dense.weight".into(), 2)?;
        let (in_f, out_f) = (de[0] as usize, de[1] as usize);
        let (_, db) = next("dense.bias".into(), 1)?;
        if db.len() != out_f || dw.len() != in_f * out_f {
            return Err(NnError::MalformedCheckpoint(
                "dense tensor extents are inconsistent".into(),
            ));
        }
        let spec = NetworkSpec {
            in_shape,
            out_shape: meta.output_shape(),
            channels,
            kernels,
        };
        if spec.dense_in_features() != in_f || spec.out_features() != out_f {
            return Err(NnError::MalformedCheckpoint(format!(
                "dense head ({in_f} -> {out_f}) does not match geometry \
                 ({} -> {})",
                spec.dense_in_features(),
                spec.out_features()
            )));
        }
        spec.validate()
            .map_err(|e| NnError::MalformedCheckpoint(format!("bad architecture: {e}")))?;
        let net = Network {
            spec,
            blocks,
            dense: Dense {
                in_features: in_f,
                out_features: out_f,
                weight: dw,
                bias: db,
            },
        };
        Ok((net, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::reference([6, 6, 2], [8, 8, 2], 1.0 / 32.0).unwrap()
    }

    fn random_input(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = substream(seed, 0);
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn reference_spec_scales_channels() {
        let desk = NetworkSpec::reference([16, 16, 2], [32, 32, 2], 0.125).unwrap();
        assert_eq!(desk.channels, vec![16, 8, 16, 8, 1]);
        assert_eq!(desk.kernels, vec![(3, 3), (2, 2), (4, 4), (5, 5), (4, 4)]);
        let full = NetworkSpec::reference([45, 45, 2], [90, 90, 2], 1.0).unwrap();
        assert_eq!(full.channels, vec![128, 64, 128, 64, 1]);
        assert_eq!(desk.dense_in_features(), 16 * 16);
        assert_eq!(desk.out_features(), 32 * 32 * 2);
    }

    #[test]
    fn init_is_deterministic_and_forward_preserves_shape() {
        let a = Network::init(small_spec(), 42).unwrap();
        let b = Network::init(small_spec(), 42).unwrap();
        assert_eq!(a, b);
        let c = Network::init(small_spec(), 43).unwrap();
        assert_ne!(a, c);

        let x = random_input([3, 6, 6, 2], 1);
        let y = a.forward_infer(&x).unwrap();
        assert_eq!(y.shape(), [3, 8, 8, 2]);
    }

    #[test]
    fn train_and_infer_modes_differ_until_stats_converge() {
        let mut net = Network::init(small_spec(), 7).unwrap();
        let x = random_input([4, 6, 6, 2], 2);
        let infer_before = net.forward_infer(&x).unwrap();
        let (train_out, _) = net.forward_train(&x).unwrap();
        // Fresh running stats (mean 0, var 1) differ from batch stats.
        let diff: f64 = infer_before
            .data()
            .iter()
            .zip(train_out.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn backward_produces_one_gradient_per_parameter_block() {
        let mut net = Network::init(small_spec(), 3).unwrap();
        let x = random_input([2, 6, 6, 2], 3);
        let (out, cache) = net.forward_train(&x).unwrap();
        let grads = net.backward(&cache, &out).unwrap();
        let sizes = net.param_sizes();
        assert_eq!(grads.len(), sizes.len());
        for (g, s) in grads.iter().zip(sizes) {
            assert_eq!(g.len(), s);
        }
        assert_eq!(net.param_names().len(), grads.len());
    }

    #[test]
    fn snapshot_restore_round_trips() {
        let mut net = Network::init(small_spec(), 4).unwrap();
        let snap = net.snapshot();
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v += 1.0;
            }
        }
        let changed = Network::init(small_spec(), 4).unwrap();
        assert_ne!(net, changed);
        net.restore(&snap);
        assert_eq!(net, changed);
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.msrn");
        let spec = NetworkSpec::reference([4, 4, 2], [8, 8, 2], 0.05).unwrap();
        let mut net = Network::init(spec, 11).unwrap();
        // Touch the running stats so they are not the defaults.
        let x = random_input([4, 4, 4, 2], 5);
        net.forward_train(&x).unwrap();
        let meta = CheckpointMeta::subsampled(8, 4, vec![0, 1, 3, 2], vec![3, 0, 1, 2]);
        net.save_checkpoint(&path, &meta).unwrap();

        let (loaded, meta2) = Network::load_checkpoint(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(net, loaded);
        let probe = random_input([2, 4, 4, 2], 6);
        let a = net.forward_infer(&probe).unwrap();
        let b = loaded.forward_infer(&probe).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.msrn");
        let spec = NetworkSpec::reference([4, 4, 1], [8, 8, 2], 0.05).unwrap();
        let net = Network::init(spec, 12).unwrap();
        let meta = CheckpointMeta::full_block(AcquisitionMode::Phaseless, 8, 4);
        net.save_checkpoint(&path, &meta).unwrap();

        let good = std::fs::read(&path).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(
            Network::load_checkpoint(&path),
            Err(NnError::MalformedCheckpoint(_))
        ));

        std::fs::write(&path, &good[..good.len() - 9]).unwrap();
        assert!(matches!(
            Network::load_checkpoint(&path),
            Err(NnError::MalformedCheckpoint(_))
        ));
    }

    #[test]
    fn checkpoint_meta_validates_index_lists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.msrn");
        let spec = NetworkSpec::reference([4, 4, 2], [8, 8, 2], 0.05).unwrap();
        let net = Network::init(spec, 13).unwrap();
        let bad = CheckpointMeta {
            mode: AcquisitionMode::Phased,
            two_m: 8,
            m1: 4,
            subsample_p: 0,
            row_indices: vec![1],
            col_indices: vec![],
            input_mean: Vec::new(),
            input_std: Vec::new(),
        };
        assert!(net.save_checkpoint(&path, &bad).is_err());
    }

    #[test]
    fn checkpoint_carries_standardization_statistics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.msrn");
        let spec = NetworkSpec::reference([4, 4, 2], [8, 8, 2], 0.05).unwrap();
        let net = Network::init(spec, 14).unwrap();
        let mut meta = CheckpointMeta::full_block(AcquisitionMode::Phased, 8, 4);
        meta.input_mean = vec![0.25, -1.5];
        meta.input_std = vec![2.0, 0.125];
        net.save_checkpoint(&path, &meta).unwrap();
        let (loaded, meta2) = Network::load_checkpoint(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(net, loaded);

        // Mismatched statistics are rejected before anything hits the disk.
        meta.input_std = vec![1.0];
        assert!(net.save_checkpoint(&path, &meta).is_err());
        meta.input_std = vec![1.0, 0.0];
        assert!(net.save_checkpoint(&path, &meta).is_err());
    }
}
