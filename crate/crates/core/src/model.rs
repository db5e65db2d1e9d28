//! Model assembly: a capacity-swept 1D residual network and an MLP baseline.
//!
//! The residual backbone follows a fixed recipe so that "number of blocks" is
//! the single capacity knob:
//!
//! * stem: conv k=7 (1 → 16 channels, stride 1, padding 3) + batchnorm + ReLU
//! * residual blocks: conv k=5 → bn → ReLU → conv k=5 → bn, plus a skip
//!   connection, ReLU after the add
//! * channel schedule: blocks 1–4 run 32 channels, 5–8 run 64, 9–12 run 128;
//!   the first block of each stage downsamples (stride 2) and carries a 1×1
//!   strided convolution on the skip path
//! * head: global average pooling over time, then a linear classifier
//!
//! The MLP baseline flattens the window and applies linear+ReLU hidden layers
//! before the same linear-classifier head.
//!
//! Training-mode forward passes cache activations inside the model; `backward`
//! consumes that cache, so calling it twice without an intervening forward is
//! a state error. Parameter gradients accumulate across backward calls until
//! [`Model::zero_grads`] clears them.

use alloc::string::String;
use alloc::{format, vec::Vec};

use crate::error::{Error, Result};
use crate::nn::{
    self, BatchNorm1d, BnCache, Conv1d, Linear, global_avg_pool, global_avg_pool_backward,
    relu_inplace, relu_mask_inplace,
};
use crate::rng;
use crate::tensor::Tensor;

/// Number of heart-rate classes: integer BPM bins covering [30, 210).
pub const NUM_HR_CLASSES: usize = 180;
/// Window length in samples (8 s at 25 Hz).
pub const WINDOW_LEN: usize = 200;

/// Backbone choice plus its capacity knob.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "backbone", rename_all = "snake_case"))]
pub enum Arch {
    /// Residual network with `num_blocks` residual blocks (≥ 1, ≤ 12).
    Resnet1d { num_blocks: usize },
    /// Flatten → hidden linear+ReLU layers of the given widths → head.
    Mlp { hidden_widths: Vec<usize> },
}

/// Complete architectural description of a model; two models built from equal
/// specs (and equal seeds) are identical.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub arch: Arch,
    #[cfg_attr(feature = "serde", serde(default = "default_channels"))]
    pub input_channels: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_length"))]
    pub input_length: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_classes"))]
    pub num_classes: usize,
}

#[cfg(feature = "serde")]
fn default_channels() -> usize {
    1
}
#[cfg(feature = "serde")]
fn default_length() -> usize {
    WINDOW_LEN
}
#[cfg(feature = "serde")]
fn default_classes() -> usize {
    NUM_HR_CLASSES
}

impl ModelSpec {
    /// A residual network over standard PPG windows.
    pub fn resnet(num_blocks: usize) -> Self {
        ModelSpec {
            arch: Arch::Resnet1d { num_blocks },
            input_channels: 1,
            input_length: WINDOW_LEN,
            num_classes: NUM_HR_CLASSES,
        }
    }

    /// An MLP over standard PPG windows.
    pub fn mlp(hidden_widths: &[usize]) -> Self {
        ModelSpec {
            arch: Arch::Mlp {
                hidden_widths: hidden_widths.to_vec(),
            },
            input_channels: 1,
            input_length: WINDOW_LEN,
            num_classes: NUM_HR_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.input_length == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig(format!(
                "input_channels, input_length and num_classes must be positive, got {}x{} -> {}",
                self.input_channels, self.input_length, self.num_classes
            )));
        }
        match &self.arch {
            Arch::Resnet1d { num_blocks } => {
                if !(1..=MAX_BLOCKS).contains(num_blocks) {
                    return Err(Error::InvalidConfig(format!(
                        "num_blocks must be in [1, {MAX_BLOCKS}], got {num_blocks}"
                    )));
                }
                // three stride-2 stages need enough samples to pool over
                if self.input_length < 8 {
                    return Err(Error::InvalidConfig(format!(
                        "input_length {} too short for the residual backbone",
                        self.input_length
                    )));
                }
            }
            Arch::Mlp { hidden_widths } => {
                if hidden_widths.is_empty() {
                    return Err(Error::InvalidConfig(
                        "hidden_widths must not be empty".into(),
                    ));
                }
                if hidden_widths.contains(&0) {
                    return Err(Error::InvalidConfig("hidden width of zero".into()));
                }
            }
        }
        Ok(())
    }

    /// Short human-readable form used in logs and reports.
    pub fn describe(&self) -> String {
        match &self.arch {
            Arch::Resnet1d { num_blocks } => format!("resnet1d-{num_blocks}"),
            Arch::Mlp { hidden_widths } => format!("mlp-{hidden_widths:?}"),
        }
    }
}

/// Deepest supported residual network.
pub const MAX_BLOCKS: usize = 12;

/// Stem output channels.
const STEM_CHANNELS: usize = 16;
/// Kernel width inside residual blocks.
const BLOCK_KERNEL: usize = 5;

/// Channel width of residual block `i` (1-based): 32 for blocks 1–4, 64 for
/// 5–8, 128 for 9–12.
pub fn block_channels(block: usize) -> usize {
    match block {
        1..=4 => 32,
        5..=8 => 64,
        _ => 128,
    }
}

/// Whether block `i` (1-based) starts a stage (changes width and downsamples).
fn stage_start(block: usize) -> bool {
    matches!(block, 1 | 5 | 9)
}

/// One residual block: conv-bn-ReLU-conv-bn plus skip, ReLU after the add.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv1d,
    pub bn1: BatchNorm1d,
    pub conv2: Conv1d,
    pub bn2: BatchNorm1d,
    /// 1×1 strided convolution on the skip path when the width changes;
    /// identity skip otherwise.
    pub skip: Option<Conv1d>,
}

impl ResBlock {
    fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut rng::SeededRng) -> Self {
        let pad = BLOCK_KERNEL / 2;
        let conv1 = Conv1d::new(in_ch, out_ch, BLOCK_KERNEL, stride, pad, rng);
        let conv2 = Conv1d::new(out_ch, out_ch, BLOCK_KERNEL, 1, pad, rng);
        let skip = if in_ch != out_ch || stride != 1 {
            Some(Conv1d::new(in_ch, out_ch, 1, stride, 0, rng))
        } else {
            None
        };
        ResBlock {
            conv1,
            bn1: BatchNorm1d::new(out_ch),
            conv2,
            bn2: BatchNorm1d::new(out_ch),
            skip,
        }
    }

    fn forward_train(&mut self, x: &Tensor) -> (Tensor, BlockCache) {
        let z1 = self.conv1.forward(x);
        let (mut a1, bn1) = self.bn1.forward_train(&z1);
        relu_inplace(&mut a1);
        let z2 = self.conv2.forward(&a1);
        let (mut out, bn2) = self.bn2.forward_train(&z2);
        match &self.skip {
            Some(skip) => {
                let s = skip.forward(x);
                for (o, sv) in out.data_mut().iter_mut().zip(s.data()) {
                    *o += sv;
                }
            }
            None => {
                for (o, xv) in out.data_mut().iter_mut().zip(x.data()) {
                    *o += xv;
                }
            }
        }
        relu_inplace(&mut out);
        let cache = BlockCache {
            x_in: x.clone(),
            bn1,
            act1: a1,
            bn2,
            out: out.clone(),
        };
        (out, cache)
    }

    fn forward_eval(&self, x: &Tensor) -> Tensor {
        let z1 = self.conv1.forward(x);
        let mut a1 = self.bn1.forward_eval(&z1);
        relu_inplace(&mut a1);
        let z2 = self.conv2.forward(&a1);
        let mut out = self.bn2.forward_eval(&z2);
        match &self.skip {
            Some(skip) => {
                let s = skip.forward(x);
                for (o, sv) in out.data_mut().iter_mut().zip(s.data()) {
                    *o += sv;
                }
            }
            None => {
                for (o, xv) in out.data_mut().iter_mut().zip(x.data()) {
                    *o += xv;
                }
            }
        }
        relu_inplace(&mut out);
        out
    }

    /// Backward through the block; returns the gradient at the block input.
    fn backward(&mut self, cache: &BlockCache, grad_out: &Tensor) -> Tensor {
        // ReLU after the residual add
        let mut g = grad_out.clone();
        relu_mask_inplace(&cache.out, &mut g);
        // main path: bn2 <- conv2 <- ReLU <- bn1 <- conv1
        let g_bn2 = self.bn2.backward(&cache.bn2, &g);
        let mut g_a1 = self.conv2.backward(&cache.act1, &g_bn2);
        relu_mask_inplace(&cache.act1, &mut g_a1);
        let g_bn1 = self.bn1.backward(&cache.bn1, &g_a1);
        let mut gx = self.conv1.backward(&cache.x_in, &g_bn1);
        // skip path joins the same upstream gradient `g`
        match &mut self.skip {
            Some(skip) => {
                let g_skip = skip.backward(&cache.x_in, &g);
                for (a, b) in gx.data_mut().iter_mut().zip(g_skip.data()) {
                    *a += b;
                }
            }
            None => {
                for (a, b) in gx.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    x_in: Tensor,
    bn1: BnCache,
    act1: Tensor,
    bn2: BnCache,
    /// Post-ReLU block output (mask source for the final rectifier).
    out: Tensor,
}

#[derive(Debug, Clone)]
enum Body {
    Resnet {
        stem_conv: Conv1d,
        stem_bn: BatchNorm1d,
        blocks: Vec<ResBlock>,
    },
    Mlp {
        hidden: Vec<Linear>,
    },
}

#[derive(Debug, Clone)]
enum ForwardCache {
    Resnet {
        input: Tensor,
        stem_bn: BnCache,
        /// Post-ReLU stem output == first block input.
        stem_act: Tensor,
        blocks: Vec<BlockCache>,
        /// Temporal length entering global average pooling.
        pre_pool_len: usize,
        features: Tensor,
    },
    Mlp {
        /// Flattened input.
        x0: Tensor,
        /// Post-ReLU activation of each hidden layer (last one == features).
        acts: Vec<Tensor>,
    },
}

/// Pooled penultimate activations (`[B, feature_dim]`) captured during a
/// forward pass; the hook point for feature distillation.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub pooled: Tensor,
}

/// Deterministic byte estimate for running one inference batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryEstimate {
    /// Resident model state: trainable parameters plus batchnorm running
    /// statistics, at 8 bytes per element.
    pub param_bytes: usize,
    /// Peak bytes of simultaneously-live activation buffers during an
    /// evaluation-mode forward pass of the given batch size.
    pub peak_activation_bytes: usize,
}

/// A built network: spec, layers, and (in training mode) cached activations.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    body: Body,
    head: Linear,
    feature_dim: usize,
    cache: Option<ForwardCache>,
}

impl Model {
    /// Builds a model with seed-determined Kaiming initialization. Equal spec
    /// and seed produce bit-identical models.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut r = rng::derived(seed, 0x6d6f64656c); // model-init stream
        match &spec.arch {
            Arch::Resnet1d { num_blocks } => {
                let stem_conv = Conv1d::new(spec.input_channels, STEM_CHANNELS, 7, 1, 3, &mut r);
                let stem_bn = BatchNorm1d::new(STEM_CHANNELS);
                let mut blocks = Vec::with_capacity(*num_blocks);
                let mut in_ch = STEM_CHANNELS;
                for i in 1..=*num_blocks {
                    let out_ch = block_channels(i);
                    let stride = if stage_start(i) { 2 } else { 1 };
                    blocks.push(ResBlock::new(in_ch, out_ch, stride, &mut r));
                    in_ch = out_ch;
                }
                let head = Linear::new(in_ch, spec.num_classes, &mut r);
                Ok(Model {
                    spec: spec.clone(),
                    body: Body::Resnet {
                        stem_conv,
                        stem_bn,
                        blocks,
                    },
                    head,
                    feature_dim: in_ch,
                    cache: None,
                })
            }
            Arch::Mlp { hidden_widths } => {
                let mut hidden = Vec::with_capacity(hidden_widths.len());
                let mut d = spec.input_channels * spec.input_length;
                for &w in hidden_widths {
                    hidden.push(Linear::new(d, w, &mut r));
                    d = w;
                }
                let head = Linear::new(d, spec.num_classes, &mut r);
                Ok(Model {
                    spec: spec.clone(),
                    body: Body::Mlp { hidden },
                    head,
                    feature_dim: d,
                    cache: None,
                })
            }
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Width of the pooled penultimate representation.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let want = [self.spec.input_channels, self.spec.input_length];
        if batch.shape().len() != 3 || batch.dim(1) != want[0] || batch.dim(2) != want[1] {
            return Err(Error::shape(
                format!("[B, {}, {}]", want[0], want[1]),
                batch.shape(),
            ));
        }
        if batch.dim(0) == 0 {
            return Err(Error::shape("[B >= 1, ..]", batch.shape()));
        }
        if !batch.all_finite() {
            return Err(Error::NonFiniteInput("input batch"));
        }
        Ok(())
    }

    /// Training-mode forward: batch statistics drive normalization, running
    /// statistics update, and activations are cached for [`Model::backward`].
    pub fn forward_train(&mut self, batch: &Tensor) -> Result<(Tensor, FeatureCache)> {
        self.check_input(batch)?;
        match &mut self.body {
            Body::Resnet {
                stem_conv,
                stem_bn,
                blocks,
            } => {
                let z0 = stem_conv.forward(batch);
                let (mut a0, stem_bn_cache) = stem_bn.forward_train(&z0);
                relu_inplace(&mut a0);
                let stem_act = a0.clone();
                let mut x = a0;
                let mut block_caches = Vec::with_capacity(blocks.len());
                for blk in blocks.iter_mut() {
                    let (y, c) = blk.forward_train(&x);
                    block_caches.push(c);
                    x = y;
                }
                let pre_pool_len = x.dim(2);
                let features = global_avg_pool(&x);
                let logits = self.head.forward(&features);
                self.cache = Some(ForwardCache::Resnet {
                    input: batch.clone(),
                    stem_bn: stem_bn_cache,
                    stem_act,
                    blocks: block_caches,
                    pre_pool_len,
                    features: features.clone(),
                });
                Ok((logits, FeatureCache { pooled: features }))
            }
            Body::Mlp { hidden } => {
                let bn = batch.dim(0);
                let d = self.spec.input_channels * self.spec.input_length;
                let x0 = Tensor::from_vec(&[bn, d], batch.data().to_vec())?;
                let mut acts = Vec::with_capacity(hidden.len());
                let mut x = x0.clone();
                for lin in hidden.iter() {
                    let mut z = lin.forward(&x);
                    relu_inplace(&mut z);
                    acts.push(z.clone());
                    x = z;
                }
                let features = x;
                let logits = self.head.forward(&features);
                self.cache = Some(ForwardCache::Mlp { x0, acts });
                Ok((logits, FeatureCache { pooled: features }))
            }
        }
    }

    /// Evaluation-mode forward: running statistics drive normalization and no
    /// state is touched, so a frozen teacher can run through `&self`.
    pub fn forward_eval(&self, batch: &Tensor) -> Result<(Tensor, FeatureCache)> {
        self.check_input(batch)?;
        match &self.body {
            Body::Resnet {
                stem_conv,
                stem_bn,
                blocks,
            } => {
                let z0 = stem_conv.forward(batch);
                let mut x = stem_bn.forward_eval(&z0);
                relu_inplace(&mut x);
                for blk in blocks.iter() {
                    x = blk.forward_eval(&x);
                }
                let features = global_avg_pool(&x);
                let logits = self.head.forward(&features);
                Ok((logits, FeatureCache { pooled: features }))
            }
            Body::Mlp { hidden } => {
                let bn = batch.dim(0);
                let d = self.spec.input_channels * self.spec.input_length;
                let mut x = Tensor::from_vec(&[bn, d], batch.data().to_vec())?;
                for lin in hidden.iter() {
                    x = lin.forward(&x);
                    relu_inplace(&mut x);
                }
                let logits = self.head.forward(&x);
                Ok((logits, FeatureCache { pooled: x }))
            }
        }
    }

    /// Backpropagates `logit_grad` (shape `[B, num_classes]`) through the
    /// cached forward pass, accumulating parameter gradients.
    pub fn backward(&mut self, logit_grad: &Tensor) -> Result<()> {
        self.backward_with_feature_grad(logit_grad, None)
    }

    /// Like [`Model::backward`], additionally injecting a gradient at the
    /// pooled feature tap (used by feature distillation).
    pub fn backward_with_feature_grad(
        &mut self,
        logit_grad: &Tensor,
        feature_grad: Option<&Tensor>,
    ) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::InvalidState("backward without a training forward"))?;
        match (&mut self.body, cache) {
            (
                Body::Resnet {
                    stem_conv,
                    stem_bn,
                    blocks,
                },
                ForwardCache::Resnet {
                    input,
                    stem_bn: stem_bn_cache,
                    stem_act,
                    blocks: block_caches,
                    pre_pool_len,
                    features,
                },
            ) => {
                if logit_grad.shape() != [features.dim(0), self.head.out_features()] {
                    return Err(Error::shape(
                        [features.dim(0), self.head.out_features()],
                        logit_grad.shape(),
                    ));
                }
                let mut g_feat = self.head.backward(&features, logit_grad);
                if let Some(fg) = feature_grad {
                    if fg.shape() != g_feat.shape() {
                        return Err(Error::shape(g_feat.shape(), fg.shape()));
                    }
                    for (a, b) in g_feat.data_mut().iter_mut().zip(fg.data()) {
                        *a += b;
                    }
                }
                let mut g = global_avg_pool_backward(&g_feat, pre_pool_len);
                for (blk, c) in blocks.iter_mut().zip(block_caches.iter()).rev() {
                    g = blk.backward(c, &g);
                }
                relu_mask_inplace(&stem_act, &mut g);
                let g = stem_bn.backward(&stem_bn_cache, &g);
                let _ = stem_conv.backward(&input, &g);
                Ok(())
            }
            (Body::Mlp { hidden }, ForwardCache::Mlp { x0, acts }) => {
                let features = acts.last().expect("mlp has at least one hidden layer");
                if logit_grad.shape() != [features.dim(0), self.head.out_features()] {
                    return Err(Error::shape(
                        [features.dim(0), self.head.out_features()],
                        logit_grad.shape(),
                    ));
                }
                let mut g = self.head.backward(features, logit_grad);
                if let Some(fg) = feature_grad {
                    if fg.shape() != g.shape() {
                        return Err(Error::shape(g.shape(), fg.shape()));
                    }
                    for (a, b) in g.data_mut().iter_mut().zip(fg.data()) {
                        *a += b;
                    }
                }
                for i in (0..hidden.len()).rev() {
                    relu_mask_inplace(&acts[i], &mut g);
                    let input = if i == 0 { &x0 } else { &acts[i - 1] };
                    g = hidden[i].backward(input, &g);
                }
                Ok(())
            }
            _ => unreachable!("cache variant always matches body variant"),
        }
    }

    /// Trainable parameters in a stable walk order (the same order as
    /// [`Model::named_params`]).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match &mut self.body {
            Body::Resnet {
                stem_conv,
                stem_bn,
                blocks,
            } => {
                out.push(&mut stem_conv.weight);
                out.push(&mut stem_conv.bias);
                out.push(&mut stem_bn.gamma);
                out.push(&mut stem_bn.beta);
                for blk in blocks.iter_mut() {
                    out.push(&mut blk.conv1.weight);
                    out.push(&mut blk.conv1.bias);
                    out.push(&mut blk.bn1.gamma);
                    out.push(&mut blk.bn1.beta);
                    out.push(&mut blk.conv2.weight);
                    out.push(&mut blk.conv2.bias);
                    out.push(&mut blk.bn2.gamma);
                    out.push(&mut blk.bn2.beta);
                    if let Some(skip) = blk.skip.as_mut() {
                        out.push(&mut skip.weight);
                        out.push(&mut skip.bias);
                    }
                }
            }
            Body::Mlp { hidden } => {
                for lin in hidden.iter_mut() {
                    out.push(&mut lin.weight);
                    out.push(&mut lin.bias);
                }
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// `(name, tensor)` pairs for every trainable parameter, in the same
    /// order as [`Model::params_mut`].
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.body {
            Body::Resnet {
                stem_conv,
                stem_bn,
                blocks,
            } => {
                out.push(("stem.conv.weight".into(), &stem_conv.weight));
                out.push(("stem.conv.bias".into(), &stem_conv.bias));
                out.push(("stem.bn.gamma".into(), &stem_bn.gamma));
                out.push(("stem.bn.beta".into(), &stem_bn.beta));
                for (i, blk) in blocks.iter().enumerate() {
                    let b = i + 1;
                    out.push((format!("block{b}.conv1.weight"), &blk.conv1.weight));
                    out.push((format!("block{b}.conv1.bias"), &blk.conv1.bias));
                    out.push((format!("block{b}.bn1.gamma"), &blk.bn1.gamma));
                    out.push((format!("block{b}.bn1.beta"), &blk.bn1.beta));
                    out.push((format!("block{b}.conv2.weight"), &blk.conv2.weight));
                    out.push((format!("block{b}.conv2.bias"), &blk.conv2.bias));
                    out.push((format!("block{b}.bn2.gamma"), &blk.bn2.gamma));
                    out.push((format!("block{b}.bn2.beta"), &blk.bn2.beta));
                    if let Some(skip) = blk.skip.as_ref() {
                        out.push((format!("block{b}.skip.weight"), &skip.weight));
                        out.push((format!("block{b}.skip.bias"), &skip.bias));
                    }
                }
            }
            Body::Mlp { hidden } => {
                for (i, lin) in hidden.iter().enumerate() {
                    out.push((format!("hidden{i}.weight"), &lin.weight));
                    out.push((format!("hidden{i}.bias"), &lin.bias));
                }
            }
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Batchnorm running statistics, named, in stable order (empty for MLPs).
    pub fn named_running_stats(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Body::Resnet {
            stem_bn, blocks, ..
        } = &self.body
        {
            out.push(("stem.bn.running_mean".into(), &stem_bn.running_mean));
            out.push(("stem.bn.running_var".into(), &stem_bn.running_var));
            for (i, blk) in blocks.iter().enumerate() {
                let b = i + 1;
                out.push((format!("block{b}.bn1.running_mean"), &blk.bn1.running_mean));
                out.push((format!("block{b}.bn1.running_var"), &blk.bn1.running_var));
                out.push((format!("block{b}.bn2.running_mean"), &blk.bn2.running_mean));
                out.push((format!("block{b}.bn2.running_var"), &blk.bn2.running_var));
            }
        }
        out
    }

    /// Mutable view over running statistics in [`Model::named_running_stats`]
    /// order (used when restoring a checkpoint).
    pub fn running_stats_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if let Body::Resnet {
            stem_bn, blocks, ..
        } = &mut self.body
        {
            out.push(&mut stem_bn.running_mean);
            out.push(&mut stem_bn.running_var);
            for blk in blocks.iter_mut() {
                out.push(&mut blk.bn1.running_mean);
                out.push(&mut blk.bn1.running_var);
                out.push(&mut blk.bn2.running_mean);
                out.push(&mut blk.bn2.running_var);
            }
        }
        out
    }

    /// Clears every parameter gradient.
    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Number of trainable parameters (running statistics excluded).
    pub fn count_params(&self) -> usize {
        nn::param_count(self.named_params().into_iter().map(|(_, t)| t))
    }

    /// Deterministic memory footprint model for an inference batch: resident
    /// state plus the peak of simultaneously-live activation buffers along the
    /// evaluation forward pass.
    pub fn inference_memory(&self, batch: usize) -> MemoryEstimate {
        const W: usize = core::mem::size_of::<f64>();
        let resident: usize = self.count_params()
            + self
                .named_running_stats()
                .iter()
                .map(|(_, t)| t.numel())
                .sum::<usize>();
        let mut peak = 0usize;
        match &self.body {
            Body::Resnet {
                stem_conv, blocks, ..
            } => {
                let mut c = self.spec.input_channels;
                let mut l = self.spec.input_length;
                let mut live = batch * c * l; // input batch
                // stem conv allocates its output while the input is live
                let (c2, l2) = (STEM_CHANNELS, stem_conv.out_len(l));
                peak = peak.max(live + batch * c2 * l2);
                live = batch * c2 * l2;
                c = c2;
                l = l2;
                for blk in blocks {
                    let lo = blk.conv1.out_len(l);
                    let co = blk.conv1.out_channels();
                    // block input stays live for the skip while both the
                    // mid activation and the block output exist
                    let mid = batch * co * lo;
                    peak = peak.max(live + 2 * mid + if blk.skip.is_some() { mid } else { 0 });
                    live = mid;
                    c = co;
                    l = lo;
                }
                peak = peak.max(live + batch * c); // pooled features
                peak = peak.max(batch * c + batch * self.spec.num_classes);
            }
            Body::Mlp { hidden } => {
                let mut d = self.spec.input_channels * self.spec.input_length;
                let mut live = batch * d;
                for lin in hidden {
                    let o = lin.out_features();
                    peak = peak.max(live + batch * o);
                    live = batch * o;
                    d = o;
                }
                let _ = d;
                peak = peak.max(live + batch * self.spec.num_classes);
            }
        }
        MemoryEstimate {
            param_bytes: resident * W,
            peak_activation_bytes: peak * W,
        }
    }
}

/// Reference trainable-parameter counts for the published residual-network
/// capacity sweep this backbone is calibrated against, as
/// `(num_blocks, count)` pairs.
pub const REFERENCE_PARAM_COUNTS: [(usize, usize); 9] = [
    (1, 23_292),
    (2, 33_724),
    (3, 44_156),
    (4, 54_588),
    (5, 97_852),
    (6, 139_196),
    (8, 221_884),
    (10, 534_460),
    (12, 863_676),
];

/// Sweep sizes covered by [`REFERENCE_PARAM_COUNTS`].
pub const SWEEP_BLOCK_COUNTS: [usize; 9] = [1, 2, 3, 4, 5, 6, 8, 10, 12];

/// One row of the built-vs-reference parameter-count comparison.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamCountRow {
    pub num_blocks: usize,
    pub built: usize,
    pub reference: usize,
    /// `max(built, reference) / min(built, reference)` — agreement factor.
    pub factor: f64,
}

/// Builds every sweep size and compares its parameter count against the
/// reference sweep. Counts depend only on the spec, not the seed.
pub fn param_count_comparison() -> Vec<ParamCountRow> {
    REFERENCE_PARAM_COUNTS
        .iter()
        .map(|&(num_blocks, reference)| {
            let model = Model::build(&ModelSpec::resnet(num_blocks), 0)
                .expect("sweep specs are valid by construction");
            let built = model.count_params();
            let (hi, lo) = if built > reference {
                (built as f64, reference as f64)
            } else {
                (reference as f64, built as f64)
            };
            ParamCountRow {
                num_blocks,
                built,
                reference,
                factor: hi / lo,
            }
        })
        .collect()
}
