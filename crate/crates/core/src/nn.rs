//! Neural-network layers with explicit forward and backward passes.
//!
//! Layers operate on flat row-major buffers. A layer's `backward` takes the
//! cached forward input (plus any normalization statistics) and the upstream
//! gradient, accumulates parameter gradients into its own tensors, and returns
//! the gradient with respect to its input. Gradients accumulate additively
//! until [`Tensor::zero_grad`] clears them, so callers own the zero/step cycle.
//!
//! Shape conventions: temporal activations are `[batch, channels, length]`,
//! fully-connected activations are `[batch, features]`.

use alloc::{vec, vec::Vec};

use crate::math;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// 1-D convolution over `[B, C_in, L]` with zero padding.
#[derive(Debug, Clone)]
pub struct Conv1d {
    /// `[out_channels, in_channels, kernel]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    /// Kaiming fan-in initialization: weights ~ N(0, 2 / (C_in · k)), zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0);
        let mut weight = Tensor::zeros(&[out_ch, in_ch, kernel]);
        let std = math::sqrt(2.0 / (in_ch * kernel) as f64);
        weight.fill_normal(std, rng);
        Conv1d {
            weight,
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim(2)
    }

    /// Output length for an input of length `lin`.
    pub fn out_len(&self, lin: usize) -> usize {
        debug_assert!(lin + 2 * self.padding >= self.kernel());
        (lin + 2 * self.padding - self.kernel()) / self.stride + 1
    }

    /// `y[b,o,t] = bias[o] + Σ_{i,j} w[o,i,j] · x[b,i,t·s+j−p]` (zero outside).
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (bn, cin, lin) = (x.dim(0), x.dim(1), x.dim(2));
        debug_assert_eq!(cin, self.in_channels());
        let (cout, k, s, p) = (self.out_channels(), self.kernel(), self.stride, self.padding);
        let lout = self.out_len(lin);
        let mut y = Tensor::zeros(&[bn, cout, lout]);
        let xd = x.data();
        let wd = self.weight.data();
        let bd = self.bias.data();
        let yd = y.data_mut();
        for b in 0..bn {
            let xb = &xd[b * cin * lin..(b + 1) * cin * lin];
            for oc in 0..cout {
                let yrow = &mut yd[(b * cout + oc) * lout..(b * cout + oc + 1) * lout];
                yrow.fill(bd[oc]);
                for ic in 0..cin {
                    let xrow = &xb[ic * lin..(ic + 1) * lin];
                    let wrow = &wd[(oc * cin + ic) * k..(oc * cin + ic + 1) * k];
                    for (j, &w) in wrow.iter().enumerate() {
                        let (t0, t1, mut u) = tap_range(j, p, s, lin, lout);
                        if s == 1 {
                            // contiguous in u: let the autovectorizer at it
                            let xs = &xrow[u..u + (t1 - t0)];
                            let ys = &mut yrow[t0..t1];
                            for (yv, xv) in ys.iter_mut().zip(xs) {
                                *yv += w * xv;
                            }
                        } else {
                            for t in t0..t1 {
                                yrow[t] += w * xrow[u];
                                u += s;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        let (bn, cin, lin) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, k, s, p) = (self.out_channels(), self.kernel(), self.stride, self.padding);
        let lout = self.out_len(lin);
        debug_assert_eq!(grad_out.shape(), &[bn, cout, lout]);
        let mut gx = Tensor::zeros(&[bn, cin, lin]);
        {
            let xd = x.data();
            let gd = grad_out.data();
            let (wd, gw) = self.weight.data_and_grad_mut();
            let gxd = gx.data_mut();
            for b in 0..bn {
                let xb = &xd[b * cin * lin..(b + 1) * cin * lin];
                let gxb = &mut gxd[b * cin * lin..(b + 1) * cin * lin];
                for oc in 0..cout {
                    let grow = &gd[(b * cout + oc) * lout..(b * cout + oc + 1) * lout];
                    for ic in 0..cin {
                        let xrow = &xb[ic * lin..(ic + 1) * lin];
                        let gxrow = &mut gxb[ic * lin..(ic + 1) * lin];
                        let wbase = (oc * cin + ic) * k;
                        for j in 0..k {
                            let (t0, t1, u0) = tap_range(j, p, s, lin, lout);
                            // dW[o,i,j] += Σ_t g[t]·x[u];  dX[u] += w[o,i,j]·g[t]
                            let w = wd[wbase + j];
                            let mut acc = 0.0;
                            if s == 1 {
                                let xs = &xrow[u0..u0 + (t1 - t0)];
                                let gs = &grow[t0..t1];
                                let gxs = &mut gxrow[u0..u0 + (t1 - t0)];
                                for ((gxv, xv), gv) in gxs.iter_mut().zip(xs).zip(gs) {
                                    acc += gv * xv;
                                    *gxv += w * gv;
                                }
                            } else {
                                let mut u = u0;
                                for t in t0..t1 {
                                    let gv = grow[t];
                                    acc += gv * xrow[u];
                                    gxrow[u] += w * gv;
                                    u += s;
                                }
                            }
                            gw[wbase + j] += acc;
                        }
                    }
                }
            }
        }
        {
            let gd = grad_out.data();
            let gb = self.bias.grad_mut();
            for b in 0..bn {
                for oc in 0..cout {
                    let grow = &gd[(b * cout + oc) * lout..(b * cout + oc + 1) * lout];
                    gb[oc] += grow.iter().sum::<f64>();
                }
            }
        }
        gx
    }
}

/// Valid output positions for kernel tap `j`: returns `(t0, t1, u0)` such that
/// for `t` in `t0..t1` the source index `u = t·stride + j − padding` starts at
/// `u0` and stays inside `[0, lin)`.
#[inline]
fn tap_range(j: usize, padding: usize, stride: usize, lin: usize, lout: usize) -> (usize, usize, usize) {
    let off = j as isize - padding as isize;
    let t0 = if off < 0 {
        ((-off) as usize).div_ceil(stride)
    } else {
        0
    };
    let hi = lin as isize - 1 - off;
    let t1 = if hi < 0 {
        t0
    } else {
        lout.min(hi as usize / stride + 1)
    };
    let t1 = t1.max(t0);
    let u0 = (t0 * stride) as isize + off;
    (t0, t1, u0.max(0) as usize)
}

/// Per-channel batch statistics cached by a training-mode batchnorm pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    inv_std: Vec<f64>,
    /// Normalized activations `(x − μ) / √(σ² + ε)`, shape of the input.
    xhat: Vec<f64>,
}

/// Batch normalization over `[B, C, L]`, normalizing each channel across the
/// batch and temporal dimensions.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    /// `[C]` scale (trainable)
    pub gamma: Tensor,
    /// `[C]` shift (trainable)
    pub beta: Tensor,
    /// `[C]` exponential moving average of batch means
    pub running_mean: Tensor,
    /// `[C]` exponential moving average of (biased) batch variances
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        assert!(channels > 0);
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.data_mut().fill(1.0);
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.data_mut().fill(1.0);
        BatchNorm1d {
            gamma,
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.dim(0)
    }

    /// Training-mode pass: normalizes with batch statistics, updates running
    /// statistics in place, and returns the cache needed by [`Self::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnCache) {
        let (bn, c, l) = (x.dim(0), x.dim(1), x.dim(2));
        debug_assert_eq!(c, self.channels());
        let n = (bn * l) as f64;
        let xd = x.data();
        let mut y = Tensor::zeros(&[bn, c, l]);
        let mut cache = BnCache {
            inv_std: vec![0.0; c],
            xhat: vec![0.0; bn * c * l],
        };
        let gd = self.gamma.data().to_vec();
        let bd = self.beta.data().to_vec();
        for ch in 0..c {
            let mut sum = 0.0;
            for b in 0..bn {
                let row = &xd[(b * c + ch) * l..(b * c + ch + 1) * l];
                sum += row.iter().sum::<f64>();
            }
            let mean = sum / n;
            let mut var_sum = 0.0;
            for b in 0..bn {
                let row = &xd[(b * c + ch) * l..(b * c + ch + 1) * l];
                for &v in row {
                    let d = v - mean;
                    var_sum += d * d;
                }
            }
            let var = var_sum / n;
            let inv_std = 1.0 / math::sqrt(var + self.eps);
            cache.inv_std[ch] = inv_std;
            let (g, b_) = (gd[ch], bd[ch]);
            let yd = y.data_mut();
            for b in 0..bn {
                let base = (b * c + ch) * l;
                for i in 0..l {
                    let xh = (xd[base + i] - mean) * inv_std;
                    cache.xhat[base + i] = xh;
                    yd[base + i] = g * xh + b_;
                }
            }
            let m = self.momentum;
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - m) * *rm + m * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - m) * *rv + m * var;
        }
        (y, cache)
    }

    /// Evaluation-mode pass using running statistics; never mutates state.
    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let (bn, c, l) = (x.dim(0), x.dim(1), x.dim(2));
        debug_assert_eq!(c, self.channels());
        let mut y = Tensor::zeros(&[bn, c, l]);
        let xd = x.data();
        let yd = y.data_mut();
        for ch in 0..c {
            let inv_std = 1.0 / math::sqrt(self.running_var.data()[ch] + self.eps);
            let mean = self.running_mean.data()[ch];
            let g = self.gamma.data()[ch] * inv_std;
            let b_ = self.beta.data()[ch];
            for b in 0..bn {
                let base = (b * c + ch) * l;
                for i in 0..l {
                    yd[base + i] = g * (xd[base + i] - mean) + b_;
                }
            }
        }
        y
    }

    /// Training-mode backward: accumulates gamma/beta gradients and returns
    /// the input gradient. Uses the compact per-channel form
    /// `dx = γ·inv_std/n · (n·g − x̂·Σ(g·x̂) − Σg)`.
    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Tensor {
        let (bn, c, l) = (grad_out.dim(0), grad_out.dim(1), grad_out.dim(2));
        debug_assert_eq!(c, self.channels());
        debug_assert_eq!(cache.xhat.len(), bn * c * l);
        let n = (bn * l) as f64;
        let gd = grad_out.data();
        let mut gx = Tensor::zeros(&[bn, c, l]);
        let gamma = self.gamma.data().to_vec();
        for ch in 0..c {
            let mut s1 = 0.0; // Σ g·x̂
            let mut s2 = 0.0; // Σ g
            for b in 0..bn {
                let base = (b * c + ch) * l;
                for i in 0..l {
                    let g = gd[base + i];
                    s1 += g * cache.xhat[base + i];
                    s2 += g;
                }
            }
            self.gamma.grad_mut()[ch] += s1;
            self.beta.grad_mut()[ch] += s2;
            let scale = gamma[ch] * cache.inv_std[ch] / n;
            let gxd = gx.data_mut();
            for b in 0..bn {
                let base = (b * c + ch) * l;
                for i in 0..l {
                    gxd[base + i] =
                        scale * (n * gd[base + i] - cache.xhat[base + i] * s1 - s2);
                }
            }
        }
        gx
    }
}

/// Fully-connected layer over `[B, in_features]`.
#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out_features, in_features]`
    pub weight: Tensor,
    /// `[out_features]`
    pub bias: Tensor,
}

impl Linear {
    /// Kaiming fan-in initialization: weights ~ N(0, 2 / in_features), zero bias.
    pub fn new(in_features: usize, out_features: usize, rng: &mut SeededRng) -> Self {
        assert!(in_features > 0 && out_features > 0);
        let mut weight = Tensor::zeros(&[out_features, in_features]);
        weight.fill_normal(math::sqrt(2.0 / in_features as f64), rng);
        Linear {
            weight,
            bias: Tensor::zeros(&[out_features]),
        }
    }

    /// Square identity map (used for same-width feature projectors).
    pub fn identity(features: usize) -> Self {
        let mut weight = Tensor::zeros(&[features, features]);
        for i in 0..features {
            weight.data_mut()[i * features + i] = 1.0;
        }
        Linear {
            weight,
            bias: Tensor::zeros(&[features]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_features(&self) -> usize {
        self.weight.dim(0)
    }

    /// `y = x·Wᵀ + b`
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (bn, din) = (x.dim(0), x.dim(1));
        debug_assert_eq!(din, self.in_features());
        let dout = self.out_features();
        let mut y = Tensor::zeros(&[bn, dout]);
        let xd = x.data();
        let wd = self.weight.data();
        let bd = self.bias.data();
        let yd = y.data_mut();
        for b in 0..bn {
            let xrow = &xd[b * din..(b + 1) * din];
            let yrow = &mut yd[b * dout..(b + 1) * dout];
            for o in 0..dout {
                let wrow = &wd[o * din..(o + 1) * din];
                let mut acc = bd[o];
                for (wv, xv) in wrow.iter().zip(xrow) {
                    acc += wv * xv;
                }
                yrow[o] = acc;
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        let (bn, din) = (x.dim(0), x.dim(1));
        let dout = self.out_features();
        debug_assert_eq!(grad_out.shape(), &[bn, dout]);
        let mut gx = Tensor::zeros(&[bn, din]);
        let xd = x.data();
        let gd = grad_out.data();
        {
            let (_, gw) = self.weight.data_and_grad_mut();
            for b in 0..bn {
                let xrow = &xd[b * din..(b + 1) * din];
                let grow = &gd[b * dout..(b + 1) * dout];
                for (o, &g) in grow.iter().enumerate() {
                    let gwrow = &mut gw[o * din..(o + 1) * din];
                    for (gwv, xv) in gwrow.iter_mut().zip(xrow) {
                        *gwv += g * xv;
                    }
                }
            }
        }
        {
            let gb = self.bias.grad_mut();
            for b in 0..bn {
                let grow = &gd[b * dout..(b + 1) * dout];
                for (gbv, gv) in gb.iter_mut().zip(grow) {
                    *gbv += gv;
                }
            }
        }
        let wd = self.weight.data();
        let gxd = gx.data_mut();
        for b in 0..bn {
            let grow = &gd[b * dout..(b + 1) * dout];
            let gxrow = &mut gxd[b * din..(b + 1) * din];
            for (o, &g) in grow.iter().enumerate() {
                let wrow = &wd[o * din..(o + 1) * din];
                for (gxv, wv) in gxrow.iter_mut().zip(wrow) {
                    *gxv += g * wv;
                }
            }
        }
        gx
    }
}

/// In-place rectifier.
pub fn relu_inplace(t: &mut Tensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` by the rectifier's active set, identified from the *post*-
/// activation values (`act > 0` ⇔ pre-activation > 0; the subgradient at
/// exactly zero is taken as zero).
pub fn relu_mask_inplace(act: &Tensor, grad: &mut Tensor) {
    debug_assert_eq!(act.shape(), grad.shape());
    for (g, &a) in grad.data_mut().iter_mut().zip(act.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Mean over the temporal dimension: `[B, C, L] → [B, C]`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let (bn, c, l) = (x.dim(0), x.dim(1), x.dim(2));
    let mut y = Tensor::zeros(&[bn, c]);
    let xd = x.data();
    let yd = y.data_mut();
    let inv = 1.0 / l as f64;
    for b in 0..bn {
        for ch in 0..c {
            let row = &xd[(b * c + ch) * l..(b * c + ch + 1) * l];
            yd[b * c + ch] = row.iter().sum::<f64>() * inv;
        }
    }
    y
}

/// Backward of [`global_avg_pool`]: spreads each pooled gradient uniformly
/// over the `l` temporal positions it averaged.
pub fn global_avg_pool_backward(grad_out: &Tensor, l: usize) -> Tensor {
    let (bn, c) = (grad_out.dim(0), grad_out.dim(1));
    let mut gx = Tensor::zeros(&[bn, c, l]);
    let gd = grad_out.data();
    let gxd = gx.data_mut();
    let inv = 1.0 / l as f64;
    for b in 0..bn {
        for ch in 0..c {
            let g = gd[b * c + ch] * inv;
            gxd[(b * c + ch) * l..(b * c + ch + 1) * l].fill(g);
        }
    }
    gx
}

/// Total element count across a parameter list (the building block for model
/// parameter counting; an empty list counts zero).
pub fn param_count<'a, I: IntoIterator<Item = &'a Tensor>>(params: I) -> usize {
    params.into_iter().map(Tensor::numel).sum()
}
