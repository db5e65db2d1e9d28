//! Classification loss.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Row-wise log-softmax with max subtraction; numerically stable for any
/// finite logits.
pub fn log_softmax_rows(logits: &Tensor) -> Tensor {
    let (bn, k) = (logits.dim(0), logits.dim(1));
    let mut out = Tensor::zeros(&[bn, k]);
    let xd = logits.data();
    let od = out.data_mut();
    for b in 0..bn {
        let row = &xd[b * k..(b + 1) * k];
        let orow = &mut od[b * k..(b + 1) * k];
        log_softmax_row(row, orow);
    }
    out
}

/// Log-softmax of one row into `out`.
pub(crate) fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - max;
        sum += math::exp(*o);
    }
    let lse = math::ln(sum);
    for o in out.iter_mut() {
        *o -= lse;
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = log_softmax_rows(logits);
    for v in out.data_mut() {
        *v = math::exp(*v);
    }
    out
}

/// Mean cross-entropy between softmax of `logits` (`[B, K]`) and integer
/// `labels` (`len B`), together with the gradient with respect to the logits,
/// `(softmax − onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("[B, K]", logits.shape()));
    }
    let (bn, k) = (logits.dim(0), logits.dim(1));
    if bn == 0 || k == 0 {
        return Err(Error::shape("[B>=1, K>=1]", logits.shape()));
    }
    if labels.len() != bn {
        return Err(Error::shape(bn, labels.len()));
    }
    if !logits.all_finite() {
        return Err(Error::NonFiniteInput("logits"));
    }
    for &y in labels {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: k,
            });
        }
    }
    let mut grad = Tensor::zeros(&[bn, k]);
    let xd = logits.data();
    let gd = grad.data_mut();
    let inv_b = 1.0 / bn as f64;
    let mut loss = 0.0;
    let mut scratch: Vec<f64> = alloc::vec![0.0; k];
    for (b, &y) in labels.iter().enumerate() {
        let row = &xd[b * k..(b + 1) * k];
        log_softmax_row(row, &mut scratch);
        loss -= scratch[y];
        let grow = &mut gd[b * k..(b + 1) * k];
        for (g, &lp) in grow.iter_mut().zip(scratch.iter()) {
            *g = math::exp(lp) * inv_b;
        }
        grow[y] -= inv_b;
    }
    Ok((loss * inv_b, grad))
}

/// Index of the row maximum; ties resolve to the lowest index.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let logits = Tensor::zeros(&[2, 4]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss - (4.0f64).ln()).abs() < 1e-12);
        // gradient rows sum to zero
        for b in 0..2 {
            let s: f64 = grad.data()[b * 4..(b + 1) * 4].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_logits_changes_nothing() {
        let a = Tensor::from_vec(&[1, 3], alloc::vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[1, 3], alloc::vec![1001.0, 1002.0, 1003.0]).unwrap();
        let (la, _) = softmax_cross_entropy(&a, &[2]).unwrap();
        let (lb, _) = softmax_cross_entropy(&b, &[2]).unwrap();
        assert!((la - lb).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax_row(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_row(&[5.0]), 0);
    }
}
