//! Saturating-exponential fits of test error versus student capacity.
//!
//! Distillation error curves flatten as students grow, so the model is
//! `MAE(n) = a·exp(−b·n) + c`: `c` is the error floor, `b` the approach rate,
//! `a` the headroom at zero capacity. For a fixed `b` the model is linear in
//! `(a, c)`, so fitting reduces to a 1-D search over `b` with an exact
//! least-squares subproblem inside: a coarse grid over `b ∈ [0.01, 5]`
//! followed by golden-section refinement around the grid winner. A negative
//! floor is physically meaningless, so `c < 0` triggers a constrained refit
//! with `c = 0`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Fitted curve `MAE(n) = a·exp(−b·n) + c` plus fit quality.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingFit {
    pub a: f64,
    /// Decay rate; non-negative.
    pub b: f64,
    /// Error floor; non-negative.
    pub c: f64,
    /// Root-mean-square residual over the fitted points.
    pub rmse: f64,
    /// Coefficient of determination (1 for a perfect fit; defined as 1 when
    /// the data are constant and reproduced exactly).
    pub r_squared: f64,
    pub n_points: usize,
}

/// The fitted curve evaluated at capacity `size`.
pub fn predict_mae(fit: &ScalingFit, size: f64) -> f64 {
    fit.a * math::exp(-fit.b * size) + fit.c
}

const GRID_STEPS: usize = 512;
const B_MIN: f64 = 0.01;
const B_MAX: f64 = 5.0;

/// Solution of the inner linear least-squares problem at fixed `b`.
#[derive(Debug, Clone, Copy)]
struct Inner {
    a: f64,
    c: f64,
    sse: f64,
}

fn solve_at(b: f64, sizes: &[f64], maes: &[f64]) -> Inner {
    let m = sizes.len() as f64;
    let mut s_e = 0.0;
    let mut s_ee = 0.0;
    let mut s_ey = 0.0;
    let mut s_y = 0.0;
    for (&n, &y) in sizes.iter().zip(maes) {
        let e = math::exp(-b * n);
        s_e += e;
        s_ee += e * e;
        s_ey += e * y;
        s_y += y;
    }
    let det = s_ee * m - s_e * s_e;
    let (mut a, mut c);
    if det.abs() > 1e-300 {
        a = (s_ey * m - s_e * s_y) / det;
        c = (s_ee * s_y - s_e * s_ey) / det;
    } else {
        // exponential column is numerically constant: absorb it into the floor
        a = 0.0;
        c = s_y / m;
    }
    if c < 0.0 {
        // constrained refit on the boundary of the physical region
        c = 0.0;
        a = if s_ee > 0.0 { s_ey / s_ee } else { 0.0 };
    }
    let mut sse = 0.0;
    for (&n, &y) in sizes.iter().zip(maes) {
        let r = a * math::exp(-b * n) + c - y;
        sse += r * r;
    }
    Inner { a, c, sse }
}

/// Fits `MAE(n) = a·exp(−b·n) + c` to `(sizes, maes)` by grid search over the
/// decay rate with golden-section refinement.
///
/// Requires at least 4 points with positive, pairwise-distinct sizes and
/// finite errors. Point order does not matter: inputs are sorted internally,
/// so any permutation of the same points produces the identical fit.
pub fn fit_exponential(sizes: &[f64], maes: &[f64]) -> Result<ScalingFit> {
    if sizes.len() != maes.len() {
        return Err(Error::shape(sizes.len(), maes.len()));
    }
    if sizes.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: sizes.len(),
        });
    }
    for (&n, &y) in sizes.iter().zip(maes) {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "sizes must be positive and finite, got {n}"
            )));
        }
        if !y.is_finite() {
            return Err(Error::NonFiniteInput("mae values"));
        }
    }
    let mut pairs: Vec<(f64, f64)> = sizes.iter().copied().zip(maes.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finiteness checked"));
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "duplicate size {} in fit input",
                w[0].0
            )));
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    // coarse grid over the decay rate
    let step = (B_MAX - B_MIN) / (GRID_STEPS - 1) as f64;
    let mut best_b = B_MIN;
    let mut best = solve_at(B_MIN, &xs, &ys);
    for i in 1..GRID_STEPS {
        let b = B_MIN + step * i as f64;
        let inner = solve_at(b, &xs, &ys);
        if inner.sse < best.sse {
            best = inner;
            best_b = b;
        }
    }

    // golden-section refinement around the grid winner
    let mut lo = (best_b - step).max(0.0);
    let mut hi = (best_b + step).min(B_MAX);
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = solve_at(x1, &xs, &ys).sse;
    let mut f2 = solve_at(x2, &xs, &ys).sse;
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = solve_at(x1, &xs, &ys).sse;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = solve_at(x2, &xs, &ys).sse;
        }
    }
    let b = 0.5 * (lo + hi);
    let refined = solve_at(b, &xs, &ys);
    let (final_b, final_inner) = if refined.sse <= best.sse {
        (b, refined)
    } else {
        (best_b, best)
    };

    let n = xs.len() as f64;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sst: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - final_inner.sse / sst
    } else {
        1.0
    };
    Ok(ScalingFit {
        a: final_inner.a,
        b: final_b,
        c: final_inner.c,
        rmse: math::sqrt(final_inner.sse / n),
        r_squared,
        n_points: xs.len(),
    })
}
