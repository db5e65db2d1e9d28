//! Knowledge-distillation losses and their exact gradients.
//!
//! Four transfer strategies are implemented against a frozen teacher:
//!
//! * **hard** — cross-entropy against the teacher's argmax pseudo-labels
//! * **soft** — temperature-scaled KL divergence `τ²·KL(p_T ‖ p_S)`
//! * **dkd** — decoupled distillation: the target/non-target split
//!   `KL = TCKD + (1−p_t)·NCKD`, reweighted as `α·TCKD + β·NCKD` so the
//!   non-target structure can be emphasized independently of target confidence
//! * **feature** — mean-squared error between a trainable linear projection of
//!   the student's pooled features and the teacher's pooled features
//!
//! Every loss returns `(value, gradient-with-respect-to-student-outputs)`;
//! [`total_loss`] composes the strategy term with ground-truth cross-entropy
//! according to a [`DistillConfig`]. All softmax work happens in log space
//! with max subtraction, so extreme logits stay finite.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::{argmax_row, log_softmax_row, softmax_cross_entropy};
use crate::math;
use crate::nn::Linear;
use crate::rng;
use crate::tensor::Tensor;

/// How (and whether) a teacher's knowledge reaches the student.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Strategy {
    /// Ground-truth cross-entropy only; no teacher.
    Scratch,
    /// Teacher argmax pseudo-labels.
    Hard,
    /// Temperature-scaled KL on full distributions.
    Soft,
    /// Decoupled target/non-target distillation.
    Dkd,
    /// Projected-feature MSE.
    Feature,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Scratch,
        Strategy::Hard,
        Strategy::Soft,
        Strategy::Dkd,
        Strategy::Feature,
    ];

    /// Whether this strategy consumes teacher outputs.
    pub fn needs_teacher(&self) -> bool {
        !matches!(self, Strategy::Scratch)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Scratch => "scratch",
            Strategy::Hard => "hard",
            Strategy::Soft => "soft",
            Strategy::Dkd => "dkd",
            Strategy::Feature => "feature",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(Strategy::Scratch),
            "hard" => Ok(Strategy::Hard),
            "soft" => Ok(Strategy::Soft),
            "dkd" => Ok(Strategy::Dkd),
            "feature" => Ok(Strategy::Feature),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown strategy '{other}' (expected scratch|hard|soft|dkd|feature)"
            ))),
        }
    }
}

/// Loss-composition weights for one training run.
///
/// The defaults are the best-performing decoupled-distillation settings
/// (α = 1, β = 8, τ = 2, unit cross-entropy weight): non-target structure is
/// weighed eight times more than target confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DistillConfig {
    pub strategy: Strategy,
    /// Weight of the target-confidence term (dkd).
    #[cfg_attr(feature = "serde", serde(default = "default_alpha"))]
    pub alpha: f64,
    /// Weight of the non-target-structure term (dkd).
    #[cfg_attr(feature = "serde", serde(default = "default_beta"))]
    pub beta: f64,
    /// Softmax temperature (soft, dkd).
    #[cfg_attr(feature = "serde", serde(default = "default_tau"))]
    pub tau: f64,
    /// Weight of ground-truth cross-entropy alongside soft/dkd/feature terms.
    #[cfg_attr(feature = "serde", serde(default = "default_unit"))]
    pub ce_weight: f64,
    /// Weight of the projected-feature MSE term (feature).
    #[cfg_attr(feature = "serde", serde(default = "default_unit"))]
    pub feature_weight: f64,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    8.0
}
fn default_tau() -> f64 {
    2.0
}
fn default_unit() -> f64 {
    1.0
}

impl DistillConfig {
    /// Default weights for the given strategy.
    pub fn for_strategy(strategy: Strategy) -> Self {
        DistillConfig {
            strategy,
            alpha: default_alpha(),
            beta: default_beta(),
            tau: default_tau(),
            ce_weight: default_unit(),
            feature_weight: default_unit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.tau.is_finite()
            && self.ce_weight.is_finite()
            && self.feature_weight.is_finite();
        if !all_finite {
            return Err(Error::InvalidConfig("non-finite distillation weight".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.ce_weight < 0.0 || self.feature_weight < 0.0
        {
            return Err(Error::InvalidConfig(
                "distillation weights must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Trainable linear map from student feature space to teacher feature space.
///
/// Always present for feature distillation; initialized to the identity when
/// the spaces already have equal width, Kaiming otherwise.
#[derive(Debug, Clone)]
pub struct Projector {
    pub linear: Linear,
}

impl Projector {
    pub fn new(student_dim: usize, teacher_dim: usize, seed: u64) -> Self {
        let linear = if student_dim == teacher_dim {
            Linear::identity(student_dim)
        } else {
            let mut r = rng::derived(seed, 0x70726f6a); // projector-init stream
            Linear::new(student_dim, teacher_dim, &mut r)
        };
        Projector { linear }
    }

    pub fn student_dim(&self) -> usize {
        self.linear.in_features()
    }

    pub fn teacher_dim(&self) -> usize {
        self.linear.out_features()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        alloc::vec![&mut self.linear.weight, &mut self.linear.bias]
    }

    pub fn zero_grads(&mut self) {
        self.linear.weight.zero_grad();
        self.linear.bias.zero_grad();
    }
}

fn check_logit_pair(student: &Tensor, teacher: &Tensor) -> Result<(usize, usize)> {
    if student.shape().len() != 2 || teacher.shape() != student.shape() {
        return Err(Error::shape(student.shape(), teacher.shape()));
    }
    let (bn, k) = (student.dim(0), student.dim(1));
    if bn == 0 || k < 2 {
        return Err(Error::shape("[B>=1, K>=2]", student.shape()));
    }
    if !student.all_finite() {
        return Err(Error::NonFiniteInput("student logits"));
    }
    if !teacher.all_finite() {
        return Err(Error::NonFiniteInput("teacher logits"));
    }
    Ok((bn, k))
}

/// Cross-entropy of the student against the teacher's argmax labels (ties
/// resolve to the lowest class index). Returns the loss and its gradient with
/// respect to the student logits.
pub fn hard_loss(student_logits: &Tensor, teacher_logits: &Tensor) -> Result<(f64, Tensor)> {
    let (bn, k) = check_logit_pair(student_logits, teacher_logits)?;
    let td = teacher_logits.data();
    let pseudo: Vec<usize> = (0..bn).map(|b| argmax_row(&td[b * k..(b + 1) * k])).collect();
    softmax_cross_entropy(student_logits, &pseudo)
}

/// Temperature-scaled distillation loss `τ² · mean_b KL(p_T ‖ p_S)` where both
/// distributions are softmaxes of logits divided by `τ`. The returned gradient
/// (with respect to student logits) is `τ·(p_S − p_T)/B`.
pub fn soft_loss(student_logits: &Tensor, teacher_logits: &Tensor, tau: f64) -> Result<(f64, Tensor)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let (bn, k) = check_logit_pair(student_logits, teacher_logits)?;
    let sd = student_logits.data();
    let td = teacher_logits.data();
    let mut grad = Tensor::zeros(&[bn, k]);
    let gd = grad.data_mut();
    let mut ls = alloc::vec![0.0; k];
    let mut lt = alloc::vec![0.0; k];
    let mut srow = alloc::vec![0.0; k];
    let mut trow = alloc::vec![0.0; k];
    let inv_b = 1.0 / bn as f64;
    let mut loss = 0.0;
    for b in 0..bn {
        for i in 0..k {
            srow[i] = sd[b * k + i] / tau;
            trow[i] = td[b * k + i] / tau;
        }
        log_softmax_row(&srow, &mut ls);
        log_softmax_row(&trow, &mut lt);
        let mut kl = 0.0;
        for i in 0..k {
            let p = math::exp(lt[i]);
            let q = math::exp(ls[i]);
            kl += p * (lt[i] - ls[i]);
            gd[b * k + i] = tau * inv_b * (q - p);
        }
        loss += kl;
    }
    Ok((tau * tau * loss * inv_b, grad))
}

/// The two decoupled components for one sample at temperature `tau`:
/// `(target_term, nontarget_term)`, where the plain temperature-scaled KL
/// decomposes as `KL = target_term + (1 − p_target) · nontarget_term`.
///
/// The target term is the binary KL between teacher and student
/// (target vs rest) confidence; the non-target term is the KL between the
/// renormalized non-target distributions.
pub fn dkd_components(
    student_row: &[f64],
    teacher_row: &[f64],
    target: usize,
    tau: f64,
) -> Result<(f64, f64)> {
    let k = student_row.len();
    if k < 2 || teacher_row.len() != k {
        return Err(Error::shape("two rows of K>=2 logits", (student_row.len(), teacher_row.len())));
    }
    if target >= k {
        return Err(Error::LabelOutOfRange {
            label: target,
            num_classes: k,
        });
    }
    let mut ls = alloc::vec![0.0; k];
    let mut lt = alloc::vec![0.0; k];
    let srow: Vec<f64> = student_row.iter().map(|v| v / tau).collect();
    let trow: Vec<f64> = teacher_row.iter().map(|v| v / tau).collect();
    log_softmax_row(&srow, &mut ls);
    log_softmax_row(&trow, &mut lt);
    let lq_nt = log_sum_exp_excluding(&ls, target);
    let lp_nt = log_sum_exp_excluding(&lt, target);
    let pt = math::exp(lt[target]);
    let one_minus_pt = math::exp(lp_nt);
    // binary target-vs-rest KL
    let tckd = pt * (lt[target] - ls[target]) + one_minus_pt * (lp_nt - lq_nt);
    // non-target KL under renormalized distributions
    let mut nckd = 0.0;
    for i in 0..k {
        if i == target {
            continue;
        }
        let p_hat = math::exp(lt[i] - lp_nt);
        nckd += p_hat * ((lt[i] - lp_nt) - (ls[i] - lq_nt));
    }
    Ok((tckd, nckd))
}

/// Log-sum-exp of a log-probability row with one index removed.
fn log_sum_exp_excluding(log_probs: &[f64], skip: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in log_probs.iter().enumerate() {
        if i != skip && v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for (i, &v) in log_probs.iter().enumerate() {
        if i != skip {
            sum += math::exp(v - max);
        }
    }
    max + math::ln(sum)
}

/// Decoupled distillation loss `τ² · mean_b (α·TCKD + β·NCKD)` with its
/// gradient with respect to the student logits. `targets` are ground-truth
/// class indices.
pub fn dkd_loss(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    targets: &[usize],
    alpha: f64,
    beta: f64,
    tau: f64,
) -> Result<(f64, Tensor)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::InvalidConfig(
            "dkd weights must be finite and non-negative".into(),
        ));
    }
    let (bn, k) = check_logit_pair(student_logits, teacher_logits)?;
    if targets.len() != bn {
        return Err(Error::shape(bn, targets.len()));
    }
    for &y in targets {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: k,
            });
        }
    }
    let sd = student_logits.data();
    let td = teacher_logits.data();
    let mut grad = Tensor::zeros(&[bn, k]);
    let gd = grad.data_mut();
    let mut ls = alloc::vec![0.0; k];
    let mut lt = alloc::vec![0.0; k];
    let mut srow = alloc::vec![0.0; k];
    let mut trow = alloc::vec![0.0; k];
    let inv_b = 1.0 / bn as f64;
    let mut loss = 0.0;
    for (b, &y) in targets.iter().enumerate() {
        for i in 0..k {
            srow[i] = sd[b * k + i] / tau;
            trow[i] = td[b * k + i] / tau;
        }
        log_softmax_row(&srow, &mut ls);
        log_softmax_row(&trow, &mut lt);
        let lq_nt = log_sum_exp_excluding(&ls, y);
        let lp_nt = log_sum_exp_excluding(&lt, y);
        let pt = math::exp(lt[y]);
        let one_minus_pt = math::exp(lp_nt);
        let tckd = pt * (lt[y] - ls[y]) + one_minus_pt * (lp_nt - lq_nt);
        let mut nckd = 0.0;
        for i in 0..k {
            if i == y {
                continue;
            }
            let p_hat = math::exp(lt[i] - lp_nt);
            nckd += p_hat * ((lt[i] - lp_nt) - (ls[i] - lq_nt));
        }
        loss += alpha * tckd + beta * nckd;
        // gradient pieces: R = q_t/(1−q_t); A = −p_t + (1−p_t)·R
        let r = math::exp(ls[y] - lq_nt);
        let a = -pt + one_minus_pt * r;
        for i in 0..k {
            let q = math::exp(ls[i]);
            let delta = if i == y { 1.0 } else { 0.0 };
            let d_tckd = a * (delta - q);
            let p_hat_masked = if i == y { 0.0 } else { math::exp(lt[i] - lp_nt) };
            let d_nckd = q - p_hat_masked - r * (delta - q);
            gd[b * k + i] = tau * inv_b * (alpha * d_tckd + beta * d_nckd);
        }
    }
    Ok((tau * tau * loss * inv_b, grad))
}

/// Projected-feature mean-squared error
/// `mean over B·D_T elements of (proj(f_S) − f_T)²`.
///
/// Accumulates the projector's own parameter gradients and returns the loss
/// together with the gradient with respect to the *student* features.
pub fn feature_loss(
    student_features: &Tensor,
    teacher_features: &Tensor,
    projector: &mut Projector,
) -> Result<(f64, Tensor)> {
    if student_features.shape().len() != 2 || teacher_features.shape().len() != 2 {
        return Err(Error::shape("[B, D]", student_features.shape()));
    }
    let (bn, ds) = (student_features.dim(0), student_features.dim(1));
    let (bt, dt) = (teacher_features.dim(0), teacher_features.dim(1));
    if bn == 0 || bt != bn {
        return Err(Error::shape([bn, ds], [bt, dt]));
    }
    if ds != projector.student_dim() || dt != projector.teacher_dim() {
        return Err(Error::shape(
            [projector.student_dim(), projector.teacher_dim()],
            [ds, dt],
        ));
    }
    if !student_features.all_finite() || !teacher_features.all_finite() {
        return Err(Error::NonFiniteInput("features"));
    }
    let proj = projector.linear.forward(student_features);
    let n = (bn * dt) as f64;
    let mut diff = Tensor::zeros(&[bn, dt]);
    let mut loss = 0.0;
    {
        let dd = diff.data_mut();
        for (i, (p, t)) in proj.data().iter().zip(teacher_features.data()).enumerate() {
            let d = p - t;
            loss += d * d;
            dd[i] = 2.0 * d / n;
        }
    }
    let grad_student = projector.linear.backward(student_features, &diff);
    Ok((loss / n, grad_student))
}

/// Student-side outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct StudentOutputs<'a> {
    pub logits: &'a Tensor,
    pub features: &'a Tensor,
}

/// Teacher-side outputs for the same batch (evaluation mode, no gradients).
#[derive(Debug, Clone, Copy)]
pub struct TeacherOutputs<'a> {
    pub logits: &'a Tensor,
    pub features: &'a Tensor,
}

/// Composed loss with everything the trainer needs to backpropagate.
#[derive(Debug, Clone)]
pub struct LossBundle {
    pub total: f64,
    /// Gradient with respect to the student logits.
    pub logit_grad: Tensor,
    /// Gradient at the student's pooled feature tap (feature strategy only).
    pub feature_grad: Option<Tensor>,
}

/// Composes the training loss for one batch according to `cfg`:
///
/// * `scratch` — ground-truth cross-entropy, nothing else
/// * `hard` — teacher-argmax cross-entropy, nothing else
/// * `soft`/`dkd` — `ce_weight·CE + strategy term`
/// * `feature` — `ce_weight·CE + feature_weight·projected-feature MSE`
///
/// Teacher outputs are required exactly when the strategy needs them; the
/// feature strategy additionally requires the projector.
pub fn total_loss(
    cfg: &DistillConfig,
    student: StudentOutputs<'_>,
    teacher: Option<TeacherOutputs<'_>>,
    labels: &[usize],
    projector: Option<&mut Projector>,
) -> Result<LossBundle> {
    cfg.validate()?;
    if cfg.strategy.needs_teacher() && teacher.is_none() {
        return Err(Error::InvalidConfig(alloc::format!(
            "strategy '{}' requires teacher outputs",
            cfg.strategy
        )));
    }
    match cfg.strategy {
        Strategy::Scratch => {
            let (loss, grad) = softmax_cross_entropy(student.logits, labels)?;
            Ok(LossBundle {
                total: loss,
                logit_grad: grad,
                feature_grad: None,
            })
        }
        Strategy::Hard => {
            let t = teacher.expect("checked above");
            let (loss, grad) = hard_loss(student.logits, t.logits)?;
            Ok(LossBundle {
                total: loss,
                logit_grad: grad,
                feature_grad: None,
            })
        }
        Strategy::Soft | Strategy::Dkd => {
            let t = teacher.expect("checked above");
            let (ce, mut grad) = softmax_cross_entropy(student.logits, labels)?;
            let (kd, kd_grad) = match cfg.strategy {
                Strategy::Soft => soft_loss(student.logits, t.logits, cfg.tau)?,
                _ => dkd_loss(
                    student.logits,
                    t.logits,
                    labels,
                    cfg.alpha,
                    cfg.beta,
                    cfg.tau,
                )?,
            };
            for (g, kg) in grad.data_mut().iter_mut().zip(kd_grad.data()) {
                *g = cfg.ce_weight * *g + kg;
            }
            Ok(LossBundle {
                total: cfg.ce_weight * ce + kd,
                logit_grad: grad,
                feature_grad: None,
            })
        }
        Strategy::Feature => {
            let t = teacher.expect("checked above");
            let projector = projector.ok_or(Error::InvalidState(
                "feature strategy requires a projector",
            ))?;
            let (ce, mut grad) = softmax_cross_entropy(student.logits, labels)?;
            let (fl, mut fgrad) = feature_loss(student.features, t.features, projector)?;
            for g in grad.data_mut() {
                *g *= cfg.ce_weight;
            }
            for g in fgrad.data_mut() {
                *g *= cfg.feature_weight;
            }
            Ok(LossBundle {
                total: cfg.ce_weight * ce + cfg.feature_weight * fl,
                logit_grad: grad,
                feature_grad: Some(fgrad),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hard_loss_of_uniform_student_is_ln_k() {
        let student = Tensor::zeros(&[2, 3]);
        let teacher =
            Tensor::from_vec(&[2, 3], vec![0.2, 0.9, 0.1, 2.0, -1.0, 0.0]).unwrap();
        let (loss, _) = hard_loss(&student, &teacher).unwrap();
        assert!((loss - (3.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn hard_loss_breaks_argmax_ties_low() {
        let student = Tensor::from_vec(&[1, 3], vec![5.0, 0.0, 0.0]).unwrap();
        // classes 0 and 1 tie; pseudo-label must be 0, so loss is small
        let teacher = Tensor::from_vec(&[1, 3], vec![1.0, 1.0, 0.0]).unwrap();
        let (loss, _) = hard_loss(&student, &teacher).unwrap();
        assert!(loss < 0.02);
    }

    #[test]
    fn soft_loss_matches_worked_example() {
        // teacher [ln 2, 0], student uniform, τ = 1:
        // KL((2/3,1/3) ‖ (1/2,1/2)) = (2/3)ln(4/3) + (1/3)ln(2/3)
        let teacher = Tensor::from_vec(&[1, 2], vec![(2.0f64).ln(), 0.0]).unwrap();
        let student = Tensor::zeros(&[1, 2]);
        let (loss, _) = soft_loss(&student, &teacher, 1.0).unwrap();
        assert!((loss - 0.0566330122651324).abs() < 1e-12);
    }

    #[test]
    fn soft_loss_is_zero_iff_logits_agree() {
        let logits = Tensor::from_vec(&[2, 4], vec![1.0, -0.5, 2.0, 0.0, 3.0, 1.0, 0.0, -2.0])
            .unwrap();
        let (loss, grad) = soft_loss(&logits, &logits, 2.0).unwrap();
        assert!(loss.abs() < 1e-15);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-15));
        let other = Tensor::from_vec(&[2, 4], vec![0.0; 8]).unwrap();
        let (loss, _) = soft_loss(&other, &logits, 2.0).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn decoupling_identity_holds() {
        // τ²-scaled KL equals τ²·(TCKD + (1−p_t)·NCKD) for random rows
        let mut r = rng::seeded(99);
        for trial in 0..200 {
            let k = 2 + (trial % 9);
            let tau = [1.0, 2.0, 4.0][trial % 3];
            let srow: Vec<f64> = (0..k).map(|_| rng::normal(&mut r, 0.0, 3.0)).collect();
            let trow: Vec<f64> = (0..k).map(|_| rng::normal(&mut r, 0.0, 3.0)).collect();
            let y = trial % k;
            let (tckd, nckd) = dkd_components(&srow, &trow, y, tau).unwrap();
            // plain KL at temperature tau
            let s = Tensor::from_vec(&[1, k], srow.clone()).unwrap();
            let t = Tensor::from_vec(&[1, k], trow.clone()).unwrap();
            let (kl, _) = soft_loss(&s, &t, tau).unwrap();
            let mut lt = vec![0.0; k];
            let trow_scaled: Vec<f64> = trow.iter().map(|v| v / tau).collect();
            log_softmax_row(&trow_scaled, &mut lt);
            let one_minus_pt = math::exp(log_sum_exp_excluding(&lt, y));
            let recomposed = tau * tau * (tckd + one_minus_pt * nckd);
            assert!(
                (kl - recomposed).abs() < 1e-9,
                "k={k} tau={tau}: {kl} vs {recomposed}"
            );
        }
    }

    #[test]
    fn dkd_with_unit_weights_is_bounded_by_soft_pieces() {
        // sanity: both components are KLs, hence non-negative
        let mut r = rng::seeded(3);
        for _ in 0..50 {
            let srow: Vec<f64> = (0..6).map(|_| rng::normal(&mut r, 0.0, 2.0)).collect();
            let trow: Vec<f64> = (0..6).map(|_| rng::normal(&mut r, 0.0, 2.0)).collect();
            let (tckd, nckd) = dkd_components(&srow, &trow, 2, 2.0).unwrap();
            assert!(tckd >= -1e-12);
            assert!(nckd >= -1e-12);
        }
    }

    #[test]
    fn feature_loss_matches_worked_example() {
        // identity projector, student (0,0), teacher (1,2): (1+4)/2 = 2.5
        let mut proj = Projector::new(2, 2, 0);
        let s = Tensor::zeros(&[1, 2]);
        let t = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let (loss, _) = feature_loss(&s, &t, &mut proj).unwrap();
        assert_eq!(loss, 2.5);
    }

    #[test]
    fn feature_loss_projector_dim_mismatch_is_rejected() {
        let mut proj = Projector::new(4, 8, 0);
        let s = Tensor::zeros(&[1, 3]);
        let t = Tensor::zeros(&[1, 8]);
        assert!(matches!(
            feature_loss(&s, &t, &mut proj),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn projector_is_identity_for_equal_dims() {
        let proj = Projector::new(3, 3, 9);
        assert_eq!(
            proj.linear.weight.data(),
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn total_loss_scratch_reproduces_cross_entropy() {
        let logits = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.0]).unwrap();
        let feats = Tensor::zeros(&[2, 4]);
        let labels = [0usize, 2];
        let cfg = DistillConfig::for_strategy(Strategy::Scratch);
        let bundle = total_loss(
            &cfg,
            StudentOutputs {
                logits: &logits,
                features: &feats,
            },
            None,
            &labels,
            None,
        )
        .unwrap();
        let (ce, ce_grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        assert_eq!(bundle.total, ce);
        assert_eq!(bundle.logit_grad.data(), ce_grad.data());
        assert!(bundle.feature_grad.is_none());
    }

    #[test]
    fn total_loss_requires_teacher_for_distillation() {
        let logits = Tensor::zeros(&[1, 3]);
        let feats = Tensor::zeros(&[1, 2]);
        for strategy in [Strategy::Hard, Strategy::Soft, Strategy::Dkd, Strategy::Feature] {
            let cfg = DistillConfig::for_strategy(strategy);
            let out = total_loss(
                &cfg,
                StudentOutputs {
                    logits: &logits,
                    features: &feats,
                },
                None,
                &[0],
                None,
            );
            assert!(out.is_err(), "{strategy}");
        }
    }

    #[test]
    fn invalid_temperature_is_rejected() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(soft_loss(&logits, &logits, 0.0).is_err());
        assert!(soft_loss(&logits, &logits, f64::NAN).is_err());
        let mut cfg = DistillConfig::for_strategy(Strategy::Soft);
        cfg.tau = -1.0;
        assert!(cfg.validate().is_err());
    }
}
