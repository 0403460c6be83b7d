//! Training objectives with analytic gradients: weighted squared error with a
//! smoothness penalty, Plackett-Luce listwise ranking, and distillation.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("experimental uncertainty must be positive (index {0})")]
    NonPositiveSigma(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("true order is not a permutation of 0..{0}")]
    InvalidPermutation(usize),
    #[error("temperature must be positive")]
    NonPositiveTemperature,
    #[error("confidence must lie in [0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("loss weights must be non-negative")]
    NegativeWeight,
}

pub const DEFAULT_PENALTY: f64 = 0.01;
pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SftBatch {
    pub y_pred: Vec<f64>,
    pub y_true: Vec<f64>,
    pub sigma_exp: Vec<f64>,
    /// Norm of the prediction's gradient with respect to the model input, per example.
    pub input_grad_norms: Vec<f64>,
    pub lambda: f64,
}

impl SftBatch {
    /// Unit uncertainties, no penalty values, default penalty weight.
    pub fn new(y_pred: Vec<f64>, y_true: Vec<f64>) -> SftBatch {
        let b = y_pred.len();
        SftBatch { y_pred, y_true, sigma_exp: vec![1.0; b], input_grad_norms: vec![0.0; b], lambda: DEFAULT_PENALTY }
    }
}

/// Returns the loss and its gradient with respect to `y_pred`.
pub fn sft_loss(batch: &SftBatch) -> Result<(f64, Vec<f64>), LossError> {
    let b = batch.y_pred.len();
    if b == 0 {
        return Err(LossError::EmptyBatch);
    }
    for len in [batch.y_true.len(), batch.sigma_exp.len(), batch.input_grad_norms.len()] {
        if len != b {
            return Err(LossError::DimensionMismatch(b, len));
        }
    }
    if let Some(i) = batch.sigma_exp.iter().position(|&s| s.is_nan() || s <= 0.0) {
        return Err(LossError::NonPositiveSigma(i));
    }
    let bf = b as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b);
    for i in 0..b {
        let s = batch.sigma_exp[i];
        let r = (batch.y_pred[i] - batch.y_true[i]) / s;
        loss += r * r;
        grad.push(2.0 * r / (s * bf));
    }
    let penalty = batch.input_grad_norms.iter().sum::<f64>() / bf;
    Ok((loss / bf + batch.lambda * penalty, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingGroup {
    pub scores: Vec<f64>,
    /// Item indices from best to worst.
    pub true_order: Vec<usize>,
    pub tau: f64,
    pub confidence: f64,
}

impl RankingGroup {
    pub fn new(scores: Vec<f64>, true_order: Vec<usize>) -> RankingGroup {
        RankingGroup { scores, true_order, tau: DEFAULT_TAU, confidence: 1.0 }
    }

    /// Order implied by sorting `labels` descending, ties by index.
    pub fn from_labels(scores: Vec<f64>, labels: &[f64]) -> RankingGroup {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| labels[b].total_cmp(&labels[a]).then(a.cmp(&b)));
        RankingGroup::new(scores, order)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let k = self.scores.len();
        if k == 0 {
            return Err(LossError::EmptyBatch);
        }
        if self.true_order.len() != k {
            return Err(LossError::DimensionMismatch(k, self.true_order.len()));
        }
        let mut seen = vec![false; k];
        for &r in &self.true_order {
            if r >= k || seen[r] {
                return Err(LossError::InvalidPermutation(k));
            }
            seen[r] = true;
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(LossError::NonPositiveTemperature);
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(LossError::InvalidConfidence(self.confidence));
        }
        Ok(())
    }
}

/// Log-probability of the true order and its gradient with respect to the scores.
fn pl_log_prob(g: &RankingGroup) -> (f64, Vec<f64>) {
    let k = g.scores.len();
    let z: Vec<f64> = g.true_order.iter().map(|&r| g.scores[r] / g.tau).collect();
    let mut logp = 0.0;
    let mut grad = vec![0.0; k];
    let mut probs = vec![0.0; k];
    for pos in 0..k {
        let tail = &z[pos..];
        let m = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = tail.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        logp += z[pos] - lse;
        for (p, v) in probs[pos..].iter_mut().zip(tail) {
            *p = (v - lse).exp();
        }
        grad[g.true_order[pos]] += 1.0 / g.tau;
        for q in pos..k {
            grad[g.true_order[q]] -= probs[q] / g.tau;
        }
    }
    (logp, grad)
}

pub fn plackett_luce_log_prob(group: &RankingGroup) -> Result<f64, LossError> {
    group.validate()?;
    Ok(pl_log_prob(group).0)
}

pub fn plackett_luce_prob(group: &RankingGroup) -> Result<f64, LossError> {
    plackett_luce_log_prob(group).map(f64::exp)
}

/// Confidence-weighted listwise loss; gradients are returned per group.
pub fn dpo_loss(groups: &[RankingGroup]) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    if groups.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let b = groups.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(groups.len());
    for g in groups {
        g.validate()?;
        let (logp, dlogp) = pl_log_prob(g);
        loss -= g.confidence * logp / b;
        grads.push(dlogp.into_iter().map(|d| -g.confidence * d / b).collect());
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillPair {
    pub h_pred: Vec<f64>,
    pub h_main: Vec<f64>,
    pub y_pred: f64,
    pub y_true: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl DistillPair {
    pub fn new(h_pred: Vec<f64>, h_main: Vec<f64>, y_pred: f64, y_true: f64) -> DistillPair {
        DistillPair { h_pred, h_main, y_pred, y_true, alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillGrad {
    pub h_pred: Vec<f64>,
    pub y_pred: f64,
}

pub fn distill_loss(pair: &DistillPair) -> Result<(f64, DistillGrad), LossError> {
    if pair.h_pred.len() != pair.h_main.len() {
        return Err(LossError::DimensionMismatch(pair.h_pred.len(), pair.h_main.len()));
    }
    if !(pair.alpha >= 0.0 && pair.beta >= 0.0) {
        return Err(LossError::NegativeWeight);
    }
    let diff: Vec<f64> = pair.h_pred.iter().zip(&pair.h_main).map(|(a, b)| a - b).collect();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let dy = pair.y_pred - pair.y_true;
    let h_grad = if norm > 0.0 { diff.iter().map(|d| pair.alpha * d / norm).collect() } else { vec![0.0; diff.len()] };
    let y_grad = if dy == 0.0 { 0.0 } else { pair.beta * dy.signum() };
    Ok((pair.alpha * norm + pair.beta * dy.abs(), DistillGrad { h_pred: h_grad, y_pred: y_grad }))
}
