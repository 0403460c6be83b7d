//! Training loops for the student scorer and the teacher's affinity head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::fingerprint::Fingerprint;
use crate::losses::{
    distill_loss, dpo_loss, sft_loss, DistillPair, RankingGroup, SftBatch, DEFAULT_PENALTY, DEFAULT_TAU,
};
use crate::model::optim::{Optimizer, OptimizerConfig};
use crate::model::tensor::{add_scaled, flatten, unflatten, zero_all};
use crate::model::{Student, StudentInput, Teacher, TokenReps};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Weight of the hidden-representation term.
    pub alpha: f64,
    /// Weight of the score term.
    pub beta: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for StudentTrainConfig {
    fn default() -> Self {
        StudentTrainConfig {
            epochs: 40,
            lr: 1.8e-3,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            alpha: 1.0,
            beta: 1.0,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentExample {
    pub fp: Fingerprint,
    pub prior: Vec<f64>,
    /// Teacher representation; `None` trains on the score alone.
    pub target_hidden: Option<Vec<f64>>,
    pub target_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean training loss before the first epoch and after each epoch.
    pub curve: Vec<f64>,
    pub steps: usize,
}

fn distill_pair(ex: &StudentExample, hidden: Vec<f64>, score: f64, cfg: &StudentTrainConfig) -> DistillPair {
    match &ex.target_hidden {
        Some(h) => DistillPair {
            h_pred: hidden,
            h_main: h.clone(),
            y_pred: score,
            y_true: ex.target_score,
            alpha: cfg.alpha,
            beta: cfg.beta,
        },
        None => {
            let zeros = vec![0.0; hidden.len()];
            DistillPair {
                h_pred: zeros.clone(),
                h_main: zeros,
                y_pred: score,
                y_true: ex.target_score,
                alpha: 0.0,
                beta: cfg.beta,
            }
        }
    }
}

fn student_input(ex: &StudentExample, protein: &[f64]) -> StudentInput {
    StudentInput { fp: ex.fp.clone(), protein_embedding: protein.to_vec(), prior_embedding: ex.prior.clone() }
}

/// Mean distillation loss over `examples`.
pub fn student_loss(
    student: &Student,
    protein: &[f64],
    examples: &[StudentExample],
    cfg: &StudentTrainConfig,
) -> Result<f64, HarnessError> {
    let losses = par::map(examples, cfg.workers, |ex| {
        let out = student.apply(&student_input(ex, protein))?;
        Ok::<f64, HarnessError>(distill_loss(&distill_pair(ex, out.hidden, out.score, cfg))?.0)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / examples.len().max(1) as f64)
}

pub fn train_student(
    student: &mut Student,
    protein: &[f64],
    examples: &[StudentExample],
    cfg: &StudentTrainConfig,
) -> Result<TrainReport, HarnessError> {
    if examples.is_empty() {
        return Err(HarnessError::NoData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, flatten(student).len());
    let mut grad = student.clone();
    let mut curve = vec![finite(student_loss(student, protein, examples, cfg)?)?];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut steps = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            zero_all(&mut grad);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &examples[i];
                let (out, trace) = student.forward(&student_input(ex, protein))?;
                let (loss, g) = distill_loss(&distill_pair(ex, out.hidden, out.score, cfg))?;
                finite(loss)?;
                let dh: Vec<f64> = g.h_pred.iter().map(|v| v * scale).collect();
                student.backward(&trace, &dh, g.y_pred * scale, &mut grad, false);
            }
            let mut params = flatten(student);
            opt.step(&mut params, &flatten(&grad), cfg.lr);
            unflatten(student, &params)?;
            steps += 1;
        }
        curve.push(finite(student_loss(student, protein, examples, cfg)?)?);
    }
    Ok(TrainReport { curve, steps })
}

fn finite(loss: f64) -> Result<f64, HarnessError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(HarnessError::DivergenceDetected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    /// Groups (ranking) or examples (regression) per step.
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Also update the pair encoder; otherwise it stays frozen.
    pub train_encoder: bool,
    /// Gradient-penalty weight for regression training.
    pub lambda: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            epochs: 30,
            lr: 2e-4,
            tau: DEFAULT_TAU,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
            train_encoder: false,
            lambda: DEFAULT_PENALTY,
            seed: 0,
            workers: 1,
        }
    }
}

/// A ranking over input indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub members: Vec<usize>,
    /// Positions into `members`, best first.
    pub true_order: Vec<usize>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadTrainReport {
    pub curve: Vec<f64>,
    pub steps: usize,
    /// Mean probability of the true orders (ranking) or mean squared error (regression).
    pub initial_metric: f64,
    pub final_metric: f64,
}

/// Featurized inputs, pre-encoded when the encoder is frozen.
struct HeadData<'a> {
    raw: &'a [TokenReps],
    encoded: Option<Vec<TokenReps>>,
}

impl<'a> HeadData<'a> {
    fn new(teacher: &Teacher, raw: &'a [TokenReps], cfg: &HeadTrainConfig) -> Result<HeadData<'a>, HarnessError> {
        let encoded = if cfg.train_encoder {
            None
        } else {
            let enc = par::map(raw, cfg.workers, |r| teacher.encoder.apply(r));
            Some(enc.into_iter().collect::<Result<Vec<_>, _>>()?)
        };
        Ok(HeadData { raw, encoded })
    }

    fn scores(&self, teacher: &Teacher, workers: usize) -> Result<Vec<f64>, HarnessError> {
        let out = par::map_indexed(self.raw.len(), workers, |i| match &self.encoded {
            Some(enc) => teacher.head.apply(&enc[i]).map(|o| o.affinity),
            None => teacher.encoder.apply(&self.raw[i]).and_then(|e| teacher.head.apply(&e)).map(|o| o.affinity),
        });
        Ok(out.into_iter().collect::<Result<Vec<_>, _>>()?)
    }

    /// Accumulates `d_score * d(score)/d(params)` into `grad`; returns the
    /// score and the norm of its gradient with respect to the model input.
    fn backward(
        &self,
        teacher: &Teacher,
        i: usize,
        d_score: f64,
        grad: &mut Teacher,
    ) -> Result<(f64, f64), HarnessError> {
        match &self.encoded {
            Some(enc) => {
                let (out, tr) = teacher.head.forward(&enc[i])?;
                let (gs, gz) = teacher.head.backward(&enc[i], &tr, d_score, &mut grad.head);
                Ok((out.affinity, norm2(&gs, &gz)))
            }
            None => {
                let (e, etr) = teacher.encoder.forward(&self.raw[i])?;
                let (out, tr) = teacher.head.forward(&e)?;
                let (gs, gz) = teacher.head.backward(&e, &tr, d_score, &mut grad.head);
                let (gs, gz) = teacher.encoder.backward(&etr, &gs, &gz, &mut grad.encoder);
                Ok((out.affinity, norm2(&gs, &gz)))
            }
        }
    }
}

fn norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).map(|v| v * v).sum::<f64>().sqrt()
}

fn ranking_groups(groups: &[GroupSpec], scores: &[f64], tau: f64) -> Vec<RankingGroup> {
    groups
        .iter()
        .map(|g| RankingGroup {
            scores: g.members.iter().map(|&m| scores[m]).collect(),
            true_order: g.true_order.clone(),
            tau,
            confidence: g.confidence,
        })
        .collect()
}

/// Mean listwise loss and mean probability of the true orders.
fn ranking_eval(
    teacher: &Teacher,
    data: &HeadData,
    groups: &[GroupSpec],
    cfg: &HeadTrainConfig,
) -> Result<(f64, f64), HarnessError> {
    let scores = data.scores(teacher, cfg.workers)?;
    let rg = ranking_groups(groups, &scores, cfg.tau);
    let (loss, _) = dpo_loss(&rg)?;
    let mut p = 0.0;
    for g in &rg {
        p += crate::losses::plackett_luce_prob(g)?;
    }
    Ok((finite(loss)?, p / rg.len() as f64))
}

fn step_params(
    teacher: &mut Teacher,
    grad: &Teacher,
    opt: &mut Optimizer,
    cfg: &HeadTrainConfig,
) -> Result<(), HarnessError> {
    if cfg.train_encoder {
        let mut p = flatten(teacher);
        opt.step(&mut p, &flatten(grad), cfg.lr);
        unflatten(teacher, &p)?;
    } else {
        let mut p = flatten(&teacher.head);
        opt.step(&mut p, &flatten(&grad.head), cfg.lr);
        unflatten(&mut teacher.head, &p)?;
    }
    Ok(())
}

fn trainable_count(teacher: &Teacher, cfg: &HeadTrainConfig) -> usize {
    if cfg.train_encoder {
        flatten(teacher).len()
    } else {
        flatten(&teacher.head).len()
    }
}

/// Preference training of the affinity head on ranking groups over `inputs`
/// (featurized token representations).
pub fn train_head_dpo(
    teacher: &mut Teacher,
    inputs: &[TokenReps],
    groups: &[GroupSpec],
    cfg: &HeadTrainConfig,
) -> Result<HeadTrainReport, HarnessError> {
    if groups.is_empty() {
        return Err(HarnessError::NoData);
    }
    if groups.iter().flat_map(|g| &g.members).any(|&m| m >= inputs.len()) {
        return Err(HarnessError::InvalidGroup);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, trainable_count(teacher, cfg));
    let mut grad = teacher.clone();
    let mut data = HeadData::new(teacher, inputs, cfg)?;
    let (loss0, p0) = ranking_eval(teacher, &data, groups, cfg)?;
    let mut curve = vec![loss0];
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut steps = 0;
    let mut last_p = p0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            zero_all(&mut grad);
            let specs: Vec<GroupSpec> = batch.iter().map(|&g| groups[g].clone()).collect();
            let mut scores = vec![0.0; inputs.len()];
            for g in &specs {
                for &m in &g.members {
                    scores[m] = match &data.encoded {
                        Some(enc) => teacher.head.apply(&enc[m])?.affinity,
                        None => teacher.head.apply(&teacher.encoder.apply(&inputs[m])?)?.affinity,
                    };
                }
            }
            let rg = ranking_groups(&specs, &scores, cfg.tau);
            let (loss, grads) = dpo_loss(&rg)?;
            finite(loss)?;
            for (g, dg) in specs.iter().zip(&grads) {
                for (&m, &d) in g.members.iter().zip(dg) {
                    if d != 0.0 {
                        data.backward(teacher, m, d, &mut grad)?;
                    }
                }
            }
            step_params(teacher, &grad, &mut opt, cfg)?;
            steps += 1;
        }
        if cfg.train_encoder {
            data = HeadData::new(teacher, inputs, cfg)?;
        }
        let (loss, p) = ranking_eval(teacher, &data, groups, cfg)?;
        curve.push(loss);
        last_p = p;
    }
    Ok(HeadTrainReport { curve, steps, initial_metric: p0, final_metric: last_p })
}

/// Regression training of the affinity head with the smoothness penalty
/// reported in the loss. The penalty is not differentiated through.
pub fn train_head_sft(
    teacher: &mut Teacher,
    inputs: &[TokenReps],
    labels: &[f64],
    cfg: &HeadTrainConfig,
) -> Result<HeadTrainReport, HarnessError> {
    if inputs.is_empty() {
        return Err(HarnessError::NoData);
    }
    if labels.len() != inputs.len() {
        return Err(HarnessError::InvalidGroup);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, trainable_count(teacher, cfg));
    let mut grad = teacher.clone();
    let mut scratch = teacher.clone();
    let mut data = HeadData::new(teacher, inputs, cfg)?;
    let mse = |teacher: &Teacher, data: &HeadData| -> Result<f64, HarnessError> {
        let s = data.scores(teacher, cfg.workers)?;
        finite(s.iter().zip(labels).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / s.len() as f64)
    };
    let m0 = mse(teacher, &data)?;
    let mut curve = vec![m0];
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut steps = 0;
    let mut last = m0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            zero_all(&mut grad);
            let mut preds = Vec::with_capacity(batch.len());
            let mut norms = Vec::with_capacity(batch.len());
            let mut per_example = Vec::with_capacity(batch.len());
            for &i in batch {
                zero_all(&mut scratch);
                let (y, n) = data.backward(teacher, i, 1.0, &mut scratch)?;
                preds.push(y);
                norms.push(n);
                per_example.push(scratch.clone());
            }
            let sft = SftBatch {
                y_pred: preds,
                y_true: batch.iter().map(|&i| labels[i]).collect(),
                sigma_exp: vec![1.0; batch.len()],
                input_grad_norms: norms,
                lambda: cfg.lambda,
            };
            let (loss, dy) = sft_loss(&sft)?;
            finite(loss)?;
            for (g, d) in per_example.iter().zip(&dy) {
                add_scaled(&mut grad, g, *d);
            }
            step_params(teacher, &grad, &mut opt, cfg)?;
            steps += 1;
        }
        if cfg.train_encoder {
            data = HeadData::new(teacher, inputs, cfg)?;
        }
        last = mse(teacher, &data)?;
        curve.push(last);
    }
    Ok(HeadTrainReport { curve, steps, initial_metric: m0, final_metric: last })
}

/// Ranking groups from the sampler as [`GroupSpec`]s, with uniform confidence.
pub fn group_specs(groups: &[crate::sampler::DpoGroup], confidence: f64) -> Vec<GroupSpec> {
    groups
        .iter()
        .map(|g| GroupSpec { members: g.members.clone(), true_order: g.true_order.clone(), confidence })
        .collect()
}

pub fn write_loss_csv<W: std::io::Write>(w: W, curve: &[f64]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "loss"])?;
    for (e, l) in curve.iter().enumerate() {
        out.write_record([e.to_string(), l.to_string()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
