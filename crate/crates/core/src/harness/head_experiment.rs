//! Affinity-head fine-tuning on a synthetic world, by preference ranking or regression.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::train::{group_specs, train_head_dpo, train_head_sft, write_loss_csv, HeadTrainConfig};
use super::world::{generate_world, WorldConfig};
use super::{HarnessError, Manifest};
use crate::chem::parse_smiles;
use crate::model::tensor::{named_tensors, write_checkpoint};
use crate::model::{Teacher, TeacherConfig, TokenReps};
use crate::par;
use crate::sampler::build_dpo_groups;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadObjective {
    /// Plackett-Luce preference loss over label-ordered groups.
    Ranking,
    /// Variance-scaled regression on the labels.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadExperimentConfig {
    pub world: WorldConfig,
    /// First `n_compounds` of the world are used.
    pub n_compounds: usize,
    pub group_size: usize,
    /// Widest label spread allowed inside a ranking group.
    pub window: f64,
    pub confidence: f64,
    pub objective: HeadObjective,
    pub teacher: TeacherConfig,
    pub train: HeadTrainConfig,
    pub workers: usize,
}

impl Default for HeadExperimentConfig {
    fn default() -> Self {
        HeadExperimentConfig {
            world: WorldConfig { size: 200, noise: 0.0, ..WorldConfig::default() },
            n_compounds: 60,
            group_size: 2,
            window: 10.0,
            confidence: 1.0,
            objective: HeadObjective::Ranking,
            teacher: TeacherConfig::default(),
            train: HeadTrainConfig::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadExperimentResult {
    pub objective: HeadObjective,
    pub n_compounds: usize,
    /// Ranking groups; zero for regression.
    pub groups: usize,
    /// Mean probability of the true order (ranking) or MSE (regression).
    pub initial_metric: f64,
    pub final_metric: f64,
    pub curve: Vec<f64>,
    pub seconds: f64,
}

pub fn run_head_experiment(cfg: &HeadExperimentConfig) -> Result<(HeadExperimentResult, Teacher), HarnessError> {
    let start = Instant::now();
    let world = generate_world(cfg.world);
    let idx: Vec<usize> = (0..cfg.n_compounds.min(world.len())).collect();
    if idx.is_empty() {
        return Err(HarnessError::NoData);
    }
    let mut teacher = Teacher::new(cfg.teacher.with_protein_dim(world.protein.len()))?;
    let inputs = par::map(&idx, cfg.workers, |&i| {
        let mol = parse_smiles(&world.records[i].smiles).map_err(|_| HarnessError::InvalidGroup)?;
        Ok::<TokenReps, HarnessError>(teacher.featurizer.featurize(&mol, &world.protein)?)
    });
    let inputs: Vec<TokenReps> = inputs.into_iter().collect::<Result<_, _>>()?;
    let mut train = cfg.train;
    train.workers = cfg.workers;
    let (report, groups) = match cfg.objective {
        HeadObjective::Ranking => {
            let records = world.activity_records(&idx);
            let groups = group_specs(&build_dpo_groups(&records, cfg.group_size, cfg.window)?, cfg.confidence);
            (train_head_dpo(&mut teacher, &inputs, &groups, &train)?, groups.len())
        }
        HeadObjective::Regression => {
            let labels: Vec<f64> = idx.iter().map(|&i| world.labels[i]).collect();
            (train_head_sft(&mut teacher, &inputs, &labels, &train)?, 0)
        }
    };
    let result = HeadExperimentResult {
        objective: cfg.objective,
        n_compounds: idx.len(),
        groups,
        initial_metric: report.initial_metric,
        final_metric: report.final_metric,
        curve: report.curve,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, teacher))
}

/// Runs the experiment and writes `result.json`, `loss_curve.csv`,
/// `teacher.auro` and `manifest.json` into `dir`.
pub fn run_head_experiment_to(cfg: &HeadExperimentConfig, dir: &Path) -> Result<HeadExperimentResult, HarnessError> {
    let (result, teacher) = run_head_experiment(cfg)?;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))
    };
    let mut curve = Vec::new();
    write_loss_csv(&mut curve, &result.curve)?;
    write("loss_curve.csv", curve)?;
    let mut ckpt = Vec::new();
    write_checkpoint(&mut ckpt, &named_tensors(&teacher))?;
    write("teacher.auro", ckpt)?;
    write("result.json", (serde_json::to_string_pretty(&result)? + "\n").into_bytes())?;
    let mut manifest = Manifest::new("train-head", cfg.world.seed, cfg)?;
    for name in ["loss_curve.csv", "teacher.auro"] {
        manifest.add_output(dir, name)?;
    }
    manifest.write(dir)?;
    Ok(result)
}
