//! End-to-end enrichment experiment on a synthetic world.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{train_student, write_loss_csv, StudentExample, StudentTrainConfig};
use super::world::{generate_world, SyntheticWorld, WorldConfig};
use super::{HarnessError, Manifest};
use crate::chem::parse_smiles;
use crate::cluster::{build_prior_index, butina_cluster_with, centroid_budget, CentroidIndex, ClusterOptions};
use crate::fingerprint::Fingerprint;
use crate::metrics::{aupr, auroc, enrichment_factor};
use crate::model::tensor::{named_tensors, write_checkpoint};
use crate::model::{Student, StudentConfig, Teacher, TeacherConfig};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Score targets only.
    TeacherFree,
    /// Score targets plus the teacher's ligand embedding as hidden target.
    Distill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichmentConfig {
    pub world: WorldConfig,
    pub n_train: usize,
    pub split_seed: u64,
    pub cluster_threshold: f64,
    pub compounds_per_center: usize,
    pub mode: TargetMode,
    pub student: StudentConfig,
    pub teacher: TeacherConfig,
    pub train: StudentTrainConfig,
    pub workers: usize,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        let world = WorldConfig { size: 100_000, ..WorldConfig::default() };
        let student =
            StudentConfig { fp_width: world.fp_width, d_protein: world.d_protein, ..StudentConfig::default() };
        EnrichmentConfig {
            world,
            n_train: 5000,
            split_seed: 1,
            cluster_threshold: crate::cluster::DEFAULT_THRESHOLD,
            compounds_per_center: crate::cluster::DEFAULT_COMPOUNDS_PER_CENTER,
            mode: TargetMode::Distill,
            student,
            teacher: TeacherConfig::default().with_protein_dim(world.d_protein),
            train: StudentTrainConfig::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnrichmentResult {
    pub n_train: usize,
    pub n_heldout: usize,
    pub heldout_actives: usize,
    pub base_rate: f64,
    pub ef1: f64,
    pub aupr: f64,
    pub auroc: f64,
    pub curve: Vec<f64>,
    pub prior_centroids: Vec<String>,
    pub seconds: f64,
}

/// Prior index from clustering the training compounds; centroid embeddings
/// come from the teacher.
pub fn training_prior_index(
    world: &SyntheticWorld,
    train: &[usize],
    teacher: &Teacher,
    cfg: &EnrichmentConfig,
) -> Result<CentroidIndex, HarnessError> {
    let fps: BTreeMap<String, Fingerprint> =
        train.iter().map(|&i| (world.records[i].id.clone(), world.fingerprints[i].clone())).collect();
    let opts = ClusterOptions {
        threshold: cfg.cluster_threshold,
        sample_seed: cfg.world.seed,
        workers: cfg.workers,
        ..ClusterOptions::default()
    };
    let clusters = butina_cluster_with(&fps, &opts)?;
    let budget = centroid_budget(world.len(), cfg.compounds_per_center);
    let mut ranked: Vec<(usize, &str)> = clusters.iter().map(|c| (c.len(), c.centroid_id.as_str())).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let index_of: HashMap<&str, usize> = train.iter().map(|&i| (world.records[i].id.as_str(), i)).collect();
    let mut embeddings = HashMap::new();
    for (_, id) in ranked.iter().take(budget) {
        let mol = parse_smiles(&world.records[index_of[id]].smiles).map_err(|_| HarnessError::InvalidGroup)?;
        embeddings.insert(id.to_string(), teacher.embedding(&mol, &world.protein)?);
    }
    Ok(build_prior_index(&clusters, &fps, &embeddings, cfg.compounds_per_center, world.len())?)
}

pub struct EnrichmentRun {
    pub result: EnrichmentResult,
    pub student: Student,
    /// Held-out (id, score, active) in world order.
    pub heldout: Vec<(String, f64, bool)>,
}

pub fn run_enrichment(cfg: &EnrichmentConfig) -> Result<EnrichmentRun, HarnessError> {
    let start = Instant::now();
    let world = generate_world(cfg.world);
    let (train, heldout) = world.split(cfg.n_train, cfg.split_seed);
    if train.is_empty() || heldout.is_empty() {
        return Err(HarnessError::NoData);
    }
    let teacher = Teacher::new(cfg.teacher)?;
    let index = training_prior_index(&world, &train, &teacher, cfg)?;
    let prior_of = |fp: &Fingerprint| index.nearest_position(fp);

    let hidden: Vec<Option<Vec<f64>>> = match cfg.mode {
        TargetMode::TeacherFree => vec![None; train.len()],
        TargetMode::Distill => {
            let h = par::map(&train, cfg.workers, |&i| {
                let mol = parse_smiles(&world.records[i].smiles).map_err(|_| HarnessError::InvalidGroup)?;
                Ok::<_, HarnessError>(Some(teacher.embedding(&mol, &world.protein)?))
            });
            h.into_iter().collect::<Result<_, _>>()?
        }
    };
    let mut examples = Vec::with_capacity(train.len());
    for (&i, h) in train.iter().zip(hidden) {
        let fp = world.fingerprints[i].clone();
        let prior = index.centroids[prior_of(&fp)?].embedding.clone();
        examples.push(StudentExample { fp, prior, target_hidden: h, target_score: world.labels[i] });
    }

    let mut student = Student::new(cfg.student, &mut ChaCha8Rng::seed_from_u64(cfg.world.seed ^ 0x5eed));
    let report = train_student(&mut student, &world.protein, &examples, &cfg.train)?;

    let protein_tok = student.protein_token(&world.protein);
    let prior_toks: Vec<Vec<f64>> = index.centroids.iter().map(|c| student.prior_token(&c.embedding)).collect();
    let scores = par::map(&heldout, cfg.workers, |&i| {
        let fp = &world.fingerprints[i];
        let k = prior_of(fp)?;
        Ok::<_, HarnessError>(student.score_cached(fp, &protein_tok, &prior_toks[k])?)
    });
    let mut entries = Vec::with_capacity(heldout.len());
    let mut rows = Vec::with_capacity(heldout.len());
    for (&i, s) in heldout.iter().zip(scores) {
        let s = s?;
        entries.push((s, world.actives[i]));
        rows.push((world.records[i].id.clone(), s, world.actives[i]));
    }
    let positives = entries.iter().filter(|e| e.1).count();
    let result = EnrichmentResult {
        n_train: train.len(),
        n_heldout: heldout.len(),
        heldout_actives: positives,
        base_rate: positives as f64 / heldout.len() as f64,
        ef1: enrichment_factor(&entries, 0.01)?,
        aupr: aupr(&entries)?,
        auroc: auroc(&entries)?,
        curve: report.curve,
        prior_centroids: index.centroids.iter().map(|c| c.id.clone()).collect(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(EnrichmentRun { result, student, heldout: rows })
}

/// Runs the experiment and writes `result.json`, `loss_curve.csv`,
/// `heldout_scores.csv`, `student.auro` and `manifest.json` into `dir`.
/// Everything except the wall-clock field in `result.json` is reproducible.
pub fn run_enrichment_to(cfg: &EnrichmentConfig, dir: &Path) -> Result<EnrichmentResult, HarnessError> {
    let run = run_enrichment(cfg)?;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))
    };
    let mut curve = Vec::new();
    write_loss_csv(&mut curve, &run.result.curve)?;
    write("loss_curve.csv", curve)?;
    let mut scores = csv::Writer::from_writer(Vec::new());
    scores.write_record(["id", "score", "active"])?;
    for (id, s, a) in &run.heldout {
        scores.write_record([id.clone(), s.to_string(), u8::from(*a).to_string()])?;
    }
    write("heldout_scores.csv", scores.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)?;
    let mut ckpt = Vec::new();
    write_checkpoint(&mut ckpt, &named_tensors(&run.student))?;
    write("student.auro", ckpt)?;
    write("result.json", (serde_json::to_string_pretty(&run.result)? + "\n").into_bytes())?;

    let mut manifest = Manifest::new("enrichment", cfg.world.seed, cfg)?;
    for name in ["loss_curve.csv", "heldout_scores.csv", "student.auro"] {
        manifest.add_output(dir, name)?;
    }
    manifest.write(dir)?;
    Ok(run.result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnrichmentConfig {
        let mut cfg = EnrichmentConfig::default();
        cfg.world.size = 3000;
        cfg.world.active_fraction = 0.05;
        cfg.n_train = 1000;
        cfg.train.epochs = 3;
        cfg
    }

    #[test]
    fn small_run_is_reproducible() {
        let a = run_enrichment(&small()).unwrap();
        let b = run_enrichment(&small()).unwrap();
        assert_eq!(a.heldout, b.heldout);
        assert_eq!(a.result.curve, b.result.curve);
        assert_eq!(a.result.n_heldout, 2000);
        assert_eq!(a.result.prior_centroids.len(), 1);
    }

    #[test]
    fn artifacts_and_manifest() {
        let mut cfg = small();
        cfg.mode = TargetMode::TeacherFree;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_enrichment_to(&cfg, d1.path()).unwrap();
        run_enrichment_to(&cfg, d2.path()).unwrap();
        for name in ["loss_curve.csv", "heldout_scores.csv", "student.auro", "manifest.json"] {
            assert_eq!(fs::read(d1.path().join(name)).unwrap(), fs::read(d2.path().join(name)).unwrap(), "{name}");
        }
    }
}
