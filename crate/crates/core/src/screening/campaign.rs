use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{
    score_histogram, CompoundVerdict, NearestActive, ReportMetadata, ScreenReport, ShortlistEntry, Timings,
};
use super::{novelty_filter, property_filter, CampaignConfig, Reason, Rule, ScreeningError};
use crate::chem::{parse_smiles, read_library, Descriptors, LibraryRecord, Molecule};
use crate::cluster::{
    build_prior_index, butina_cluster_with, centroid_budget, read_prior_index, CentroidIndex, Cluster, ClusterOptions,
};
use crate::fingerprint::{ecfp, Fingerprint, DEFAULT_RADIUS};
use crate::model::tensor::{load_named, read_checkpoint};
use crate::model::{read_protein_embedding, ModelError, Student, Teacher};
use crate::par;

/// A parsed library entry with its fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct Compound {
    pub id: String,
    pub smiles: String,
    pub mol: Molecule,
    pub fp: Fingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Sorts by score descending then id ascending, numbers the ranks and keeps the top `keep`.
pub fn rank_scores(mut scored: Vec<(String, f64)>, keep: usize) -> Vec<Ranked> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(keep);
    scored.into_iter().enumerate().map(|(i, (id, score))| Ranked { id, score, rank: i + 1 }).collect()
}

/// Parses and fingerprints a library. Records that fail to parse or violate
/// valence rules are returned as skipped.
pub fn prepare_compounds(records: &[LibraryRecord], fp_width: usize, workers: usize) -> (Vec<Compound>, Vec<Skipped>) {
    let results = par::map(records, workers, |r| {
        let mol = parse_smiles(&r.smiles).map_err(|e| e.to_string())?;
        mol.validate_valence().map_err(|e| e.to_string())?;
        let fp = ecfp(&mol, DEFAULT_RADIUS, fp_width).map_err(|e| e.to_string())?;
        Ok::<_, String>(Compound { id: r.id.clone(), smiles: r.smiles.clone(), mol, fp })
    });
    let mut compounds = Vec::with_capacity(records.len());
    let mut skipped = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(c) => compounds.push(c),
            Err(reason) => skipped.push(Skipped { id: r.id.clone(), stage: "parse".into(), reason }),
        }
    }
    (compounds, skipped)
}

/// Student scores for every compound, or the per-compound error.
pub fn stage1_scores(
    compounds: &[Compound],
    student: &Student,
    protein: &[f64],
    index: &CentroidIndex,
    workers: usize,
) -> Result<Vec<Result<f64, String>>, ScreeningError> {
    if protein.len() != student.config.d_protein {
        return Err(ModelError::ShapeMismatch(format!(
            "protein embedding has {} values, student expects {}",
            protein.len(),
            student.config.d_protein
        ))
        .into());
    }
    if index.dim != student.config.d_prior {
        return Err(ModelError::ShapeMismatch(format!(
            "prior index dimension {} vs student prior width {}",
            index.dim, student.config.d_prior
        ))
        .into());
    }
    let protein_token = student.protein_token(protein);
    let prior_tokens: Vec<Vec<f64>> = index.centroids.iter().map(|c| student.prior_token(&c.embedding)).collect();
    Ok(par::map(compounds, workers, |c| {
        let k = index.nearest_position(&c.fp).map_err(|e| e.to_string())?;
        student.score_cached(&c.fp, &protein_token, &prior_tokens[k]).map_err(|e| e.to_string())
    }))
}

/// Student triage: every compound scored, top `keep` returned.
pub fn stage1_triage(
    compounds: &[Compound],
    student: &Student,
    protein: &[f64],
    index: &CentroidIndex,
    keep: usize,
    workers: usize,
) -> Result<Vec<Ranked>, ScreeningError> {
    let scores = stage1_scores(compounds, student, protein, index, workers)?;
    let scored = compounds.iter().zip(scores).filter_map(|(c, s)| s.ok().map(|s| (c.id.clone(), s))).collect();
    Ok(rank_scores(scored, keep))
}

/// Teacher rescoring of the given candidates; failures come back as skipped.
pub fn stage2_rescore(
    candidates: &[&Compound],
    teacher: &Teacher,
    protein: &[f64],
    keep: usize,
    workers: usize,
) -> (Vec<Ranked>, Vec<Skipped>) {
    let scores = par::map(candidates, workers, |c| teacher.score(&c.mol, protein));
    let mut scored = Vec::with_capacity(candidates.len());
    let mut skipped = Vec::new();
    for (c, s) in candidates.iter().zip(scores) {
        match s {
            Ok(v) => scored.push((c.id.clone(), v)),
            Err(e) => skipped.push(Skipped { id: c.id.clone(), stage: "stage2".into(), reason: e.to_string() }),
        }
    }
    (rank_scores(scored, keep), skipped)
}

/// Butina clusters of the library under the configured threshold and sampling cap.
pub fn cluster_library(compounds: &[Compound], config: &CampaignConfig) -> Result<Vec<Cluster>, ScreeningError> {
    let fps: BTreeMap<String, Fingerprint> = compounds.iter().map(|c| (c.id.clone(), c.fp.clone())).collect();
    let opts = ClusterOptions {
        threshold: config.clustering.threshold,
        max_library: config.clustering.max_library,
        sample_seed: config.seed,
        workers: config.worker_count,
    };
    Ok(butina_cluster_with(&fps, &opts)?)
}

/// Embeds the centroids of the largest clusters with the teacher.
pub fn index_from_clusters(
    compounds: &[Compound],
    clusters: &[Cluster],
    teacher: &Teacher,
    protein: &[f64],
    config: &CampaignConfig,
) -> Result<CentroidIndex, ScreeningError> {
    let fps: BTreeMap<String, Fingerprint> = compounds.iter().map(|c| (c.id.clone(), c.fp.clone())).collect();
    let budget = centroid_budget(compounds.len(), config.clustering.compounds_per_center);
    let mut ranked: Vec<(usize, &str)> = clusters.iter().map(|c| (c.len(), c.centroid_id.as_str())).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let by_id: HashMap<&str, &Compound> = compounds.iter().map(|c| (c.id.as_str(), c)).collect();
    let chosen: Vec<&Compound> = ranked.iter().take(budget).map(|(_, id)| by_id[id]).collect();
    let embedded = par::map(&chosen, config.worker_count, |c| teacher.embedding(&c.mol, protein));
    let mut embeddings = HashMap::new();
    for (c, e) in chosen.iter().zip(embedded) {
        embeddings.insert(c.id.clone(), e?);
    }
    Ok(build_prior_index(clusters, &fps, &embeddings, config.clustering.compounds_per_center, compounds.len())?)
}

/// Clusters the library and embeds the centroids of the largest clusters with the teacher.
pub fn build_campaign_index(
    compounds: &[Compound],
    teacher: &Teacher,
    protein: &[f64],
    config: &CampaignConfig,
) -> Result<CentroidIndex, ScreeningError> {
    let clusters = cluster_library(compounds, config)?;
    index_from_clusters(compounds, &clusters, teacher, protein, config)
}

fn open(path: &Path) -> Result<BufReader<File>, ScreeningError> {
    File::open(path).map(BufReader::new).map_err(|e| ScreeningError::io(path, e))
}

fn load_library(path: &Path) -> Result<Vec<LibraryRecord>, ScreeningError> {
    read_library(open(path)?).map_err(|e| ScreeningError::input(path, e))
}

fn load_allowlist(path: &Path) -> Result<BTreeSet<String>, ScreeningError> {
    let mut ids = BTreeSet::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| ScreeningError::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            ids.insert(t.to_string());
        }
    }
    Ok(ids)
}

/// Student and teacher as configured, with the protein width taken from the
/// embedding and weights loaded from checkpoints when given.
pub fn load_campaign_models(config: &CampaignConfig, protein_dim: usize) -> Result<(Student, Teacher), ScreeningError> {
    let mut scfg = config.student;
    scfg.d_protein = protein_dim;
    let mut student = Student::new(scfg, &mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut teacher = Teacher::new(config.teacher.with_protein_dim(protein_dim))?;
    if let Some(p) = &config.student_checkpoint_path {
        load_named(&mut student, &read_checkpoint(open(p)?)?)?;
    }
    if let Some(p) = &config.teacher_checkpoint_path {
        load_named(&mut teacher, &read_checkpoint(open(p)?)?)?;
    }
    Ok((student, teacher))
}

/// Everything a campaign reads from disk.
#[derive(Debug, Clone)]
pub struct CampaignInputs {
    pub library: Vec<LibraryRecord>,
    pub protein: Vec<f64>,
    pub known_actives: Vec<LibraryRecord>,
    pub allowlist: Option<BTreeSet<String>>,
    pub prior_index: Option<CentroidIndex>,
    pub student: Student,
    pub teacher: Teacher,
}

impl CampaignInputs {
    pub fn load(config: &CampaignConfig) -> Result<CampaignInputs, ScreeningError> {
        config.validate()?;
        let protein = read_protein_embedding(open(&config.protein_embedding_path)?)
            .map_err(|e| ScreeningError::input(&config.protein_embedding_path, e))?;
        let (student, teacher) = load_campaign_models(config, protein.len())?;
        let library = load_library(&config.library_path)?;
        let known_actives = match &config.known_actives_path {
            Some(p) => load_library(p)?,
            None => Vec::new(),
        };
        let allowlist = config.allowlist_path.as_deref().map(load_allowlist).transpose()?;
        let prior_index = match &config.prior_index_path {
            Some(p) => Some(read_prior_index(open(p)?)?),
            None => None,
        };
        Ok(CampaignInputs { library, protein, known_actives, allowlist, prior_index, student, teacher })
    }
}

/// Loads the inputs named by `config` and runs the full cascade. Nothing is
/// written; see [`super::write_report`].
pub fn run_campaign(config: &CampaignConfig) -> Result<(ScreenReport, Timings), ScreeningError> {
    let inputs = CampaignInputs::load(config)?;
    run_with_inputs(config, &inputs)
}

pub fn run_with_inputs(
    config: &CampaignConfig,
    inputs: &CampaignInputs,
) -> Result<(ScreenReport, Timings), ScreeningError> {
    config.validate()?;
    let workers = config.worker_count;
    let total = Instant::now();
    let mut timings = Timings::default();
    let width = inputs.student.config.fp_width;

    let t = Instant::now();
    let (compounds, mut skipped) = prepare_compounds(&inputs.library, width, workers);
    timings.prepare_s = t.elapsed().as_secs_f64();
    if compounds.is_empty() {
        return Err(ScreeningError::EmptyLibrary);
    }

    let mut known: Vec<(String, Fingerprint)> = Vec::with_capacity(inputs.known_actives.len());
    for r in &inputs.known_actives {
        let fp = parse_smiles(&r.smiles)
            .map_err(|e| e.to_string())
            .and_then(|m| ecfp(&m, DEFAULT_RADIUS, width).map_err(|e| e.to_string()))
            .map_err(|e| ScreeningError::ConfigInvalid(format!("known active {}: {e}", r.id)))?;
        known.push((r.id.clone(), fp));
    }
    known.sort_by(|a, b| a.0.cmp(&b.0));

    let t = Instant::now();
    let index = match &inputs.prior_index {
        Some(ix) => ix.clone(),
        None => build_campaign_index(&compounds, &inputs.teacher, &inputs.protein, config)?,
    };
    timings.prior_index_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let scores = stage1_scores(&compounds, &inputs.student, &inputs.protein, &index, workers)?;
    let mut stage1_all = Vec::with_capacity(compounds.len());
    for (c, s) in compounds.iter().zip(scores) {
        match s {
            Ok(v) => stage1_all.push((c.id.clone(), v)),
            Err(reason) => skipped.push(Skipped { id: c.id.clone(), stage: "stage1".into(), reason }),
        }
    }
    let stage1_hist = score_histogram(&stage1_all.iter().map(|s| s.1).collect::<Vec<_>>());
    let stage1 = rank_scores(stage1_all, config.stage1_keep);
    timings.stage1_s = t.elapsed().as_secs_f64();

    let by_id: HashMap<&str, &Compound> = compounds.iter().map(|c| (c.id.as_str(), c)).collect();
    let t = Instant::now();
    let candidates: Vec<&Compound> = stage1.iter().map(|r| by_id[r.id.as_str()]).collect();
    let (stage2_full, stage2_skipped) =
        stage2_rescore(&candidates, &inputs.teacher, &inputs.protein, usize::MAX, workers);
    skipped.extend(stage2_skipped);
    let stage2_hist = score_histogram(&stage2_full.iter().map(|r| r.score).collect::<Vec<_>>());
    let mut stage2 = stage2_full;
    stage2.truncate(config.stage2_keep);
    timings.stage2_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let stage1_score: HashMap<&str, f64> = stage1.iter().map(|r| (r.id.as_str(), r.score)).collect();
    let mut verdicts = Vec::with_capacity(stage2.len());
    let mut shortlist = Vec::new();
    for r in &stage2 {
        let c = by_id[r.id.as_str()];
        let d = Descriptors::compute(&c.mol);
        let mut reasons = property_filter(&c.mol, &d, &config.filters);
        let novelty = novelty_filter(&c.fp, &known, config.filters.novelty_cutoff)?;
        if !novelty.keep {
            let sim = novelty.nearest.as_ref().map(|n| n.1);
            reasons.push(Reason { rule: Rule::Novelty, value: sim, limit: Some(config.filters.novelty_cutoff) });
        }
        if inputs.allowlist.as_ref().is_some_and(|a| !a.contains(&c.id)) {
            reasons.push(Reason { rule: Rule::NotPurchasable, value: None, limit: None });
        }
        let nearest_active = novelty.nearest.map(|(id, similarity)| NearestActive { id, similarity });
        let passed = reasons.is_empty();
        if passed && shortlist.len() < config.shortlist_size {
            shortlist.push(ShortlistEntry {
                rank: shortlist.len() + 1,
                id: c.id.clone(),
                smiles: c.smiles.clone(),
                stage1_score: stage1_score[c.id.as_str()],
                stage2_score: r.score,
                descriptors: d.clone(),
                nearest_active_similarity: nearest_active.as_ref().map(|n| n.similarity),
            });
        }
        verdicts.push(CompoundVerdict { id: c.id.clone(), passed, reasons, descriptors: d, nearest_active });
    }
    timings.filters_s = t.elapsed().as_secs_f64();
    timings.total_s = total.elapsed().as_secs_f64();
    timings.stage1_compounds_per_s =
        if timings.stage1_s > 0.0 { compounds.len() as f64 / timings.stage1_s } else { 0.0 };

    let metadata = ReportMetadata {
        target_id: config.target_id.clone(),
        config_hash: config.hash(),
        seed: config.seed,
        library_size: inputs.library.len(),
        scored: compounds.len(),
        skipped: skipped.len(),
        prior_centroids: index.centroids.iter().map(|c| c.id.clone()).collect(),
        stage1_keep: config.stage1_keep,
        stage2_keep: config.stage2_keep,
        shortlist_size: config.shortlist_size,
        filters: config.filters,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let report = ScreenReport {
        metadata,
        skipped,
        stage1,
        stage2,
        verdicts,
        shortlist,
        stage1_distribution: stage1_hist,
        stage2_distribution: stage2_hist,
    };
    Ok((report, timings))
}
