//! Two-stage screening: student triage, teacher rescoring, then the property
//! and novelty filter cascade.

mod campaign;
mod report;

pub use campaign::{
    build_campaign_index, cluster_library, index_from_clusters, load_campaign_models, prepare_compounds, rank_scores,
    run_campaign, run_with_inputs, stage1_scores, stage1_triage, stage2_rescore, CampaignInputs, Compound, Ranked,
    Skipped,
};
pub use report::{
    score_histogram, write_report, CompoundVerdict, HistogramBin, NearestActive, ReportMetadata, ScreenReport,
    ShortlistEntry, Timings,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chem::{Descriptors, Molecule};
use crate::cluster::{ClusterError, DEFAULT_COMPOUNDS_PER_CENTER, DEFAULT_MAX_CLUSTER_LIBRARY, DEFAULT_THRESHOLD};
use crate::fingerprint::{tanimoto, Fingerprint, FingerprintError};
use crate::model::{ModelError, StudentConfig, TeacherConfig};

#[derive(Debug, Error)]
pub enum ScreeningError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("library has no scoreable compounds")]
    EmptyLibrary,
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ScreeningError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> ScreeningError {
        ScreeningError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn input(path: &Path, message: impl ToString) -> ScreeningError {
        ScreeningError::Input { path: path.to_path_buf(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    pub mw_min: f64,
    pub clogp_max: f64,
    pub hbd_max: usize,
    pub hba_max: usize,
    pub esol_min: f64,
    pub novelty_cutoff: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds { mw_min: 200.0, clogp_max: 6.0, hbd_max: 4, hba_max: 10, esol_min: -9.0, novelty_cutoff: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub threshold: f64,
    pub compounds_per_center: usize,
    pub max_library: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            threshold: DEFAULT_THRESHOLD,
            compounds_per_center: DEFAULT_COMPOUNDS_PER_CENTER,
            max_library: DEFAULT_MAX_CLUSTER_LIBRARY,
        }
    }
}

fn default_stage1() -> usize {
    10_000
}
fn default_stage2() -> usize {
    500
}
fn default_shortlist() -> usize {
    50
}
fn default_workers() -> usize {
    1
}

/// Campaign settings as read from JSON. Relative paths are resolved against
/// the directory of the config file by [`CampaignConfig::from_path`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub target_id: String,
    pub protein_embedding_path: PathBuf,
    pub library_path: PathBuf,
    #[serde(default)]
    pub known_actives_path: Option<PathBuf>,
    /// Ids that can be purchased; compounds outside it are rejected.
    #[serde(default)]
    pub allowlist_path: Option<PathBuf>,
    /// Prebuilt centroid index; built from the library when absent.
    #[serde(default)]
    pub prior_index_path: Option<PathBuf>,
    #[serde(default)]
    pub student_checkpoint_path: Option<PathBuf>,
    #[serde(default)]
    pub teacher_checkpoint_path: Option<PathBuf>,
    #[serde(default = "default_stage1")]
    pub stage1_keep: usize,
    #[serde(default = "default_stage2")]
    pub stage2_keep: usize,
    #[serde(default = "default_shortlist")]
    pub shortlist_size: usize,
    #[serde(default)]
    pub filters: FilterThresholds,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub student: StudentConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl CampaignConfig {
    pub fn new(target_id: &str, protein_embedding_path: PathBuf, library_path: PathBuf) -> CampaignConfig {
        CampaignConfig {
            target_id: target_id.to_string(),
            protein_embedding_path,
            library_path,
            known_actives_path: None,
            allowlist_path: None,
            prior_index_path: None,
            student_checkpoint_path: None,
            teacher_checkpoint_path: None,
            stage1_keep: default_stage1(),
            stage2_keep: default_stage2(),
            shortlist_size: default_shortlist(),
            filters: FilterThresholds::default(),
            clustering: ClusteringConfig::default(),
            student: StudentConfig::default(),
            teacher: TeacherConfig::default(),
            seed: 0,
            worker_count: default_workers(),
            output_dir: None,
        }
    }

    pub fn from_path(path: &Path) -> Result<CampaignConfig, ScreeningError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScreeningError::io(path, e))?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text)
            .map_err(|e| ScreeningError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.protein_embedding_path);
        fix(&mut cfg.library_path);
        for p in [
            &mut cfg.known_actives_path,
            &mut cfg.allowlist_path,
            &mut cfg.prior_index_path,
            &mut cfg.student_checkpoint_path,
            &mut cfg.teacher_checkpoint_path,
            &mut cfg.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScreeningError> {
        let bad = |m: &str| Err(ScreeningError::ConfigInvalid(m.to_string()));
        if !(self.stage1_keep >= self.stage2_keep
            && self.stage2_keep >= self.shortlist_size
            && self.shortlist_size >= 1)
        {
            return bad("need stage1_keep >= stage2_keep >= shortlist_size >= 1");
        }
        let f = &self.filters;
        if ![f.mw_min, f.clogp_max, f.esol_min, f.novelty_cutoff].iter().all(|v| v.is_finite()) {
            return bad("filter thresholds must be finite");
        }
        let c = &self.clustering;
        if !(c.threshold > 0.0 && c.threshold <= 1.0) || c.compounds_per_center == 0 {
            return bad("clustering threshold must lie in (0, 1] and compounds_per_center be positive");
        }
        if self.target_id.trim().is_empty() {
            return bad("target_id is empty");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring settings that do not
    /// change results (worker count and output location).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).unwrap_or_default();
        if let Some(obj) = v.as_object_mut() {
            obj.remove("worker_count");
            obj.remove("output_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MolecularWeight,
    Clogp,
    HydrogenBondDonors,
    HydrogenBondAcceptors,
    Solubility,
    Valence,
    MultiFragment,
    Novelty,
    NotPurchasable,
}

/// A violated rule with the observed value and the limit it broke, where numeric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub rule: Rule,
    pub value: Option<f64>,
    pub limit: Option<f64>,
}

impl Reason {
    fn numeric(rule: Rule, value: f64, limit: f64) -> Reason {
        Reason { rule, value: Some(value), limit: Some(limit) }
    }

    fn flag(rule: Rule) -> Reason {
        Reason { rule, value: None, limit: None }
    }

    /// Re-evaluates the rule from the recorded numbers.
    pub fn holds(&self) -> bool {
        match (self.rule, self.value, self.limit) {
            (Rule::MolecularWeight | Rule::Solubility, Some(v), Some(l)) => v < l,
            (
                Rule::Clogp
                | Rule::HydrogenBondDonors
                | Rule::HydrogenBondAcceptors
                | Rule::MultiFragment
                | Rule::Novelty,
                Some(v),
                Some(l),
            ) => v > l,
            (Rule::Valence | Rule::NotPurchasable, _, _) => true,
            _ => false,
        }
    }
}

/// Property rules; an empty list means the compound passes.
pub fn property_filter(mol: &Molecule, descriptors: &Descriptors, t: &FilterThresholds) -> Vec<Reason> {
    let mut reasons = Vec::new();
    let d = descriptors;
    if d.molecular_weight < t.mw_min {
        reasons.push(Reason::numeric(Rule::MolecularWeight, d.molecular_weight, t.mw_min));
    }
    if d.clogp > t.clogp_max {
        reasons.push(Reason::numeric(Rule::Clogp, d.clogp, t.clogp_max));
    }
    if d.hbd > t.hbd_max {
        reasons.push(Reason::numeric(Rule::HydrogenBondDonors, d.hbd as f64, t.hbd_max as f64));
    }
    if d.hba > t.hba_max {
        reasons.push(Reason::numeric(Rule::HydrogenBondAcceptors, d.hba as f64, t.hba_max as f64));
    }
    if d.esol_logs < t.esol_min {
        reasons.push(Reason::numeric(Rule::Solubility, d.esol_logs, t.esol_min));
    }
    if !mol.is_valid() {
        reasons.push(Reason::flag(Rule::Valence));
    }
    if d.fragments > 1 {
        reasons.push(Reason::numeric(Rule::MultiFragment, d.fragments as f64, 1.0));
    }
    reasons
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyVerdict {
    pub keep: bool,
    /// Most similar known active (first in input order on ties).
    pub nearest: Option<(String, f64)>,
}

pub fn novelty_filter(
    fp: &Fingerprint,
    known: &[(String, Fingerprint)],
    cutoff: f64,
) -> Result<NoveltyVerdict, ScreeningError> {
    let mut nearest: Option<(String, f64)> = None;
    for (id, k) in known {
        let t = tanimoto(fp, k)?;
        if nearest.as_ref().is_none_or(|(_, best)| t > *best) {
            nearest = Some((id.clone(), t));
        }
    }
    let keep = nearest.as_ref().is_none_or(|(_, t)| *t <= cutoff);
    Ok(NoveltyVerdict { keep, nearest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::fingerprint::ecfp4;

    fn verdict(smiles: &str) -> Vec<Reason> {
        let m = parse_smiles(smiles).unwrap();
        property_filter(&m, &Descriptors::compute(&m), &FilterThresholds::default())
    }

    #[test]
    fn aspirin_fails_on_weight_only() {
        let r = verdict("CC(=O)Oc1ccccc1C(=O)O");
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rule, Rule::MolecularWeight);
        assert!((r[0].value.unwrap() - 180.16).abs() < 0.01);
        assert!(r[0].holds());
    }

    #[test]
    fn ibuprofen_passes_weight_and_bad_valence_is_flagged() {
        assert!(verdict("CC(C)Cc1ccc(cc1)C(C)C(=O)O").iter().all(|r| r.rule != Rule::MolecularWeight));
        assert!(verdict("O(C)(C)C").iter().any(|r| r.rule == Rule::Valence));
        assert!(verdict("CCCCCCCCCCCC.CCCCCCCCCCCCCC").iter().any(|r| r.rule == Rule::MultiFragment));
    }

    #[test]
    fn novelty_boundary_is_strict() {
        let fp = |bits: &[usize]| Fingerprint::from_bits(64, bits.iter().copied()).unwrap();
        let query = fp(&[0, 1, 2, 3, 4, 5]);
        assert!(novelty_filter(&query, &[], 0.6).unwrap().keep);
        let exact = vec![("a".to_string(), query.clone())];
        let v = novelty_filter(&query, &exact, 0.6).unwrap();
        assert!(!v.keep);
        assert_eq!(v.nearest, Some(("a".to_string(), 1.0)));
        // 3 shared of 5 in the union: exactly 0.6.
        let edge = vec![("b".to_string(), fp(&[0, 1, 2]))];
        let q = fp(&[0, 1, 2, 3, 4]);
        let v = novelty_filter(&q, &edge, 0.6).unwrap();
        assert_eq!(v.nearest.as_ref().unwrap().1, 0.6);
        assert!(v.keep);
        let other = ecfp4(&parse_smiles("CCO").unwrap()).unwrap();
        assert!(novelty_filter(&other, &edge, 0.6).is_err());
    }

    #[test]
    fn config_hash_ignores_workers() {
        let a = CampaignConfig::new("T", "p".into(), "l".into());
        let mut b = a.clone();
        b.worker_count = 8;
        assert_eq!(a.hash(), b.hash());
        b.seed = 3;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.stage2_keep = c.stage1_keep + 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: CampaignConfig = serde_json::from_str(
            r#"{"target_id":"T","protein_embedding_path":"p","library_path":"l","filters":{"mw_min":150}}"#,
        )
        .unwrap();
        assert_eq!(cfg.stage1_keep, 10_000);
        assert_eq!(cfg.filters.mw_min, 150.0);
        assert_eq!(cfg.filters.hbd_max, 4);
        assert!(serde_json::from_str::<CampaignConfig>(
            r#"{"target_id":"T","protein_embedding_path":"p","library_path":"l","stage1":3}"#
        )
        .is_err());
    }
}
