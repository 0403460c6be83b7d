use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::campaign::{Ranked, Skipped};
use super::{FilterThresholds, Reason, ScreeningError};
use crate::chem::Descriptors;

pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub target_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub library_size: usize,
    pub scored: usize,
    pub skipped: usize,
    pub prior_centroids: Vec<String>,
    pub stage1_keep: usize,
    pub stage2_keep: usize,
    pub shortlist_size: usize,
    pub filters: FilterThresholds,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestActive {
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundVerdict {
    pub id: String,
    pub passed: bool,
    pub reasons: Vec<Reason>,
    pub descriptors: Descriptors,
    pub nearest_active: Option<NearestActive>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub rank: usize,
    pub id: String,
    pub smiles: String,
    pub stage1_score: f64,
    pub stage2_score: f64,
    pub descriptors: Descriptors,
    pub nearest_active_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub metadata: ReportMetadata,
    pub skipped: Vec<Skipped>,
    pub stage1: Vec<Ranked>,
    pub stage2: Vec<Ranked>,
    /// One entry per stage-2 compound, in stage-2 order.
    pub verdicts: Vec<CompoundVerdict>,
    pub shortlist: Vec<ShortlistEntry>,
    pub stage1_distribution: Vec<HistogramBin>,
    pub stage2_distribution: Vec<HistogramBin>,
}

/// Wall-clock figures, kept apart from the report so reruns stay byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub prepare_s: f64,
    pub prior_index_s: f64,
    pub stage1_s: f64,
    pub stage2_s: f64,
    pub filters_s: f64,
    pub total_s: f64,
    pub stage1_compounds_per_s: f64,
}

/// Equal-width bins over the observed range.
pub fn score_histogram(scores: &[f64]) -> Vec<HistogramBin> {
    if scores.is_empty() {
        return Vec::new();
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![HistogramBin { lo, hi, count: scores.len() }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|k| HistogramBin {
            lo: lo + k as f64 * width,
            hi: if k + 1 == HISTOGRAM_BINS { hi } else { lo + (k + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &s in scores {
        let k = (((s - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[k].count += 1;
    }
    bins
}

impl ScreenReport {
    pub fn from_json(text: &str) -> Result<ScreenReport, ScreeningError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, ScreeningError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn shortlist_csv(&self) -> Result<Vec<u8>, ScreeningError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "rank",
            "id",
            "smiles",
            "stage1_score",
            "stage2_score",
            "molecular_weight",
            "clogp",
            "hbd",
            "hba",
            "rotatable_bonds",
            "rings",
            "esol_logs",
            "nearest_active_similarity",
        ])?;
        for e in &self.shortlist {
            let d = &e.descriptors;
            w.write_record([
                e.rank.to_string(),
                e.id.clone(),
                e.smiles.clone(),
                e.stage1_score.to_string(),
                e.stage2_score.to_string(),
                format!("{:.4}", d.molecular_weight),
                format!("{:.4}", d.clogp),
                d.hbd.to_string(),
                d.hba.to_string(),
                d.rotatable_bonds.to_string(),
                d.rings.to_string(),
                format!("{:.4}", d.esol_logs),
                e.nearest_active_similarity.map(|s| format!("{s:.4}")).unwrap_or_default(),
            ])?;
        }
        w.into_inner().map_err(|e| ScreeningError::Csv(e.into_error().into()))
    }

    pub fn distribution_csv(&self) -> Result<Vec<u8>, ScreeningError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stage", "bin", "lo", "hi", "count"])?;
        for (stage, bins) in [("stage1", &self.stage1_distribution), ("stage2", &self.stage2_distribution)] {
            for (k, b) in bins.iter().enumerate() {
                w.write_record([
                    stage.to_string(),
                    k.to_string(),
                    b.lo.to_string(),
                    b.hi.to_string(),
                    b.count.to_string(),
                ])?;
            }
        }
        w.into_inner().map_err(|e| ScreeningError::Csv(e.into_error().into()))
    }
}

/// Writes `report.json`, `shortlist.csv`, `score_distribution.csv` and
/// `timings.json` into `dir`, creating it if needed. All content is rendered
/// before the first file is written.
pub fn write_report(dir: &Path, report: &ScreenReport, timings: &Timings) -> Result<(), ScreeningError> {
    let files = [
        ("report.json", report.to_json()?.into_bytes()),
        ("shortlist.csv", report.shortlist_csv()?),
        ("score_distribution.csv", report.distribution_csv()?),
        ("timings.json", (serde_json::to_string_pretty(timings)? + "\n").into_bytes()),
    ];
    fs::create_dir_all(dir).map_err(|e| ScreeningError::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| ScreeningError::io(&path, e))?;
    }
    Ok(())
}
