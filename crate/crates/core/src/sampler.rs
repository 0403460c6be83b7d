//! Activity data handling: curation, single-target batching, ranking groups,
//! activity labels, and the self-distillation acceptance rule.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::fnv1a;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("one class has no examples")]
    EmptyClass,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("ranking groups need at least two members")]
    GroupTooSmall,
    #[error("record {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const MIN_RECORDS_PER_TARGET: usize = 10;
pub const BIN_WIDTH: f64 = 0.15;
pub const MAX_PER_BIN: usize = 5;
pub const DEFAULT_DPO_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssayKind {
    DoseResponse,
    Screening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub target_id: String,
    pub compound_id: String,
    pub pxc50: Option<f64>,
    pub activity_value_nm: Option<f64>,
    pub pchembl: Option<f64>,
    pub assay_kind: AssayKind,
}

fn nm_to_p(nm: f64) -> f64 {
    9.0 - nm.log10()
}

impl ActivityRecord {
    pub fn dose_response(target: &str, compound: &str, pxc50: f64) -> ActivityRecord {
        ActivityRecord {
            target_id: target.to_string(),
            compound_id: compound.to_string(),
            pxc50: Some(pxc50),
            activity_value_nm: None,
            pchembl: None,
            assay_kind: AssayKind::DoseResponse,
        }
    }

    /// Log-scale label: pXC50, else pChEMBL, else derived from the nM value.
    pub fn label(&self) -> f64 {
        self.pxc50.or(self.pchembl).or(self.activity_value_nm.map(nm_to_p)).unwrap_or(f64::NAN)
    }

    /// Activity in nM, derived from the log-scale values when not reported.
    pub fn activity_nm(&self) -> Option<f64> {
        self.activity_value_nm.or_else(|| self.pxc50.or(self.pchembl).map(|p| 10f64.powf(9.0 - p)))
    }

    fn check(&self) -> Result<(), String> {
        let present: Vec<f64> = [self.pxc50, self.activity_value_nm, self.pchembl].into_iter().flatten().collect();
        if present.is_empty() {
            return Err("needs at least one of pxc50, activity_value_nm, pchembl".into());
        }
        if present.iter().any(|v| !v.is_finite()) {
            return Err("activity values must be finite".into());
        }
        if self.activity_value_nm.is_some_and(|v| v <= 0.0) {
            return Err("activity_value_nm must be positive".into());
        }
        Ok(())
    }
}

pub fn read_activity_csv<R: Read>(r: R) -> Result<Vec<ActivityRecord>, SamplerError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<ActivityRecord>().enumerate() {
        let rec = rec?;
        rec.check().map_err(|reason| SamplerError::InvalidRecord { line: i + 2, reason })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_activity_csv<W: Write>(w: W, records: &[ActivityRecord]) -> Result<(), SamplerError> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn target_rng(seed: u64, target: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(target.as_bytes()))
}

fn by_target(records: &[ActivityRecord]) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        map.entry(&r.target_id).or_default().push(i);
    }
    map
}

/// Bin index of `label` for bins of [`BIN_WIDTH`] anchored at `min`.
pub fn label_bin(label: f64, min: f64) -> usize {
    // The small offset keeps decimal edges such as 5.30 - 5.00 on the upper side.
    ((label - min) / BIN_WIDTH + 1e-9).floor() as usize
}

/// Drops sparse targets and thins crowded label bins. Survivors keep their input order.
pub fn curate(records: &[ActivityRecord], seed: u64) -> Vec<ActivityRecord> {
    let mut keep = vec![false; records.len()];
    for (target, idx) in by_target(records) {
        if idx.len() < MIN_RECORDS_PER_TARGET {
            continue;
        }
        let min = idx.iter().map(|&i| records[i].label()).fold(f64::INFINITY, f64::min);
        let mut bins: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &idx {
            bins.entry(label_bin(records[i].label(), min)).or_default().push(i);
        }
        let mut rng = target_rng(seed, target);
        for members in bins.values() {
            for &i in members.choose_multiple(&mut rng, MAX_PER_BIN) {
                keep[i] = true;
            }
        }
    }
    records.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r.clone()).collect()
}

/// Single-target batches of record indices.
pub fn group_batches(
    records: &[ActivityRecord],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, SamplerError> {
    if batch_size == 0 {
        return Err(SamplerError::ZeroBatchSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<usize>> = by_target(records).into_values().collect();
    groups.shuffle(&mut rng);
    let mut batches = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        batches.extend(g.chunks(batch_size).map(<[usize]>::to_vec));
    }
    Ok(batches)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpoGroup {
    pub target_id: String,
    /// Record indices, ascending by label.
    pub members: Vec<usize>,
    /// Positions into `members`, best first.
    pub true_order: Vec<usize>,
}

/// Non-overlapping groups of `k` records per target whose labels span at most `window`.
pub fn build_dpo_groups(records: &[ActivityRecord], k: usize, window: f64) -> Result<Vec<DpoGroup>, SamplerError> {
    if k < 2 {
        return Err(SamplerError::GroupTooSmall);
    }
    let mut out = Vec::new();
    for (target, mut idx) in by_target(records) {
        idx.sort_by(|&a, &b| {
            records[a]
                .label()
                .total_cmp(&records[b].label())
                .then_with(|| records[a].compound_id.cmp(&records[b].compound_id))
        });
        let mut i = 0;
        while i + k <= idx.len() {
            if records[idx[i + k - 1]].label() - records[idx[i]].label() <= window {
                let members = idx[i..i + k].to_vec();
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&a, &b| {
                    let (ra, rb) = (&records[members[a]], &records[members[b]]);
                    rb.label().total_cmp(&ra.label()).then_with(|| ra.compound_id.cmp(&rb.compound_id))
                });
                out.push(DpoGroup { target_id: target.to_string(), members, true_order: order });
                i += k;
            } else {
                i += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Active,
    Inactive,
    Unlabeled,
}

pub const INACTIVE_NM: f64 = 20_000.0;
pub const INACTIVE_PCHEMBL: f64 = 4.5;
pub const ACTIVE_NM: f64 = 10_000.0;

pub fn label_activity(rec: &ActivityRecord) -> ActivityLabel {
    if rec.activity_value_nm.is_some_and(|v| v > INACTIVE_NM) || rec.pchembl.is_some_and(|p| p < INACTIVE_PCHEMBL) {
        return ActivityLabel::Inactive;
    }
    if rec.assay_kind == AssayKind::DoseResponse && rec.activity_nm().is_some_and(|v| v <= ACTIVE_NM) {
        return ActivityLabel::Active;
    }
    ActivityLabel::Unlabeled
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillCandidate {
    pub iptm: f64,
    pub ligand_ptm: f64,
    pub protein_plddt: f64,
    pub max_seq_identity_to_holdout: f64,
    pub ic50_nm: f64,
}

pub const MIN_IPTM: f64 = 0.8;
pub const MIN_LIGAND_PTM: f64 = 0.5;
pub const MIN_PLDDT: f64 = 70.0;
pub const MAX_HOLDOUT_IDENTITY: f64 = 0.6;
pub const MIN_DISTILL_IC50_NM: f64 = 100.0;

/// Non-finite inputs are rejected.
pub fn distill_accept(c: &DistillCandidate) -> bool {
    c.ic50_nm >= MIN_DISTILL_IC50_NM
        && c.iptm > MIN_IPTM
        && c.ligand_ptm > MIN_LIGAND_PTM
        && c.protein_plddt > MIN_PLDDT
        && c.max_seq_identity_to_holdout <= MAX_HOLDOUT_IDENTITY
        && c.max_seq_identity_to_holdout >= 0.0
}

/// Indices of a class-balanced training set: every original index once, then
/// seeded draws with replacement from the minority class.
pub fn upsample_minority(labels: &[bool], seed: u64) -> Result<Vec<usize>, SamplerError> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(SamplerError::EmptyClass);
    }
    let (minority, deficit) =
        if pos.len() < neg.len() { (&pos, neg.len() - pos.len()) } else { (&neg, pos.len() - neg.len()) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    out.extend((0..deficit).map(|_| minority[rng.gen_range(0..minority.len())]));
    Ok(out)
}
