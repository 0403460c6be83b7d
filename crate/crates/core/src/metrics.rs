//! Ranking metrics for screening evaluation.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no entries")]
    EmptyInput,
    #[error("no positive entries")]
    NoPositives,
    #[error("both classes must be present")]
    SingleClass,
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("{0} actives out of {1} tested")]
    InvalidCounts(usize, usize),
}

/// Indices sorted by score descending; ties keep input order.
pub fn ranking(entries: &[(f64, bool)]) -> Result<Vec<usize>, MetricsError> {
    if entries.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(i) = entries.iter().position(|e| !e.0.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[b].0.total_cmp(&entries[a].0));
    Ok(order)
}

/// `ceil(fraction * n)`, tolerant of representation error such as `0.07 * 100`.
pub fn top_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn enrichment_factor(entries: &[(f64, bool)], fraction: f64) -> Result<f64, MetricsError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MetricsError::InvalidFraction(fraction));
    }
    let order = ranking(entries)?;
    let positives = entries.iter().filter(|e| e.1).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let n_top = top_count(fraction, entries.len());
    let found = order[..n_top].iter().filter(|&&i| entries[i].1).count();
    Ok((found as f64 / positives as f64) / fraction)
}

fn class_counts(entries: &[(f64, bool)]) -> Result<(usize, usize), MetricsError> {
    if entries.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pos = entries.iter().filter(|e| e.1).count();
    let neg = entries.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// Average precision over distinct score thresholds.
pub fn aupr(entries: &[(f64, bool)]) -> Result<f64, MetricsError> {
    let (pos, _) = class_counts(entries)?;
    let order = ranking(entries)?;
    let (mut tp, mut seen, mut area) = (0usize, 0usize, 0.0);
    let mut k = 0;
    while k < order.len() {
        let score = entries[order[k]].0;
        let before = tp;
        while k < order.len() && entries[order[k]].0 == score {
            tp += usize::from(entries[order[k]].1);
            seen += 1;
            k += 1;
        }
        if tp > before {
            area += (tp - before) as f64 / pos as f64 * (tp as f64 / seen as f64);
        }
    }
    Ok(area)
}

/// Mann-Whitney statistic with mid-ranks for ties.
pub fn auroc(entries: &[(f64, bool)]) -> Result<f64, MetricsError> {
    let (pos, neg) = class_counts(entries)?;
    let mut order = ranking(entries)?;
    order.reverse();
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let score = entries[order[k]].0;
        let start = k;
        while k < order.len() && entries[order[k]].0 == score {
            k += 1;
        }
        let mid = (start + 1 + k) as f64 / 2.0;
        rank_sum += mid * order[start..k].iter().filter(|&&i| entries[i].1).count() as f64;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn hit_rate(actives: usize, tested: usize) -> Result<f64, MetricsError> {
    if tested == 0 {
        return Err(MetricsError::EmptyInput);
    }
    if actives > tested {
        return Err(MetricsError::InvalidCounts(actives, tested));
    }
    Ok(actives as f64 / tested as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub positives: usize,
    pub base_rate: f64,
    /// Keyed by the fraction as written, e.g. `"0.01"`.
    pub enrichment: BTreeMap<String, f64>,
    pub aupr: f64,
    pub auroc: f64,
}

pub fn evaluate(entries: &[(f64, bool)], fractions: &[f64]) -> Result<MetricsReport, MetricsError> {
    let (pos, _) = class_counts(entries)?;
    let mut enrichment = BTreeMap::new();
    for &f in fractions {
        enrichment.insert(f.to_string(), enrichment_factor(entries, f)?);
    }
    Ok(MetricsReport {
        n: entries.len(),
        positives: pos,
        base_rate: pos as f64 / entries.len() as f64,
        enrichment,
        aupr: aupr(entries)?,
        auroc: auroc(entries)?,
    })
}
