//! Synthetic compound libraries with a planted structure-activity signal.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{parse_smiles, write_library, LibraryRecord};
use crate::fingerprint::{ecfp, Fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH};
use crate::model::write_protein_embedding;
use crate::par;
use crate::sampler::{ActivityRecord, AssayKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub size: usize,
    /// Label noise as a multiple of the planted score's standard deviation.
    pub noise: f64,
    pub active_fraction: f64,
    /// Number of fingerprint bits carrying planted weight.
    pub planted_bits: usize,
    pub fp_width: usize,
    pub d_protein: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            size: 1000,
            noise: 0.1,
            active_fraction: 0.01,
            planted_bits: 64,
            fp_width: DEFAULT_WIDTH,
            d_protein: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub records: Vec<LibraryRecord>,
    pub fingerprints: Vec<Fingerprint>,
    /// Weight per fingerprint bit; zero outside the planted set.
    pub planted_weights: Vec<f64>,
    /// Noise-free planted score, standardized over the library.
    pub planted_scores: Vec<f64>,
    /// Planted score plus noise.
    pub labels: Vec<f64>,
    /// Top `active_fraction` of the library by planted score.
    pub actives: Vec<bool>,
    pub protein: Vec<f64>,
    pub target_id: String,
}

const RINGS: [&str; 10] = [
    "c1cc{B}ccc1{T}",
    "c1cc{B}ncc1{T}",
    "c1cc{B}sc1{T}",
    "c1cc{B}oc1{T}",
    "C1CC{B}CCN1{T}",
    "C1CN{B}CCN1{T}",
    "C1CC{B}CC1{T}",
    "C1CC{B}CCO1",
    "c1cnc{B}nc1{T}",
    "C1CC{B}CCC1{T}",
];

const SUBSTITUENTS: [&str; 24] = [
    "C",
    "CC",
    "CCC",
    "C(C)C",
    "F",
    "Cl",
    "Br",
    "O",
    "OC",
    "N",
    "NC",
    "N(C)C",
    "C(=O)O",
    "C(=O)N",
    "C(=O)NC",
    "C#N",
    "S(=O)(=O)N",
    "C(F)(F)F",
    "OCC",
    "CCO",
    "CN",
    "C(=O)C",
    "NC(=O)C",
    "CCCC",
];

/// Prefixes bonded to the ring through their last atom.
const HEADS: [&str; 20] = [
    "C",
    "CC",
    "CCC",
    "CC(C)",
    "F",
    "Cl",
    "Br",
    "O",
    "CO",
    "N",
    "CN",
    "CN(C)",
    "OC(=O)",
    "NC(=O)",
    "CNC(=O)",
    "N#C",
    "NS(=O)(=O)",
    "FC(F)(F)",
    "CC(=O)N",
    "OCC",
];

const LINKERS: [&str; 6] = ["", "C", "CC", "N", "C(=O)N", "O"];

fn substituent(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth < 2 && rng.gen_bool(0.3) {
        let linker = LINKERS.choose(rng).copied().unwrap_or("");
        format!("{linker}{}", ring(rng, depth + 1))
    } else {
        SUBSTITUENTS.choose(rng).copied().unwrap_or("C").to_string()
    }
}

fn ring(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let template = RINGS.choose(rng).copied().unwrap_or(RINGS[0]);
    let digit = char::from(b'1' + depth as u8);
    let branch = if rng.gen_bool(0.7) { format!("({})", substituent(rng, depth)) } else { String::new() };
    let tail = if rng.gen_bool(0.6) { substituent(rng, depth) } else { String::new() };
    template.replace('1', &digit.to_string()).replace("{B}", &branch).replace("{T}", &tail)
}

/// One random single-fragment molecule from the template grammar.
pub fn random_smiles(rng: &mut ChaCha8Rng) -> String {
    let head = if rng.gen_bool(0.5) { HEADS.choose(rng).copied().unwrap_or("C").to_string() } else { String::new() };
    format!("{head}{}", ring(rng, 0))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; the open interval keeps the log finite.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn generate_world(config: WorldConfig) -> SyntheticWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let target_id = format!("SYN{}", config.seed);
    let protein: Vec<f64> = (0..config.d_protein).map(|_| standard_normal(&mut rng) * 0.5).collect();
    let records: Vec<LibraryRecord> =
        (0..config.size).map(|i| LibraryRecord { smiles: random_smiles(&mut rng), id: format!("W{:07}", i) }).collect();
    let fingerprints: Vec<Fingerprint> = par::map(&records, 0, |r| {
        let mol = parse_smiles(&r.smiles).expect("grammar emits valid SMILES");
        ecfp(&mol, DEFAULT_RADIUS, config.fp_width).expect("grammar emits valid SMILES")
    });

    let mut bits: Vec<usize> = (0..config.fp_width).collect();
    bits.shuffle(&mut rng);
    let mut planted_weights = vec![0.0; config.fp_width];
    for &b in bits.iter().take(config.planted_bits.min(config.fp_width)) {
        planted_weights[b] = standard_normal(&mut rng);
    }
    let raw: Vec<f64> = fingerprints.iter().map(|fp| fp.on_bits().map(|b| planted_weights[b]).sum()).collect();
    let n = raw.len().max(1) as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
    let planted_scores: Vec<f64> = raw.iter().map(|v| (v - mean) * scale).collect();
    for w in planted_weights.iter_mut() {
        *w *= scale;
    }
    let labels: Vec<f64> = planted_scores.iter().map(|s| s + config.noise * standard_normal(&mut rng)).collect();

    let n_active = ((config.active_fraction * config.size as f64).ceil() as usize).min(config.size);
    let mut order: Vec<usize> = (0..config.size).collect();
    order.sort_by(|&a, &b| planted_scores[b].total_cmp(&planted_scores[a]).then(a.cmp(&b)));
    let mut actives = vec![false; config.size];
    for &i in order.iter().take(n_active) {
        actives[i] = true;
    }
    SyntheticWorld {
        config,
        records,
        fingerprints,
        planted_weights,
        planted_scores,
        labels,
        actives,
        protein,
        target_id,
    }
}

impl SyntheticWorld {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dose-response records for the given compounds on a pXC50-like scale.
    pub fn activity_records(&self, indices: &[usize]) -> Vec<ActivityRecord> {
        indices
            .iter()
            .map(|&i| ActivityRecord {
                target_id: self.target_id.clone(),
                compound_id: self.records[i].id.clone(),
                pxc50: Some(6.0 + self.labels[i]),
                activity_value_nm: None,
                pchembl: None,
                assay_kind: AssayKind::DoseResponse,
            })
            .collect()
    }

    /// Writes `library.tsv`, `protein.emb` and `actives.tsv` (the planted
    /// actives) into `dir` and returns their paths in that order.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<[PathBuf; 3]> {
        fs::create_dir_all(dir)?;
        let paths = [dir.join("library.tsv"), dir.join("protein.emb"), dir.join("actives.tsv")];
        write_library(fs::File::create(&paths[0])?, &self.records)?;
        write_protein_embedding(fs::File::create(&paths[1])?, &self.protein)?;
        let actives: Vec<LibraryRecord> =
            self.records.iter().zip(&self.actives).filter(|(_, &a)| a).map(|(r, _)| r.clone()).collect();
        write_library(fs::File::create(&paths[2])?, &actives)?;
        Ok(paths)
    }

    /// Deterministic split into `n_train` training indices and the rest.
    pub fn split(&self, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = n_train.min(idx.len());
        let mut train = idx[..n].to_vec();
        let mut rest = idx[n..].to_vec();
        train.sort_unstable();
        rest.sort_unstable();
        (train, rest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_reproducible() {
        assert!(generate_world(WorldConfig { size: 0, ..WorldConfig::default() }).is_empty());
        let cfg = WorldConfig { size: 200, seed: 4, ..WorldConfig::default() };
        assert_eq!(generate_world(cfg), generate_world(cfg));
        assert_ne!(generate_world(cfg).records, generate_world(WorldConfig { seed: 5, ..cfg }).records);
    }

    #[test]
    fn smiles_are_valid_single_fragments() {
        let w = generate_world(WorldConfig { size: 2000, seed: 1, ..WorldConfig::default() });
        for r in &w.records {
            let m = parse_smiles(&r.smiles).unwrap();
            assert!(m.is_valid(), "{}", r.smiles);
            assert_eq!(m.fragment_count, 1, "{}", r.smiles);
        }
        assert_eq!(w.actives.iter().filter(|&&a| a).count(), 20);
        let distinct: std::collections::BTreeSet<&str> = w.records.iter().map(|r| r.smiles.as_str()).collect();
        assert!(distinct.len() > 1500, "only {} distinct", distinct.len());
    }
}
