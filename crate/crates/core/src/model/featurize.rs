//! Builds token representations for a protein-ligand pair.
//!
//! This stands in for the frozen structure trunk: fixed, seeded random
//! projections map the protein embedding to a handful of protein tokens and
//! per-atom chemistry features to ligand tokens. Pair features encode bond
//! order and topological distance between ligand atoms, and elementwise
//! products of protein and atom projections across the interface.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TokenReps};
use crate::chem::{elements, BondOrder, Molecule};
use crate::fingerprint::atom_identifiers;

const ELEMENT_CLASSES: [u8; 10] = [
    elements::CARBON,
    elements::NITROGEN,
    elements::OXYGEN,
    elements::SULFUR,
    elements::FLUORINE,
    elements::CHLORINE,
    elements::BROMINE,
    elements::IODINE,
    elements::PHOSPHORUS,
    elements::BORON,
];
const ENV_BUCKETS: usize = 8;
/// Element one-hot (with an "other" slot), aromatic, ring, degree, H count,
/// charge, constant, radius-1 environment bucket.
pub const ATOM_FEATURES: usize = ELEMENT_CLASSES.len() + 1 + 6 + ENV_BUCKETS;
/// Bond order one-hot, inverse distance, distance 2, distance 3, both in ring.
pub const LIGAND_PAIR_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub d_protein: usize,
    pub d_single: usize,
    pub d_pair: usize,
    pub protein_tokens: usize,
    /// Ligands with more heavy atoms keep only the first this many.
    pub max_ligand_atoms: usize,
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { d_protein: 32, d_single: 16, d_pair: 8, protein_tokens: 4, max_ligand_atoms: 48, seed: 7 }
    }
}

/// Row-major `[rows, cols]` matrix.
#[derive(Debug, Clone, PartialEq)]
struct Projection {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
}

impl Projection {
    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Projection {
        let scale = (3.0 / cols as f64).sqrt();
        Projection { rows, cols, w: (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect() }
    }

    fn tanh_apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.w[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().tanh()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub config: FeaturizerConfig,
    protein_single: Vec<Projection>,
    protein_pair: Vec<Projection>,
    atom_single: Projection,
    atom_pair: Projection,
    ligand_pair: Projection,
}

impl Featurizer {
    pub fn new(config: FeaturizerConfig) -> Featurizer {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (dp, ds, dz) = (config.d_protein, config.d_single, config.d_pair);
        Featurizer {
            protein_single: (0..config.protein_tokens).map(|_| Projection::random(ds, dp, &mut rng)).collect(),
            protein_pair: (0..config.protein_tokens).map(|_| Projection::random(dz, dp, &mut rng)).collect(),
            atom_single: Projection::random(ds, ATOM_FEATURES, &mut rng),
            atom_pair: Projection::random(dz, ATOM_FEATURES, &mut rng),
            ligand_pair: Projection::random(dz, LIGAND_PAIR_FEATURES, &mut rng),
            config,
        }
    }

    pub fn featurize(&self, mol: &Molecule, protein: &[f64]) -> Result<TokenReps, ModelError> {
        let c = &self.config;
        if protein.len() != c.d_protein {
            return Err(ModelError::ShapeMismatch(format!(
                "protein embedding has {} values, featurizer expects {}",
                protein.len(),
                c.d_protein
            )));
        }
        let atoms: Vec<usize> =
            (0..mol.atom_count()).filter(|&i| !mol.atoms[i].is_hydrogen()).take(c.max_ligand_atoms).collect();
        if atoms.is_empty() {
            return Err(ModelError::ZeroLigandTokens);
        }
        let np = c.protein_tokens;
        let n = np + atoms.len();
        let mut is_ligand = vec![false; np];
        is_ligand.extend(std::iter::repeat_n(true, atoms.len()));
        let mut reps = TokenReps::zeros(is_ligand, c.d_single, c.d_pair);
        let (ds, dz) = (c.d_single, c.d_pair);

        let feats = atom_features(mol, &atoms);
        let prot_pair: Vec<Vec<f64>> = self.protein_pair.iter().map(|p| p.tanh_apply(protein)).collect();
        let atom_pair: Vec<Vec<f64>> = feats.iter().map(|f| self.atom_pair.tanh_apply(f)).collect();
        for (k, proj) in self.protein_single.iter().enumerate() {
            reps.s[k * ds..(k + 1) * ds].copy_from_slice(&proj.tanh_apply(protein));
        }
        for (a, f) in feats.iter().enumerate() {
            let t = np + a;
            reps.s[t * ds..(t + 1) * ds].copy_from_slice(&self.atom_single.tanh_apply(f));
        }
        let dist = distances(mol, &atoms);
        for i in 0..n {
            for j in 0..n {
                let cell: Vec<f64> = match (i < np, j < np) {
                    (true, true) => prot_pair[i].iter().zip(&prot_pair[j]).map(|(a, b)| a * b).collect(),
                    (true, false) => prot_pair[i].iter().zip(&atom_pair[j - np]).map(|(a, b)| a * b).collect(),
                    (false, true) => atom_pair[i - np].iter().zip(&prot_pair[j]).map(|(a, b)| a * b).collect(),
                    (false, false) => {
                        let (a, b) = (i - np, j - np);
                        self.ligand_pair.tanh_apply(&ligand_pair_features(mol, &atoms, &dist, a, b))
                    }
                };
                let o = (i * n + j) * dz;
                reps.z[o..o + dz].copy_from_slice(&cell);
            }
        }
        Ok(reps)
    }
}

fn atom_features(mol: &Molecule, atoms: &[usize]) -> Vec<Vec<f64>> {
    let env = atom_identifiers(mol, 1).pop().unwrap_or_default();
    atoms
        .iter()
        .map(|&i| {
            let a = &mol.atoms[i];
            let mut f = vec![0.0; ATOM_FEATURES];
            let slot = ELEMENT_CLASSES.iter().position(|&e| e == a.element).unwrap_or(ELEMENT_CLASSES.len());
            f[slot] = 1.0;
            let base = ELEMENT_CLASSES.len() + 1;
            f[base] = f64::from(u8::from(a.aromatic));
            f[base + 1] = f64::from(u8::from(a.ring_member));
            f[base + 2] = mol.heavy_degree(i) as f64 / 4.0;
            f[base + 3] = f64::from(mol.total_h(i)) / 4.0;
            f[base + 4] = f64::from(a.formal_charge);
            f[base + 5] = 1.0;
            if let Some(id) = env.get(i).copied().flatten() {
                f[base + 6 + (id % ENV_BUCKETS as u64) as usize] = 1.0;
            }
            f
        })
        .collect()
}

/// Topological distances between the selected atoms; `usize::MAX` when disconnected.
fn distances(mol: &Molecule, atoms: &[usize]) -> Vec<Vec<usize>> {
    let mut index = vec![usize::MAX; mol.atom_count()];
    for (k, &a) in atoms.iter().enumerate() {
        index[a] = k;
    }
    atoms
        .iter()
        .map(|&src| {
            let mut dist = vec![usize::MAX; mol.atom_count()];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(v) = queue.pop_front() {
                for &(w, _) in mol.neighbors(v) {
                    if dist[w] == usize::MAX && !mol.atoms[w].is_hydrogen() {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            atoms.iter().map(|&a| dist[a]).collect()
        })
        .collect()
}

fn ligand_pair_features(mol: &Molecule, atoms: &[usize], dist: &[Vec<usize>], a: usize, b: usize) -> Vec<f64> {
    let mut f = vec![0.0; LIGAND_PAIR_FEATURES];
    if let Some(bond) = mol.bond_between(atoms[a], atoms[b]) {
        let slot = match bond.order {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        };
        f[slot] = 1.0;
    }
    let d = dist[a][b];
    if d != usize::MAX {
        f[4] = 1.0 / (1.0 + d as f64);
        f[5] = f64::from(u8::from(d == 2));
        f[6] = f64::from(u8::from(d == 3));
    }
    f[7] = f64::from(u8::from(mol.atoms[atoms[a]].ring_member && mol.atoms[atoms[b]].ring_member));
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn shapes_and_masks() {
        let f = Featurizer::new(FeaturizerConfig::default());
        let m = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let reps = f.featurize(&m, &[0.1; 32]).unwrap();
        assert_eq!(reps.n_tokens, 4 + 13);
        assert_eq!(reps.num_protein(), 4);
        assert_eq!(reps.num_ligand(), 13);
        reps.validate().unwrap();
        assert!(reps.s.iter().chain(&reps.z).all(|x| x.is_finite() && x.abs() <= 1.0));
    }

    #[test]
    fn deterministic_and_spelling_independent_in_distribution() {
        let f = Featurizer::new(FeaturizerConfig::default());
        let a = f.featurize(&parse_smiles("OCC").unwrap(), &[0.3; 32]).unwrap();
        let b = f.featurize(&parse_smiles("OCC").unwrap(), &[0.3; 32]).unwrap();
        assert_eq!(a, b);
        assert!(f.featurize(&parse_smiles("C").unwrap(), &[0.0; 3]).is_err());
    }

    #[test]
    fn large_ligands_are_truncated() {
        let cfg = FeaturizerConfig { max_ligand_atoms: 5, ..FeaturizerConfig::default() };
        let f = Featurizer::new(cfg);
        let reps = f.featurize(&parse_smiles("CCCCCCCCCC").unwrap(), &[0.0; 32]).unwrap();
        assert_eq!(reps.num_ligand(), 5);
    }
}
