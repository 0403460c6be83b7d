//! Small neural stack with hand-written gradients: the pair-aware encoder,
//! the ligand-weighted affinity head, the fast student scorer, and the toy
//! teacher that combines featurizer, encoder and head.

pub mod encoder;
pub mod featurize;
pub mod gradcheck;
pub mod head;
pub mod layers;
pub mod optim;
pub mod protein;
pub mod student;
pub mod teacher;
pub mod tensor;

pub use encoder::{EncoderConfig, PairEncoder};
pub use featurize::{Featurizer, FeaturizerConfig};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use head::{AffinityHead, FitnessOutput, HeadConfig};
pub use protein::{read_protein_embedding, write_protein_embedding};
pub use student::{Student, StudentConfig, StudentInput};
pub use teacher::{Teacher, TeacherConfig};
pub use tensor::{Params, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("affinity head needs at least one ligand token")]
    ZeroLigandTokens,
    #[error("affinity head needs at least one protein token")]
    ZeroProteinTokens,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("protein embedding file: {0}")]
    ProteinEmbedding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Single and pair representations of a protein-ligand complex.
///
/// `s` is `[n, d_single]` and `z` is `[n, n, d_pair]`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenReps {
    pub n_tokens: usize,
    pub d_single: usize,
    pub d_pair: usize,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub single_mask: Vec<bool>,
    pub pair_mask: Vec<bool>,
    pub is_ligand: Vec<bool>,
}

impl TokenReps {
    /// All tokens unmasked, all pairs unmasked.
    pub fn zeros(is_ligand: Vec<bool>, d_single: usize, d_pair: usize) -> TokenReps {
        let n = is_ligand.len();
        TokenReps {
            n_tokens: n,
            d_single,
            d_pair,
            s: vec![0.0; n * d_single],
            z: vec![0.0; n * n * d_pair],
            single_mask: vec![true; n],
            pair_mask: vec![true; n * n],
            is_ligand,
        }
    }

    pub fn num_protein(&self) -> usize {
        (0..self.n_tokens).filter(|&i| self.single_mask[i] && !self.is_ligand[i]).count()
    }

    pub fn num_ligand(&self) -> usize {
        (0..self.n_tokens).filter(|&i| self.single_mask[i] && self.is_ligand[i]).count()
    }

    pub fn s_row(&self, i: usize) -> &[f64] {
        &self.s[i * self.d_single..(i + 1) * self.d_single]
    }

    pub fn z_cell(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.n_tokens + j) * self.d_pair;
        &self.z[o..o + self.d_pair]
    }

    /// Pair (i, j) takes part in updates: pair mask and both token masks set.
    pub fn pair_active(&self, i: usize, j: usize) -> bool {
        self.pair_mask[i * self.n_tokens + j] && self.single_mask[i] && self.single_mask[j]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_tokens;
        let checks = [
            (self.s.len(), n * self.d_single, "s"),
            (self.z.len(), n * n * self.d_pair, "z"),
            (self.single_mask.len(), n, "single_mask"),
            (self.pair_mask.len(), n * n, "pair_mask"),
            (self.is_ligand.len(), n, "is_ligand"),
        ];
        for (got, want, what) in checks {
            if got != want {
                return Err(ModelError::ShapeMismatch(format!("{what}: {got} entries, expected {want}")));
            }
        }
        if self.d_single == 0 || self.d_pair == 0 {
            return Err(ModelError::ShapeMismatch("zero feature dimension".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if self.pair_mask[i * n + j] != self.pair_mask[j * n + i] {
                    return Err(ModelError::ShapeMismatch(format!("pair_mask not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Reorders tokens: new token `k` is old token `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> TokenReps {
        let n = self.n_tokens;
        let (ds, dp) = (self.d_single, self.d_pair);
        let mut out = self.clone();
        for (k, &old) in perm.iter().enumerate() {
            out.s[k * ds..(k + 1) * ds].copy_from_slice(self.s_row(old));
            out.single_mask[k] = self.single_mask[old];
            out.is_ligand[k] = self.is_ligand[old];
            for (l, &old_l) in perm.iter().enumerate() {
                let o = (k * n + l) * dp;
                out.z[o..o + dp].copy_from_slice(self.z_cell(old, old_l));
                out.pair_mask[k * n + l] = self.pair_mask[old * n + old_l];
            }
        }
        out
    }
}
