//! Toy teacher: featurizer, pair encoder and affinity head in sequence.
//! Its scores drive stage-2 rescoring and its pooled ligand representation is
//! the embedding that centroid priors and distillation targets are made of.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, PairEncoder};
use super::featurize::{Featurizer, FeaturizerConfig};
use super::head::{AffinityHead, FitnessOutput, HeadConfig};
use super::tensor::{join, Params, Tensor};
use super::{ModelError, TokenReps};
use crate::chem::Molecule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub featurizer: FeaturizerConfig,
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    /// Seed for the trainable weights (the featurizer has its own).
    pub seed: u64,
    /// Initial multiplier on the encoder's residual output projections.
    pub residual_scale: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            featurizer: FeaturizerConfig::default(),
            encoder: EncoderConfig::default(),
            head: HeadConfig::default(),
            seed: 11,
            residual_scale: 0.5,
        }
    }
}

impl TeacherConfig {
    /// Same dimensions everywhere, with the protein width overridden.
    pub fn with_protein_dim(mut self, d_protein: usize) -> TeacherConfig {
        self.featurizer.d_protein = d_protein;
        self
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.d_single
    }

    fn validate(&self) -> Result<(), ModelError> {
        let (f, e, h) = (&self.featurizer, &self.encoder, &self.head);
        if f.d_single != e.d_single || e.d_single != h.d_single || f.d_pair != e.d_pair || e.d_pair != h.d_pair {
            return Err(ModelError::ShapeMismatch("teacher featurizer/encoder/head dimensions disagree".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    pub config: TeacherConfig,
    pub featurizer: Featurizer,
    pub encoder: PairEncoder,
    pub head: AffinityHead,
}

impl Teacher {
    pub fn new(config: TeacherConfig) -> Result<Teacher, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut encoder = PairEncoder::new(config.encoder, &mut rng);
        encoder.scale_residual_outputs(config.residual_scale);
        let head = AffinityHead::new(config.head, &mut rng);
        Ok(Teacher { featurizer: Featurizer::new(config.featurizer), encoder, head, config })
    }

    /// Encoded token representations for a compound against a target.
    pub fn encode(&self, mol: &Molecule, protein: &[f64]) -> Result<TokenReps, ModelError> {
        let reps = self.featurizer.featurize(mol, protein)?;
        self.encoder.apply(&reps)
    }

    /// Mean of the encoded ligand single rows.
    pub fn embedding_of(encoded: &TokenReps) -> Vec<f64> {
        let ds = encoded.d_single;
        let mut out = vec![0.0; ds];
        let nl = encoded.num_ligand();
        for i in (0..encoded.n_tokens).filter(|&i| encoded.is_ligand[i] && encoded.single_mask[i]) {
            for (o, &v) in out.iter_mut().zip(encoded.s_row(i)) {
                *o += v / nl as f64;
            }
        }
        out
    }

    pub fn fitness(&self, mol: &Molecule, protein: &[f64]) -> Result<FitnessOutput, ModelError> {
        self.head.apply(&self.encode(mol, protein)?)
    }

    pub fn score(&self, mol: &Molecule, protein: &[f64]) -> Result<f64, ModelError> {
        Ok(self.fitness(mol, protein)?.affinity)
    }

    pub fn embedding(&self, mol: &Molecule, protein: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(Self::embedding_of(&self.encode(mol, protein)?))
    }

    pub fn score_and_embedding(&self, mol: &Molecule, protein: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
        let enc = self.encode(mol, protein)?;
        Ok((self.head.apply(&enc)?.affinity, Self::embedding_of(&enc)))
    }
}

impl Params for Teacher {
    fn visit<'a>(&'a self, p: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.encoder.visit(&join(p, "encoder"), f);
        self.head.visit(&join(p, "head"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.encoder.visit_mut(&join(p, "encoder"), f);
        self.head.visit_mut(&join(p, "head"), f);
    }
}
