//! Ligand-weighted affinity head.
//!
//! Each token gets a gated MLP score from its single representation plus the
//! masked mean of gated MLP scores over its pair row, where protein-protein
//! pairs are excluded. Tokens are then pooled with softmax weights in which
//! the ligand side as a whole carries `ligand_weight_ratio` times the raw
//! weight of the protein side.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, LayerNorm, Linear, Mlp};
use super::tensor::{join, Params, Tensor};
use super::{ModelError, TokenReps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub d_single: usize,
    pub d_pair: usize,
    pub hidden_single: usize,
    pub hidden_pair: usize,
    /// Softmax temperature for the token weights.
    pub temperature: f64,
    pub ligand_weight_ratio: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            d_single: 16,
            d_pair: 8,
            hidden_single: 16,
            hidden_pair: 8,
            temperature: 1.0,
            ligand_weight_ratio: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityHead {
    pub config: HeadConfig,
    pub ln_single: LayerNorm,
    pub gate_single: Linear,
    pub mlp_single: Mlp,
    pub ln_pair: LayerNorm,
    pub gate_pair: Linear,
    pub mlp_pair: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessOutput {
    /// Token score: single contribution plus pair contribution.
    pub per_token_affinity: Vec<f64>,
    pub single_affinity: Vec<f64>,
    pub pair_affinity: Vec<f64>,
    /// Pre-softmax weights: `ratio` for ligand tokens, 1 for protein tokens.
    pub raw_weights: Vec<f64>,
    /// Softmax of `raw_weights / T` over unmasked tokens; 0 for masked tokens.
    pub norm_weights: Vec<f64>,
    pub affinity: f64,
}

/// Flat forward intermediates.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    n: usize,
    retained: Vec<bool>,
    row_count: Vec<usize>,
    s_xhat: Vec<f64>,
    s_inv: Vec<f64>,
    s_ln: Vec<f64>,
    s_gate: Vec<f64>,
    s_pre: Vec<f64>,
    s_act: Vec<f64>,
    s_mlp: Vec<f64>,
    z_xhat: Vec<f64>,
    z_inv: Vec<f64>,
    z_ln: Vec<f64>,
    z_gate: Vec<f64>,
    z_pre: Vec<f64>,
    z_act: Vec<f64>,
    z_mlp: Vec<f64>,
    norm_weights: Vec<f64>,
}

impl AffinityHead {
    pub fn new<R: Rng>(config: HeadConfig, rng: &mut R) -> AffinityHead {
        AffinityHead {
            config,
            ln_single: LayerNorm::new(config.d_single),
            gate_single: Linear::random(config.d_single, 1, rng),
            mlp_single: Mlp::random(config.d_single, config.hidden_single, 1, rng),
            ln_pair: LayerNorm::new(config.d_pair),
            gate_pair: Linear::random(config.d_pair, 1, rng),
            mlp_pair: Mlp::random(config.d_pair, config.hidden_pair, 1, rng),
        }
    }

    /// Raw and normalized token weights for the given masks.
    pub fn token_weights(&self, reps: &TokenReps) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let np = reps.num_protein();
        let nl = reps.num_ligand();
        if nl == 0 {
            return Err(ModelError::ZeroLigandTokens);
        }
        if np == 0 {
            return Err(ModelError::ZeroProteinTokens);
        }
        let ratio = self.config.ligand_weight_ratio * (np as f64 / nl as f64);
        let raw: Vec<f64> = reps.is_ligand.iter().map(|&l| if l { ratio } else { 1.0 }).collect();
        let t = self.config.temperature;
        let max =
            (0..reps.n_tokens).filter(|&i| reps.single_mask[i]).map(|i| raw[i] / t).fold(f64::NEG_INFINITY, f64::max);
        let mut norm: Vec<f64> =
            (0..reps.n_tokens).map(|i| if reps.single_mask[i] { (raw[i] / t - max).exp() } else { 0.0 }).collect();
        let total: f64 = norm.iter().sum();
        norm.iter_mut().for_each(|w| *w /= total);
        Ok((raw, norm))
    }

    /// Pair (i, j) contributes to the pair term: active, and not protein-protein.
    pub fn retained_pair(reps: &TokenReps, i: usize, j: usize) -> bool {
        reps.pair_active(i, j) && (reps.is_ligand[i] || reps.is_ligand[j])
    }

    pub fn apply(&self, reps: &TokenReps) -> Result<FitnessOutput, ModelError> {
        Ok(self.forward(reps)?.0)
    }

    pub fn forward(&self, reps: &TokenReps) -> Result<(FitnessOutput, HeadTrace), ModelError> {
        reps.validate()?;
        if reps.d_single != self.config.d_single || reps.d_pair != self.config.d_pair {
            return Err(ModelError::ShapeMismatch(format!(
                "head expects d_single {} / d_pair {}, got {} / {}",
                self.config.d_single, self.config.d_pair, reps.d_single, reps.d_pair
            )));
        }
        let (raw, norm) = self.token_weights(reps)?;
        let n = reps.n_tokens;
        let ds = reps.d_single;
        let dp = reps.d_pair;
        let hs = self.config.hidden_single;
        let hp = self.config.hidden_pair;
        let retained: Vec<bool> = (0..n * n).map(|ij| Self::retained_pair(reps, ij / n, ij % n)).collect();
        let mut t = HeadTrace {
            n,
            row_count: (0..n).map(|i| retained[i * n..(i + 1) * n].iter().filter(|&&r| r).count()).collect(),
            retained,
            s_xhat: vec![0.0; n * ds],
            s_inv: vec![0.0; n],
            s_ln: vec![0.0; n * ds],
            s_gate: vec![0.0; n],
            s_pre: vec![0.0; n * hs],
            s_act: vec![0.0; n * hs],
            s_mlp: vec![0.0; n],
            z_xhat: vec![0.0; n * n * dp],
            z_inv: vec![0.0; n * n],
            z_ln: vec![0.0; n * n * dp],
            z_gate: vec![0.0; n * n],
            z_pre: vec![0.0; n * n * hp],
            z_act: vec![0.0; n * n * hp],
            z_mlp: vec![0.0; n * n],
            norm_weights: norm.clone(),
        };
        let mut single = vec![0.0; n];
        let mut pair = vec![0.0; n];
        let mut one = [0.0];
        for i in (0..n).filter(|&i| reps.single_mask[i]) {
            let r = i * ds..(i + 1) * ds;
            t.s_inv[i] = self.ln_single.forward_into(reps.s_row(i), &mut t.s_ln[r.clone()], &mut t.s_xhat[r.clone()]);
            self.gate_single.forward(&t.s_ln[r.clone()], &mut one);
            t.s_gate[i] = sigmoid(one[0]);
            self.mlp_single.forward_into(
                &t.s_ln[r],
                &mut one,
                &mut t.s_pre[i * hs..(i + 1) * hs],
                &mut t.s_act[i * hs..(i + 1) * hs],
            );
            t.s_mlp[i] = one[0];
            single[i] = t.s_gate[i] * t.s_mlp[i];
        }
        for i in 0..n {
            if t.row_count[i] == 0 {
                continue;
            }
            let mut total = 0.0;
            for j in (0..n).filter(|&j| t.retained[i * n + j]) {
                let ij = i * n + j;
                let r = ij * dp..(ij + 1) * dp;
                t.z_inv[ij] =
                    self.ln_pair.forward_into(reps.z_cell(i, j), &mut t.z_ln[r.clone()], &mut t.z_xhat[r.clone()]);
                self.gate_pair.forward(&t.z_ln[r.clone()], &mut one);
                t.z_gate[ij] = sigmoid(one[0]);
                self.mlp_pair.forward_into(
                    &t.z_ln[r],
                    &mut one,
                    &mut t.z_pre[ij * hp..(ij + 1) * hp],
                    &mut t.z_act[ij * hp..(ij + 1) * hp],
                );
                t.z_mlp[ij] = one[0];
                total += t.z_gate[ij] * t.z_mlp[ij];
            }
            pair[i] = total / t.row_count[i] as f64;
        }
        let per_token: Vec<f64> = single.iter().zip(&pair).map(|(a, b)| a + b).collect();
        let affinity = per_token.iter().zip(&norm).map(|(a, w)| a * w).sum::<f64>();
        if !affinity.is_finite() {
            return Err(ModelError::NonFiniteActivation("affinity head"));
        }
        let out = FitnessOutput {
            per_token_affinity: per_token,
            single_affinity: single,
            pair_affinity: pair,
            raw_weights: raw,
            norm_weights: norm,
            affinity,
        };
        Ok((out, t))
    }

    /// Gradient of `d_affinity * affinity`: parameter gradients accumulate into
    /// `grad`; returns gradients with respect to `s` and `z`.
    pub fn backward(
        &self,
        reps: &TokenReps,
        trace: &HeadTrace,
        d_affinity: f64,
        grad: &mut AffinityHead,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = trace.n;
        let ds = reps.d_single;
        let dp = reps.d_pair;
        let hs = self.config.hidden_single;
        let hp = self.config.hidden_pair;
        let mut gs = vec![0.0; n * ds];
        let mut gz = vec![0.0; n * n * dp];
        let mut dx = vec![0.0; ds.max(dp)];
        for i in 0..n {
            let d_tok = d_affinity * trace.norm_weights[i];
            if d_tok == 0.0 {
                continue;
            }
            if reps.single_mask[i] {
                let r = i * ds..(i + 1) * ds;
                let g = trace.s_gate[i];
                let d_gate_pre = d_tok * trace.s_mlp[i] * g * (1.0 - g);
                let d_mlp = d_tok * g;
                dx[..ds].fill(0.0);
                self.gate_single.backward(
                    &trace.s_ln[r.clone()],
                    &[d_gate_pre],
                    &mut grad.gate_single,
                    Some(&mut dx[..ds]),
                );
                self.mlp_single.backward_from(
                    &trace.s_ln[r.clone()],
                    &trace.s_pre[i * hs..(i + 1) * hs],
                    &trace.s_act[i * hs..(i + 1) * hs],
                    &[d_mlp],
                    &mut grad.mlp_single,
                    &mut dx[..ds],
                );
                self.ln_single.backward_from(
                    &trace.s_xhat[r.clone()],
                    trace.s_inv[i],
                    &dx[..ds],
                    &mut grad.ln_single,
                    &mut gs[r],
                );
            }
            if trace.row_count[i] == 0 {
                continue;
            }
            let d_cell = d_tok / trace.row_count[i] as f64;
            for j in (0..n).filter(|&j| trace.retained[i * n + j]) {
                let ij = i * n + j;
                let r = ij * dp..(ij + 1) * dp;
                let g = trace.z_gate[ij];
                let d_gate_pre = d_cell * trace.z_mlp[ij] * g * (1.0 - g);
                let d_mlp = d_cell * g;
                dx[..dp].fill(0.0);
                self.gate_pair.backward(
                    &trace.z_ln[r.clone()],
                    &[d_gate_pre],
                    &mut grad.gate_pair,
                    Some(&mut dx[..dp]),
                );
                self.mlp_pair.backward_from(
                    &trace.z_ln[r.clone()],
                    &trace.z_pre[ij * hp..(ij + 1) * hp],
                    &trace.z_act[ij * hp..(ij + 1) * hp],
                    &[d_mlp],
                    &mut grad.mlp_pair,
                    &mut dx[..dp],
                );
                self.ln_pair.backward_from(
                    &trace.z_xhat[r.clone()],
                    trace.z_inv[ij],
                    &dx[..dp],
                    &mut grad.ln_pair,
                    &mut gz[r],
                );
            }
        }
        (gs, gz)
    }
}

impl Params for AffinityHead {
    fn visit<'a>(&'a self, p: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.ln_single.visit(&join(p, "ln_single"), f);
        self.gate_single.visit(&join(p, "gate_single"), f);
        self.mlp_single.visit(&join(p, "mlp_single"), f);
        self.ln_pair.visit(&join(p, "ln_pair"), f);
        self.gate_pair.visit(&join(p, "gate_pair"), f);
        self.mlp_pair.visit(&join(p, "mlp_pair"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.ln_single.visit_mut(&join(p, "ln_single"), f);
        self.gate_single.visit_mut(&join(p, "gate_single"), f);
        self.mlp_single.visit_mut(&join(p, "mlp_single"), f);
        self.ln_pair.visit_mut(&join(p, "ln_pair"), f);
        self.gate_pair.visit_mut(&join(p, "gate_pair"), f);
        self.mlp_pair.visit_mut(&join(p, "mlp_pair"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reps(rng: &mut ChaCha8Rng, lig: Vec<bool>) -> TokenReps {
        let mut r = TokenReps::zeros(lig, 16, 8);
        r.s.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        r.z.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        r
    }

    #[test]
    fn weights_normalize_and_ratio_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = AffinityHead::new(HeadConfig::default(), &mut rng);
        let r = reps(&mut rng, vec![false, false, false, true, true]);
        let out = head.apply(&r).unwrap();
        let sum: f64 = out.norm_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let lig: f64 = (3..5).map(|i| out.raw_weights[i]).sum();
        let prot: f64 = (0..3).map(|i| out.raw_weights[i]).sum();
        assert_eq!(lig, 2.0 * prot);
    }

    #[test]
    fn needs_both_modalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = AffinityHead::new(HeadConfig::default(), &mut rng);
        assert!(matches!(head.apply(&reps(&mut rng, vec![false, false])), Err(ModelError::ZeroLigandTokens)));
        assert!(matches!(head.apply(&reps(&mut rng, vec![true])), Err(ModelError::ZeroProteinTokens)));
        let mut r = reps(&mut rng, vec![false, true]);
        r.single_mask[1] = false;
        assert!(matches!(head.apply(&r), Err(ModelError::ZeroLigandTokens)));
    }

    #[test]
    fn protein_protein_pairs_are_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = AffinityHead::new(HeadConfig::default(), &mut rng);
        let r = reps(&mut rng, vec![false, false, true]);
        let base = head.apply(&r).unwrap();
        let mut p = r.clone();
        for (i, j) in [(0, 1), (1, 0), (0, 0), (1, 1)] {
            let o = (i * 3 + j) * 8;
            p.z[o..o + 8].iter_mut().for_each(|x| *x += 5.0);
        }
        let moved = head.apply(&p).unwrap();
        assert_eq!(base.pair_affinity, moved.pair_affinity);
        assert_eq!(base.affinity, moved.affinity);
    }
}
