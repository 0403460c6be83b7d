//! Fast student scorer.
//!
//! Three tokens are built from the fingerprint bits, the protein embedding and
//! the structural prior of the nearest cluster centroid. A short pre-LN
//! attention stack mixes them, the tokens are mean-pooled, and two linear heads
//! emit a hidden vector in the teacher's embedding space and a scalar score.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dot, masked_softmax, LayerNorm, Linear, LnCache, Mlp, MlpCache, Projection};
use super::tensor::{join, Params, Tensor};
use super::ModelError;
use crate::fingerprint::Fingerprint;

pub const N_TOKENS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub fp_width: usize,
    pub d_protein: usize,
    pub d_prior: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub mlp_factor: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig { fp_width: 1024, d_protein: 32, d_prior: 16, d_model: 32, n_blocks: 2, mlp_factor: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentInput {
    pub fp: Fingerprint,
    pub protein_embedding: Vec<f64>,
    pub prior_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentBlock {
    pub ln_attn: LayerNorm,
    pub query: Linear,
    pub key: Projection,
    pub value: Linear,
    pub attn_out: Linear,
    pub ln_mlp: LayerNorm,
    pub mlp: Mlp,
}

impl Params for StudentBlock {
    fn visit<'a>(&'a self, p: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.ln_attn.visit(&join(p, "ln_attn"), f);
        self.query.visit(&join(p, "query"), f);
        self.key.visit(&join(p, "key"), f);
        self.value.visit(&join(p, "value"), f);
        self.attn_out.visit(&join(p, "attn_out"), f);
        self.ln_mlp.visit(&join(p, "ln_mlp"), f);
        self.mlp.visit(&join(p, "mlp"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.ln_attn.visit_mut(&join(p, "ln_attn"), f);
        self.query.visit_mut(&join(p, "query"), f);
        self.key.visit_mut(&join(p, "key"), f);
        self.value.visit_mut(&join(p, "value"), f);
        self.attn_out.visit_mut(&join(p, "attn_out"), f);
        self.ln_mlp.visit_mut(&join(p, "ln_mlp"), f);
        self.mlp.visit_mut(&join(p, "mlp"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub config: StudentConfig,
    /// `[fp_width, d_model]`: row `b` is added when bit `b` is set.
    pub bit_embedding: Tensor,
    pub bit_bias: Tensor,
    pub protein_proj: Linear,
    pub prior_proj: Linear,
    pub blocks: Vec<StudentBlock>,
    pub ln_final: LayerNorm,
    pub hidden_head: Linear,
    pub score_head: Linear,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    ln1: Vec<LnCache>,
    a: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    att: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
    ln2: Vec<LnCache>,
    m: Vec<Vec<f64>>,
    mlp: Vec<MlpCache>,
}

/// Forward intermediates for [`Student::backward`].
#[derive(Debug, Clone)]
pub struct StudentTrace {
    on_bits: Vec<usize>,
    protein: Vec<f64>,
    prior: Vec<f64>,
    blocks: Vec<BlockTrace>,
    ln_final: Vec<LnCache>,
    pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentOutput {
    pub hidden: Vec<f64>,
    pub score: f64,
}

/// Gradients with respect to the three input vectors. The fingerprint part is
/// only filled when requested because it is dense over all bits.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentInputGrad {
    pub fp: Option<Vec<f64>>,
    pub protein: Vec<f64>,
    pub prior: Vec<f64>,
}

impl StudentInputGrad {
    /// Euclidean norm over all parts that were computed.
    pub fn norm(&self) -> f64 {
        let fp = self.fp.as_deref().unwrap_or(&[]);
        fp.iter().chain(&self.protein).chain(&self.prior).map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Student {
    pub fn new<R: Rng>(config: StudentConfig, rng: &mut R) -> Student {
        let d = config.d_model;
        let blocks = (0..config.n_blocks)
            .map(|_| StudentBlock {
                ln_attn: LayerNorm::new(d),
                query: Linear::random(d, d, rng),
                key: Projection::random(d, d, rng),
                value: Linear::random(d, d, rng),
                attn_out: Linear::random(d, d, rng),
                ln_mlp: LayerNorm::new(d),
                mlp: Mlp::random(d, d * config.mlp_factor, d, rng),
            })
            .collect();
        let emb_scale = 1.0 / (d as f64).sqrt();
        Student {
            config,
            bit_embedding: Tensor::uniform(&[config.fp_width, d], emb_scale, rng),
            bit_bias: Tensor::zeros(&[d]),
            protein_proj: Linear::random(config.d_protein, d, rng),
            prior_proj: Linear::random(config.d_prior, d, rng),
            blocks,
            ln_final: LayerNorm::new(d),
            hidden_head: Linear::random(d, config.d_prior, rng),
            score_head: Linear::random(d, 1, rng),
        }
    }

    fn check(&self, fp_width: usize, protein: usize, prior: usize) -> Result<(), ModelError> {
        let c = &self.config;
        if fp_width != c.fp_width || protein != c.d_protein || prior != c.d_prior {
            return Err(ModelError::ShapeMismatch(format!(
                "student expects fp {} / protein {} / prior {}, got {fp_width} / {protein} / {prior}",
                c.fp_width, c.d_protein, c.d_prior
            )));
        }
        Ok(())
    }

    /// Projected protein token; constant across a campaign, so callers cache it.
    pub fn protein_token(&self, protein: &[f64]) -> Vec<f64> {
        self.protein_proj.apply(protein)
    }

    /// Projected prior token; constant per centroid.
    pub fn prior_token(&self, prior: &[f64]) -> Vec<f64> {
        self.prior_proj.apply(prior)
    }

    fn fp_token(&self, on_bits: &[usize]) -> Vec<f64> {
        let d = self.config.d_model;
        let mut t = self.bit_bias.data.clone();
        for &b in on_bits {
            for (x, &e) in t.iter_mut().zip(&self.bit_embedding.data[b * d..(b + 1) * d]) {
                *x += e;
            }
        }
        t
    }

    pub fn forward(&self, inp: &StudentInput) -> Result<(StudentOutput, StudentTrace), ModelError> {
        self.check(inp.fp.width(), inp.protein_embedding.len(), inp.prior_embedding.len())?;
        let on_bits: Vec<usize> = inp.fp.on_bits().collect();
        let tokens = vec![
            self.fp_token(&on_bits),
            self.protein_token(&inp.protein_embedding),
            self.prior_token(&inp.prior_embedding),
        ];
        let (out, blocks, ln_final, pooled) = self.run(tokens);
        if !out.score.is_finite() {
            return Err(ModelError::NonFiniteActivation("student"));
        }
        let trace = StudentTrace {
            on_bits,
            protein: inp.protein_embedding.clone(),
            prior: inp.prior_embedding.clone(),
            blocks,
            ln_final,
            pooled,
        };
        Ok((out, trace))
    }

    pub fn apply(&self, inp: &StudentInput) -> Result<StudentOutput, ModelError> {
        Ok(self.forward(inp)?.0)
    }

    /// Scores a fingerprint against pre-projected protein and prior tokens.
    pub fn score_cached(
        &self,
        fp: &Fingerprint,
        protein_token: &[f64],
        prior_token: &[f64],
    ) -> Result<f64, ModelError> {
        if fp.width() != self.config.fp_width {
            return Err(ModelError::ShapeMismatch(format!(
                "fingerprint width {} vs {}",
                fp.width(),
                self.config.fp_width
            )));
        }
        let on: Vec<usize> = fp.on_bits().collect();
        let tokens = vec![self.fp_token(&on), protein_token.to_vec(), prior_token.to_vec()];
        let score = self.run(tokens).0.score;
        if !score.is_finite() {
            return Err(ModelError::NonFiniteActivation("student"));
        }
        Ok(score)
    }

    fn run(&self, mut h: Vec<Vec<f64>>) -> (StudentOutput, Vec<BlockTrace>, Vec<LnCache>, Vec<f64>) {
        let d = self.config.d_model;
        let scale = 1.0 / (d as f64).sqrt();
        let keep = [true; N_TOKENS];
        let mut traces = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let mut ln1 = Vec::with_capacity(N_TOKENS);
            let mut a = Vec::with_capacity(N_TOKENS);
            for t in &h {
                let (y, c) = blk.ln_attn.apply(t);
                a.push(y);
                ln1.push(c);
            }
            let q: Vec<Vec<f64>> = a.iter().map(|x| blk.query.apply(x)).collect();
            let k: Vec<Vec<f64>> = a.iter().map(|x| blk.key.apply(x)).collect();
            let v: Vec<Vec<f64>> = a.iter().map(|x| blk.value.apply(x)).collect();
            let mut att = Vec::with_capacity(N_TOKENS);
            let mut o = Vec::with_capacity(N_TOKENS);
            for i in 0..N_TOKENS {
                let mut row: Vec<f64> = (0..N_TOKENS).map(|j| scale * dot(&q[i], &k[j])).collect();
                masked_softmax(&mut row, &keep);
                let mut oi = vec![0.0; d];
                for (j, w) in row.iter().enumerate() {
                    for (x, &vj) in oi.iter_mut().zip(&v[j]) {
                        *x += w * vj;
                    }
                }
                att.push(row);
                o.push(oi);
            }
            for i in 0..N_TOKENS {
                let upd = blk.attn_out.apply(&o[i]);
                h[i].iter_mut().zip(&upd).for_each(|(x, u)| *x += u);
            }
            let mut ln2 = Vec::with_capacity(N_TOKENS);
            let mut m = Vec::with_capacity(N_TOKENS);
            let mut mlp = Vec::with_capacity(N_TOKENS);
            for t in h.iter_mut() {
                let (y, c) = blk.ln_mlp.apply(t);
                let mut upd = vec![0.0; d];
                let mc = blk.mlp.forward(&y, &mut upd);
                t.iter_mut().zip(&upd).for_each(|(x, u)| *x += u);
                m.push(y);
                ln2.push(c);
                mlp.push(mc);
            }
            traces.push(BlockTrace { ln1, a, q, k, v, att, o, ln2, m, mlp });
        }
        let mut pooled = vec![0.0; d];
        let mut ln_final = Vec::with_capacity(N_TOKENS);
        for t in &h {
            let (y, c) = self.ln_final.apply(t);
            pooled.iter_mut().zip(&y).for_each(|(p, v)| *p += v / N_TOKENS as f64);
            ln_final.push(c);
        }
        let hidden = self.hidden_head.apply(&pooled);
        let score = self.score_head.apply(&pooled)[0];
        (StudentOutput { hidden, score }, traces, ln_final, pooled)
    }

    /// Back-propagates `d_hidden` and `d_score` into parameter gradients
    /// (accumulated into `grad`) and returns input gradients.
    pub fn backward(
        &self,
        trace: &StudentTrace,
        d_hidden: &[f64],
        d_score: f64,
        grad: &mut Student,
        want_fp_grad: bool,
    ) -> StudentInputGrad {
        let d = self.config.d_model;
        let scale = 1.0 / (d as f64).sqrt();
        let mut dp = vec![0.0; d];
        self.hidden_head.backward(&trace.pooled, d_hidden, &mut grad.hidden_head, Some(&mut dp));
        self.score_head.backward(&trace.pooled, &[d_score], &mut grad.score_head, Some(&mut dp));
        let mut gh = vec![vec![0.0; d]; N_TOKENS];
        let dmean: Vec<f64> = dp.iter().map(|x| x / N_TOKENS as f64).collect();
        for (t, c) in trace.ln_final.iter().enumerate() {
            self.ln_final.backward(c, &dmean, &mut grad.ln_final, &mut gh[t]);
        }
        for (b, blk) in self.blocks.iter().enumerate().rev() {
            let tr = &trace.blocks[b];
            let g = &mut grad.blocks[b];
            for t in 0..N_TOKENS {
                let dupd = gh[t].clone();
                let mut dm = vec![0.0; d];
                blk.mlp.backward(&tr.m[t], &tr.mlp[t], &dupd, &mut g.mlp, &mut dm);
                blk.ln_mlp.backward(&tr.ln2[t], &dm, &mut g.ln_mlp, &mut gh[t]);
            }
            let mut gq = vec![vec![0.0; d]; N_TOKENS];
            let mut gk = vec![vec![0.0; d]; N_TOKENS];
            let mut gv = vec![vec![0.0; d]; N_TOKENS];
            for i in 0..N_TOKENS {
                let mut d_o = vec![0.0; d];
                blk.attn_out.backward(&tr.o[i], &gh[i], &mut g.attn_out, Some(&mut d_o));
                let datt: Vec<f64> = (0..N_TOKENS).map(|j| dot(&d_o, &tr.v[j])).collect();
                let weighted: f64 = (0..N_TOKENS).map(|j| tr.att[i][j] * datt[j]).sum();
                for j in 0..N_TOKENS {
                    let w = tr.att[i][j];
                    gv[j].iter_mut().zip(&d_o).for_each(|(x, y)| *x += w * y);
                    let dl = w * (datt[j] - weighted);
                    for c in 0..d {
                        gq[i][c] += scale * dl * tr.k[j][c];
                        gk[j][c] += scale * dl * tr.q[i][c];
                    }
                }
            }
            for t in 0..N_TOKENS {
                let mut da = vec![0.0; d];
                blk.query.backward(&tr.a[t], &gq[t], &mut g.query, Some(&mut da));
                blk.key.backward(&tr.a[t], &gk[t], &mut g.key, Some(&mut da));
                blk.value.backward(&tr.a[t], &gv[t], &mut g.value, Some(&mut da));
                blk.ln_attn.backward(&tr.ln1[t], &da, &mut g.ln_attn, &mut gh[t]);
            }
        }
        // token 0: bit embedding rows
        for (x, &gv) in grad.bit_bias.data.iter_mut().zip(&gh[0]) {
            *x += gv;
        }
        for &b in &trace.on_bits {
            for (x, &gv) in grad.bit_embedding.data[b * d..(b + 1) * d].iter_mut().zip(&gh[0]) {
                *x += gv;
            }
        }
        let fp = want_fp_grad.then(|| {
            (0..self.config.fp_width).map(|b| dot(&self.bit_embedding.data[b * d..(b + 1) * d], &gh[0])).collect()
        });
        let mut protein = vec![0.0; self.config.d_protein];
        self.protein_proj.backward(&trace.protein, &gh[1], &mut grad.protein_proj, Some(&mut protein));
        let mut prior = vec![0.0; self.config.d_prior];
        self.prior_proj.backward(&trace.prior, &gh[2], &mut grad.prior_proj, Some(&mut prior));
        StudentInputGrad { fp, protein, prior }
    }
}

impl Params for Student {
    fn visit<'a>(&'a self, p: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(p, "bit_embedding"), &self.bit_embedding);
        f(join(p, "bit_bias"), &self.bit_bias);
        self.protein_proj.visit(&join(p, "protein_proj"), f);
        self.prior_proj.visit(&join(p, "prior_proj"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(p, &format!("block{i}")), f);
        }
        self.ln_final.visit(&join(p, "ln_final"), f);
        self.hidden_head.visit(&join(p, "hidden_head"), f);
        self.score_head.visit(&join(p, "score_head"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(p, "bit_embedding"), &mut self.bit_embedding);
        f(join(p, "bit_bias"), &mut self.bit_bias);
        self.protein_proj.visit_mut(&join(p, "protein_proj"), f);
        self.prior_proj.visit_mut(&join(p, "prior_proj"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(p, &format!("block{i}")), f);
        }
        self.ln_final.visit_mut(&join(p, "ln_final"), f);
        self.hidden_head.visit_mut(&join(p, "hidden_head"), f);
        self.score_head.visit_mut(&join(p, "score_head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::zero_all;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> StudentConfig {
        StudentConfig { fp_width: 64, d_protein: 5, d_prior: 4, d_model: 8, n_blocks: 2, mlp_factor: 2 }
    }

    fn input(rng: &mut ChaCha8Rng, cfg: &StudentConfig) -> StudentInput {
        let bits: Vec<usize> = (0..cfg.fp_width).filter(|_| rng.gen_bool(0.2)).collect();
        StudentInput {
            fp: Fingerprint::from_bits(cfg.fp_width, bits).unwrap(),
            protein_embedding: (0..cfg.d_protein).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            prior_embedding: (0..cfg.d_prior).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn zero_weights_give_the_score_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = small();
        let mut s = Student::new(cfg, &mut rng);
        zero_all(&mut s);
        s.score_head.b.data[0] = 0.75;
        let inp = StudentInput {
            fp: Fingerprint::empty(64, 2).unwrap(),
            protein_embedding: vec![0.0; 5],
            prior_embedding: vec![0.0; 4],
        };
        assert_eq!(s.apply(&inp).unwrap().score, 0.75);
    }

    #[test]
    fn cached_tokens_match_full_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = small();
        let s = Student::new(cfg, &mut rng);
        let inp = input(&mut rng, &cfg);
        let full = s.apply(&inp).unwrap().score;
        let cached = s
            .score_cached(&inp.fp, &s.protein_token(&inp.protein_embedding), &s.prior_token(&inp.prior_embedding))
            .unwrap();
        assert_eq!(full, cached);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = small();
        let s = Student::new(cfg, &mut rng);
        let mut inp = input(&mut rng, &cfg);
        inp.prior_embedding.push(0.0);
        assert!(matches!(s.apply(&inp), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = small();
        let s = Student::new(cfg, &mut rng);
        let inp = input(&mut rng, &cfg);
        let (_, trace) = s.forward(&inp).unwrap();
        let mut g = s.clone();
        zero_all(&mut g);
        let ig = s.backward(&trace, &[0.0; 4], 1.0, &mut g, true);
        let h = 1e-6;
        for k in 0..cfg.d_protein {
            let mut a = inp.clone();
            a.protein_embedding[k] += h;
            let mut b = inp.clone();
            b.protein_embedding[k] -= h;
            let num = (s.apply(&a).unwrap().score - s.apply(&b).unwrap().score) / (2.0 * h);
            assert!((num - ig.protein[k]).abs() < 1e-7);
        }
        // a set bit's gradient equals the score change from removing its row contribution, to first order
        let fp_grad = ig.fp.unwrap();
        let bit = inp.fp.on_bits().next().unwrap();
        let mut s2 = s.clone();
        let d = cfg.d_model;
        for x in &mut s2.bit_embedding.data[bit * d..(bit + 1) * d] {
            *x *= 1.0 + h;
        }
        let mut s3 = s.clone();
        for x in &mut s3.bit_embedding.data[bit * d..(bit + 1) * d] {
            *x *= 1.0 - h;
        }
        let num = (s2.apply(&inp).unwrap().score - s3.apply(&inp).unwrap().score) / (2.0 * h);
        assert!((num - fp_grad[bit]).abs() < 1e-7);
    }
}
