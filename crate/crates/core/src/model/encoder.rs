//! Pair-aware encoder: a stack of blocks that update the single representation
//! with pair-biased self-attention and the pair representation with an outer
//! product of projected single features. Every update is residual.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dot, masked_softmax, LayerNorm, Linear, Mlp, Projection};
use super::tensor::{join, Params, Tensor};
use super::{ModelError, TokenReps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_single: usize,
    pub d_pair: usize,
    pub n_blocks: usize,
    /// Hidden width of the transitions as a multiple of the input width.
    pub transition_factor: usize,
    /// Width of each side of the outer product.
    pub outer_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { d_single: 16, d_pair: 8, n_blocks: 4, transition_factor: 2, outer_dim: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub ln_attn: LayerNorm,
    pub query: Linear,
    pub key: Projection,
    pub value: Linear,
    pub ln_bias: LayerNorm,
    pub pair_bias: Linear,
    pub attn_out: Linear,
    pub ln_trans: LayerNorm,
    pub trans: Mlp,
    pub ln_outer: LayerNorm,
    pub proj_a: Linear,
    pub proj_b: Linear,
    pub outer_out: Linear,
    pub ln_pair: LayerNorm,
    pub pair_trans: Mlp,
}

impl EncoderBlock {
    fn new<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> EncoderBlock {
        let (ds, dp, co) = (cfg.d_single, cfg.d_pair, cfg.outer_dim);
        let hs = ds * cfg.transition_factor;
        let hp = dp * cfg.transition_factor;
        EncoderBlock {
            ln_attn: LayerNorm::new(ds),
            query: Linear::random(ds, ds, rng),
            key: Projection::random(ds, ds, rng),
            value: Linear::random(ds, ds, rng),
            ln_bias: LayerNorm::new(dp),
            pair_bias: Linear::random(dp, 1, rng),
            attn_out: Linear::random(ds, ds, rng),
            ln_trans: LayerNorm::new(ds),
            trans: Mlp::random(ds, hs, ds, rng),
            ln_outer: LayerNorm::new(ds),
            proj_a: Linear::random(ds, co, rng),
            proj_b: Linear::random(ds, co, rng),
            outer_out: Linear::random(co * co, dp, rng),
            ln_pair: LayerNorm::new(dp),
            pair_trans: Mlp::random(dp, hp, dp, rng),
        }
    }

    fn output_layers_mut(&mut self) -> [&mut Linear; 4] {
        [&mut self.attn_out, &mut self.trans.fc2, &mut self.outer_out, &mut self.pair_trans.fc2]
    }
}

impl Params for EncoderBlock {
    fn visit<'a>(&'a self, p: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.ln_attn.visit(&join(p, "ln_attn"), f);
        self.query.visit(&join(p, "query"), f);
        self.key.visit(&join(p, "key"), f);
        self.value.visit(&join(p, "value"), f);
        self.ln_bias.visit(&join(p, "ln_bias"), f);
        self.pair_bias.visit(&join(p, "pair_bias"), f);
        self.attn_out.visit(&join(p, "attn_out"), f);
        self.ln_trans.visit(&join(p, "ln_trans"), f);
        self.trans.visit(&join(p, "trans"), f);
        self.ln_outer.visit(&join(p, "ln_outer"), f);
        self.proj_a.visit(&join(p, "proj_a"), f);
        self.proj_b.visit(&join(p, "proj_b"), f);
        self.outer_out.visit(&join(p, "outer_out"), f);
        self.ln_pair.visit(&join(p, "ln_pair"), f);
        self.pair_trans.visit(&join(p, "pair_trans"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.ln_attn.visit_mut(&join(p, "ln_attn"), f);
        self.query.visit_mut(&join(p, "query"), f);
        self.key.visit_mut(&join(p, "key"), f);
        self.value.visit_mut(&join(p, "value"), f);
        self.ln_bias.visit_mut(&join(p, "ln_bias"), f);
        self.pair_bias.visit_mut(&join(p, "pair_bias"), f);
        self.attn_out.visit_mut(&join(p, "attn_out"), f);
        self.ln_trans.visit_mut(&join(p, "ln_trans"), f);
        self.trans.visit_mut(&join(p, "trans"), f);
        self.ln_outer.visit_mut(&join(p, "ln_outer"), f);
        self.proj_a.visit_mut(&join(p, "proj_a"), f);
        self.proj_b.visit_mut(&join(p, "proj_b"), f);
        self.outer_out.visit_mut(&join(p, "outer_out"), f);
        self.ln_pair.visit_mut(&join(p, "ln_pair"), f);
        self.pair_trans.visit_mut(&join(p, "pair_trans"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEncoder {
    pub config: EncoderConfig,
    pub blocks: Vec<EncoderBlock>,
}

/// Forward intermediates of one block, flat per token or per pair.
#[derive(Debug, Clone, Default)]
struct BlockCache {
    a: Vec<f64>,
    ln1_xhat: Vec<f64>,
    ln1_inv: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    zn: Vec<f64>,
    lnz_xhat: Vec<f64>,
    lnz_inv: Vec<f64>,
    att: Vec<f64>,
    o: Vec<f64>,
    t: Vec<f64>,
    ln2_xhat: Vec<f64>,
    ln2_inv: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    c: Vec<f64>,
    ln3_xhat: Vec<f64>,
    ln3_inv: Vec<f64>,
    pa: Vec<f64>,
    pb: Vec<f64>,
    u: Vec<f64>,
    lnp_xhat: Vec<f64>,
    lnp_inv: Vec<f64>,
    ppre: Vec<f64>,
    pact: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    n: usize,
    active: Vec<bool>,
    mask: Vec<bool>,
    blocks: Vec<BlockCache>,
}

impl PairEncoder {
    pub fn new<R: Rng>(config: EncoderConfig, rng: &mut R) -> PairEncoder {
        let blocks = (0..config.n_blocks).map(|_| EncoderBlock::new(&config, rng)).collect();
        PairEncoder { config, blocks }
    }

    /// Zeroes every residual output projection, making the encoder the identity.
    pub fn zero_residual_outputs(&mut self) {
        for b in &mut self.blocks {
            for l in b.output_layers_mut() {
                l.w.fill(0.0);
                l.b.fill(0.0);
            }
        }
    }

    /// Multiplies every residual output projection by `factor`.
    pub fn scale_residual_outputs(&mut self, factor: f64) {
        for b in &mut self.blocks {
            for l in b.output_layers_mut() {
                l.w.data.iter_mut().for_each(|x| *x *= factor);
            }
        }
    }

    fn check(&self, reps: &TokenReps) -> Result<(), ModelError> {
        reps.validate()?;
        if reps.d_single != self.config.d_single || reps.d_pair != self.config.d_pair {
            return Err(ModelError::ShapeMismatch(format!(
                "encoder expects d_single {} / d_pair {}, got {} / {}",
                self.config.d_single, self.config.d_pair, reps.d_single, reps.d_pair
            )));
        }
        Ok(())
    }

    pub fn apply(&self, reps: &TokenReps) -> Result<TokenReps, ModelError> {
        Ok(self.forward(reps)?.0)
    }

    pub fn forward(&self, reps: &TokenReps) -> Result<(TokenReps, EncoderTrace), ModelError> {
        self.check(reps)?;
        let n = reps.n_tokens;
        let active: Vec<bool> = (0..n * n).map(|ij| reps.pair_active(ij / n, ij % n)).collect();
        let mut out = reps.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            caches.push(self.block_forward(blk, n, &active, &reps.single_mask, &mut out.s, &mut out.z));
        }
        if !out.s.iter().chain(&out.z).all(|x| x.is_finite()) {
            return Err(ModelError::NonFiniteActivation("pair encoder"));
        }
        Ok((out, EncoderTrace { n, active, mask: reps.single_mask.clone(), blocks: caches }))
    }

    fn block_forward(
        &self,
        blk: &EncoderBlock,
        n: usize,
        active: &[bool],
        mask: &[bool],
        s: &mut [f64],
        z: &mut [f64],
    ) -> BlockCache {
        let ds = self.config.d_single;
        let dp = self.config.d_pair;
        let co = self.config.outer_dim;
        let hs = blk.trans.hidden_dim();
        let hp = blk.pair_trans.hidden_dim();
        let scale = 1.0 / (ds as f64).sqrt();
        let mut c = BlockCache {
            a: vec![0.0; n * ds],
            ln1_xhat: vec![0.0; n * ds],
            ln1_inv: vec![0.0; n],
            q: vec![0.0; n * ds],
            k: vec![0.0; n * ds],
            v: vec![0.0; n * ds],
            zn: vec![0.0; n * n * dp],
            lnz_xhat: vec![0.0; n * n * dp],
            lnz_inv: vec![0.0; n * n],
            att: vec![0.0; n * n],
            o: vec![0.0; n * ds],
            t: vec![0.0; n * ds],
            ln2_xhat: vec![0.0; n * ds],
            ln2_inv: vec![0.0; n],
            pre1: vec![0.0; n * hs],
            act1: vec![0.0; n * hs],
            c: vec![0.0; n * ds],
            ln3_xhat: vec![0.0; n * ds],
            ln3_inv: vec![0.0; n],
            pa: vec![0.0; n * co],
            pb: vec![0.0; n * co],
            u: vec![0.0; n * n * dp],
            lnp_xhat: vec![0.0; n * n * dp],
            lnp_inv: vec![0.0; n * n],
            ppre: vec![0.0; n * n * hp],
            pact: vec![0.0; n * n * hp],
        };
        let tok = |i: usize| i * ds..(i + 1) * ds;
        let cell = |ij: usize| ij * dp..(ij + 1) * dp;

        // attention with pair bias
        for i in (0..n).filter(|&i| mask[i]) {
            c.ln1_inv[i] = blk.ln_attn.forward_into(&s[tok(i)], &mut c.a[tok(i)], &mut c.ln1_xhat[tok(i)]);
            blk.query.forward(&c.a[tok(i)], &mut c.q[tok(i)]);
            blk.key.forward(&c.a[tok(i)], &mut c.k[tok(i)]);
            blk.value.forward(&c.a[tok(i)], &mut c.v[tok(i)]);
        }
        let mut bias = [0.0];
        for ij in (0..n * n).filter(|&ij| active[ij]) {
            c.lnz_inv[ij] = blk.ln_bias.forward_into(&z[cell(ij)], &mut c.zn[cell(ij)], &mut c.lnz_xhat[cell(ij)]);
            blk.pair_bias.forward(&c.zn[cell(ij)], &mut bias);
            c.att[ij] = bias[0];
        }
        let mut upd = vec![0.0; ds.max(dp)];
        for i in (0..n).filter(|&i| mask[i]) {
            let row = i * n..(i + 1) * n;
            for j in 0..n {
                if active[i * n + j] {
                    c.att[i * n + j] += scale * dot(&c.q[tok(i)], &c.k[tok(j)]);
                }
            }
            masked_softmax(&mut c.att[row.clone()], &active[row]);
            for j in 0..n {
                let w = c.att[i * n + j];
                if w != 0.0 {
                    for d in 0..ds {
                        c.o[i * ds + d] += w * c.v[j * ds + d];
                    }
                }
            }
            blk.attn_out.forward(&c.o[tok(i)], &mut upd[..ds]);
            for d in 0..ds {
                s[i * ds + d] += upd[d];
            }
        }

        // single transition
        for i in (0..n).filter(|&i| mask[i]) {
            c.ln2_inv[i] = blk.ln_trans.forward_into(&s[tok(i)], &mut c.t[tok(i)], &mut c.ln2_xhat[tok(i)]);
            blk.trans.forward_into(
                &c.t[tok(i)],
                &mut upd[..ds],
                &mut c.pre1[i * hs..(i + 1) * hs],
                &mut c.act1[i * hs..(i + 1) * hs],
            );
            for d in 0..ds {
                s[i * ds + d] += upd[d];
            }
        }

        // outer product into the pair representation
        for i in (0..n).filter(|&i| mask[i]) {
            c.ln3_inv[i] = blk.ln_outer.forward_into(&s[tok(i)], &mut c.c[tok(i)], &mut c.ln3_xhat[tok(i)]);
            blk.proj_a.forward(&c.c[tok(i)], &mut c.pa[i * co..(i + 1) * co]);
            blk.proj_b.forward(&c.c[tok(i)], &mut c.pb[i * co..(i + 1) * co]);
        }
        let mut op = vec![0.0; co * co];
        for ij in (0..n * n).filter(|&ij| active[ij]) {
            let (i, j) = (ij / n, ij % n);
            for p in 0..co {
                for q in 0..co {
                    op[p * co + q] = c.pa[i * co + p] * c.pb[j * co + q];
                }
            }
            blk.outer_out.forward(&op, &mut upd[..dp]);
            for d in 0..dp {
                z[ij * dp + d] += upd[d];
            }
        }

        // pair transition
        for ij in (0..n * n).filter(|&ij| active[ij]) {
            c.lnp_inv[ij] = blk.ln_pair.forward_into(&z[cell(ij)], &mut c.u[cell(ij)], &mut c.lnp_xhat[cell(ij)]);
            blk.pair_trans.forward_into(
                &c.u[cell(ij)],
                &mut upd[..dp],
                &mut c.ppre[ij * hp..(ij + 1) * hp],
                &mut c.pact[ij * hp..(ij + 1) * hp],
            );
            for d in 0..dp {
                z[ij * dp + d] += upd[d];
            }
        }
        c
    }

    /// Back-propagates output gradients; accumulates parameter gradients into
    /// `grad` and returns gradients with respect to the input `s` and `z`.
    pub fn backward(
        &self,
        trace: &EncoderTrace,
        d_s: &[f64],
        d_z: &[f64],
        grad: &mut PairEncoder,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut gs = d_s.to_vec();
        let mut gz = d_z.to_vec();
        for (b, blk) in self.blocks.iter().enumerate().rev() {
            self.block_backward(blk, &trace.blocks[b], trace, &mut gs, &mut gz, &mut grad.blocks[b]);
        }
        (gs, gz)
    }

    fn block_backward(
        &self,
        blk: &EncoderBlock,
        c: &BlockCache,
        trace: &EncoderTrace,
        gs: &mut [f64],
        gz: &mut [f64],
        g: &mut EncoderBlock,
    ) {
        let n = trace.n;
        let (active, mask) = (&trace.active, &trace.mask);
        let ds = self.config.d_single;
        let dp = self.config.d_pair;
        let co = self.config.outer_dim;
        let hs = blk.trans.hidden_dim();
        let hp = blk.pair_trans.hidden_dim();
        let scale = 1.0 / (ds as f64).sqrt();
        let tok = |i: usize| i * ds..(i + 1) * ds;
        let cell = |ij: usize| ij * dp..(ij + 1) * dp;

        // pair transition
        let mut dupd = vec![0.0; ds.max(dp)];
        let mut du = vec![0.0; dp];
        for ij in (0..n * n).filter(|&ij| active[ij]) {
            dupd[..dp].copy_from_slice(&gz[cell(ij)]);
            du.fill(0.0);
            blk.pair_trans.backward_from(
                &c.u[cell(ij)],
                &c.ppre[ij * hp..(ij + 1) * hp],
                &c.pact[ij * hp..(ij + 1) * hp],
                &dupd[..dp],
                &mut g.pair_trans,
                &mut du,
            );
            blk.ln_pair.backward_from(&c.lnp_xhat[cell(ij)], c.lnp_inv[ij], &du, &mut g.ln_pair, &mut gz[cell(ij)]);
        }

        // outer product
        let mut gpa = vec![0.0; n * co];
        let mut gpb = vec![0.0; n * co];
        let mut op = vec![0.0; co * co];
        let mut dop = vec![0.0; co * co];
        for ij in (0..n * n).filter(|&ij| active[ij]) {
            let (i, j) = (ij / n, ij % n);
            for p in 0..co {
                for q in 0..co {
                    op[p * co + q] = c.pa[i * co + p] * c.pb[j * co + q];
                }
            }
            dop.fill(0.0);
            blk.outer_out.backward(&op, &gz[cell(ij)], &mut g.outer_out, Some(&mut dop));
            for p in 0..co {
                for q in 0..co {
                    gpa[i * co + p] += dop[p * co + q] * c.pb[j * co + q];
                    gpb[j * co + q] += dop[p * co + q] * c.pa[i * co + p];
                }
            }
        }
        let mut dc = vec![0.0; ds];
        for i in (0..n).filter(|&i| mask[i]) {
            dc.fill(0.0);
            blk.proj_a.backward(&c.c[tok(i)], &gpa[i * co..(i + 1) * co], &mut g.proj_a, Some(&mut dc));
            blk.proj_b.backward(&c.c[tok(i)], &gpb[i * co..(i + 1) * co], &mut g.proj_b, Some(&mut dc));
            blk.ln_outer.backward_from(&c.ln3_xhat[tok(i)], c.ln3_inv[i], &dc, &mut g.ln_outer, &mut gs[tok(i)]);
        }

        // single transition
        for i in (0..n).filter(|&i| mask[i]) {
            dupd[..ds].copy_from_slice(&gs[tok(i)]);
            dc.fill(0.0);
            blk.trans.backward_from(
                &c.t[tok(i)],
                &c.pre1[i * hs..(i + 1) * hs],
                &c.act1[i * hs..(i + 1) * hs],
                &dupd[..ds],
                &mut g.trans,
                &mut dc,
            );
            blk.ln_trans.backward_from(&c.ln2_xhat[tok(i)], c.ln2_inv[i], &dc, &mut g.ln_trans, &mut gs[tok(i)]);
        }

        // attention
        let mut gq = vec![0.0; n * ds];
        let mut gk = vec![0.0; n * ds];
        let mut gv = vec![0.0; n * ds];
        let mut d_o = vec![0.0; ds];
        let mut datt = vec![0.0; n];
        let mut dzn = vec![0.0; dp];
        for i in (0..n).filter(|&i| mask[i]) {
            d_o.fill(0.0);
            blk.attn_out.backward(&c.o[tok(i)], &gs[tok(i)], &mut g.attn_out, Some(&mut d_o));
            let mut weighted = 0.0;
            for j in 0..n {
                let w = c.att[i * n + j];
                datt[j] = 0.0;
                if active[i * n + j] {
                    datt[j] = dot(&d_o, &c.v[tok(j)]);
                    weighted += w * datt[j];
                    for d in 0..ds {
                        gv[j * ds + d] += w * d_o[d];
                    }
                }
            }
            for j in (0..n).filter(|&j| active[i * n + j]) {
                let ij = i * n + j;
                let dl = c.att[ij] * (datt[j] - weighted);
                if dl == 0.0 {
                    continue;
                }
                for d in 0..ds {
                    gq[i * ds + d] += scale * dl * c.k[j * ds + d];
                    gk[j * ds + d] += scale * dl * c.q[i * ds + d];
                }
                dzn.fill(0.0);
                blk.pair_bias.backward(&c.zn[cell(ij)], &[dl], &mut g.pair_bias, Some(&mut dzn));
                blk.ln_bias.backward_from(
                    &c.lnz_xhat[cell(ij)],
                    c.lnz_inv[ij],
                    &dzn,
                    &mut g.ln_bias,
                    &mut gz[cell(ij)],
                );
            }
        }
        for i in (0..n).filter(|&i| mask[i]) {
            dc.fill(0.0);
            blk.query.backward(&c.a[tok(i)], &gq[tok(i)], &mut g.query, Some(&mut dc));
            blk.key.backward(&c.a[tok(i)], &gk[tok(i)], &mut g.key, Some(&mut dc));
            blk.value.backward(&c.a[tok(i)], &gv[tok(i)], &mut g.value, Some(&mut dc));
            blk.ln_attn.backward_from(&c.ln1_xhat[tok(i)], c.ln1_inv[i], &dc, &mut g.ln_attn, &mut gs[tok(i)]);
        }
    }
}

impl Params for PairEncoder {
    fn visit<'a>(&'a self, p: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(p, &format!("block{i}")), f);
        }
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(p, &format!("block{i}")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::{flatten, unflatten, zero_all};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> EncoderConfig {
        EncoderConfig { d_single: 4, d_pair: 3, n_blocks: 2, transition_factor: 2, outer_dim: 2 }
    }

    fn random_reps(rng: &mut ChaCha8Rng, cfg: &EncoderConfig, lig: Vec<bool>) -> TokenReps {
        let mut r = TokenReps::zeros(lig, cfg.d_single, cfg.d_pair);
        r.s.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        r.z.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        r
    }

    #[test]
    fn zero_outputs_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EncoderConfig::default();
        let mut enc = PairEncoder::new(cfg, &mut rng);
        enc.zero_residual_outputs();
        let reps = random_reps(&mut rng, &cfg, vec![false, false, true, true, true]);
        assert_eq!(enc.apply(&reps).unwrap(), reps);
    }

    #[test]
    fn masked_rows_are_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = small();
        let enc = PairEncoder::new(cfg, &mut rng);
        let mut reps = random_reps(&mut rng, &cfg, vec![false, true, true, true]);
        reps.single_mask[2] = false;
        let out = enc.apply(&reps).unwrap();
        assert_eq!(out.s_row(2), reps.s_row(2));
        for j in 0..4 {
            assert_eq!(out.z_cell(2, j), reps.z_cell(2, j));
            assert_eq!(out.z_cell(j, 2), reps.z_cell(j, 2));
        }
        assert_ne!(out.s_row(1), reps.s_row(1));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = small();
        let enc = PairEncoder::new(cfg, &mut rng);
        let mut reps = random_reps(&mut rng, &cfg, vec![false, true, true]);
        reps.pair_mask[1] = false;
        reps.pair_mask[3] = false;
        let ws: Vec<f64> = (0..reps.s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wz: Vec<f64> = (0..reps.z.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |e: &PairEncoder, r: &TokenReps| {
            let o = e.apply(r).unwrap();
            dot(&o.s, &ws) + dot(&o.z, &wz)
        };
        let (_, trace) = enc.forward(&reps).unwrap();
        let mut grad = enc.clone();
        zero_all(&mut grad);
        let (gs, gz) = enc.backward(&trace, &ws, &wz, &mut grad);

        let flat = flatten(&enc);
        let analytic = flatten(&grad);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..flat.len() {
            let mut e = enc.clone();
            let mut x = flat.clone();
            x[k] += h;
            unflatten(&mut e, &x).unwrap();
            let up = objective(&e, &reps);
            x[k] -= 2.0 * h;
            unflatten(&mut e, &x).unwrap();
            let down = objective(&e, &reps);
            let num = (up - down) / (2.0 * h);
            worst = worst.max((num - analytic[k]).abs());
        }
        assert!(worst < 1e-6, "param grad error {worst}");
        for (input, grads, is_s) in [(&reps.s, &gs, true), (&reps.z, &gz, false)] {
            for k in 0..input.len() {
                let mut r = reps.clone();
                let target = if is_s { &mut r.s } else { &mut r.z };
                target[k] += h;
                let up = objective(&enc, &r);
                let target = if is_s { &mut r.s } else { &mut r.z };
                target[k] -= 2.0 * h;
                let down = objective(&enc, &r);
                let num = (up - down) / (2.0 * h);
                assert!((num - grads[k]).abs() < 1e-6, "input grad {k}: {num} vs {}", grads[k]);
            }
        }
    }
}
