use aurascreen::model::layers::LN_EPS;
use aurascreen::model::{AffinityHead, HeadConfig, TokenReps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight-line recomputation of the head from its parameters.
fn oracle(head: &AffinityHead, r: &TokenReps) -> f64 {
    let n = r.n_tokens;
    let ln = |x: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / x.len() as f64;
        x.iter().enumerate().map(|(k, a)| (a - m) / (v + LN_EPS).sqrt() * g[k] + b[k]).collect()
    };
    let lin = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
        (0..b.len()).map(|o| b[o] + (0..x.len()).map(|k| w[o * x.len() + k] * x[k]).sum::<f64>()).collect()
    };
    let unit = |x: &[f64],
                lnl: &aurascreen::model::layers::LayerNorm,
                gate: &aurascreen::model::layers::Linear,
                mlp: &aurascreen::model::layers::Mlp| {
        let y = ln(x, &lnl.gamma.data, &lnl.beta.data);
        let g = sigmoid(lin(&gate.w.data, &gate.b.data, &y)[0]);
        let h: Vec<f64> = lin(&mlp.fc1.w.data, &mlp.fc1.b.data, &y).into_iter().map(gelu).collect();
        g * lin(&mlp.fc2.w.data, &mlp.fc2.b.data, &h)[0]
    };
    let live: Vec<usize> = (0..n).filter(|&i| r.single_mask[i]).collect();
    let np = live.iter().filter(|&&i| !r.is_ligand[i]).count() as f64;
    let nl = live.iter().filter(|&&i| r.is_ligand[i]).count() as f64;
    let raw = |i: usize| if r.is_ligand[i] { 2.0 * np / nl } else { 1.0 };
    let z: f64 = live.iter().map(|&i| (raw(i) / head.config.temperature).exp()).sum();
    let mut total = 0.0;
    for &i in &live {
        let single = unit(r.s_row(i), &head.ln_single, &head.gate_single, &head.mlp_single);
        let mut pair_sum = 0.0;
        let mut count = 0;
        for &j in &live {
            if r.pair_mask[i * n + j] && (r.is_ligand[i] || r.is_ligand[j]) {
                pair_sum += unit(r.z_cell(i, j), &head.ln_pair, &head.gate_pair, &head.mlp_pair);
                count += 1;
            }
        }
        let pair = if count > 0 { pair_sum / count as f64 } else { 0.0 };
        total += (raw(i) / head.config.temperature).exp() / z * (single + pair);
    }
    total
}

#[test]
fn hand_set_two_protein_one_ligand() {
    let cfg = HeadConfig { d_single: 2, d_pair: 2, hidden_single: 1, hidden_pair: 1, ..HeadConfig::default() };
    let mut head = AffinityHead::new(cfg, &mut ChaCha8Rng::seed_from_u64(0));
    for (gate, mlp) in [(&mut head.gate_single, &mut head.mlp_single), (&mut head.gate_pair, &mut head.mlp_pair)] {
        gate.w.data = vec![0.0, 0.0];
        mlp.fc1.w.data = vec![1.0, -1.0];
        mlp.fc1.b.data = vec![0.0];
        mlp.fc2.w.data = vec![1.0];
        mlp.fc2.b.data = vec![0.0];
    }
    let mut r = TokenReps::zeros(vec![false, false, true], 2, 2);
    r.s = vec![1.0, -1.0, -1.0, 1.0, 2.0, 0.0];
    for i in 0..3 {
        for j in 0..3 {
            let o = (i * 3 + j) * 2;
            r.z[o..o + 2].copy_from_slice(&[1.0, -1.0]);
        }
    }
    let o = (2 * 3) * 2;
    r.z[o..o + 2].copy_from_slice(&[-1.0, 1.0]);

    // Every row normalizes to (+h, -h) or (-h, +h); gates sit at one half.
    let h = 1.0 / (1.0 + LN_EPS).sqrt();
    let up = 0.5 * gelu(2.0 * h);
    let down = 0.5 * gelu(-2.0 * h);
    let per_token = [up + up, down + up, up + (down + up + up) / 3.0];
    let e = [1f64.exp(), 1f64.exp(), 4f64.exp()];
    let expected: f64 = per_token.iter().zip(&e).map(|(t, w)| t * w).sum::<f64>() / e.iter().sum::<f64>();

    let out = head.apply(&r).unwrap();
    assert_eq!(out.raw_weights, vec![1.0, 1.0, 4.0]);
    assert!((out.affinity - expected).abs() < 1e-12, "{} vs {expected}", out.affinity);
    assert!((oracle(&head, &r) - expected).abs() < 1e-12);
}

#[test]
fn matches_scalar_oracle_with_masks() {
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = HeadConfig { temperature: 0.7, ..HeadConfig::default() };
        let head = AffinityHead::new(cfg, &mut rng);
        let lig: Vec<bool> = (0..7).map(|i| i >= 4).collect();
        let mut r = TokenReps::zeros(lig, 16, 8);
        r.s.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
        r.z.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
        if seed % 2 == 1 {
            r.single_mask[1] = false;
            r.pair_mask[4 * 7 + 5] = false;
            r.pair_mask[5 * 7 + 4] = false;
        }
        let got = head.apply(&r).unwrap().affinity;
        let want = oracle(&head, &r);
        assert!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
    }
}
