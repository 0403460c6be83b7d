//! Primitive layers over row slices, each with a hand-written backward pass.
//!
//! Backward functions accumulate (`+=`) into parameter gradients and input
//! gradients so that callers can sum contributions from many rows.

use rand::Rng;

use super::tensor::{join, Params, Tensor};

pub const LN_EPS: f64 = 1e-5;

/// Affine map `y = W x + b`, `W` stored row-major as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Linear {
        Linear { w: Tensor::zeros(&[output, input]), b: Tensor::zeros(&[output]) }
    }

    /// Uniform Glorot-style init, zero bias.
    pub fn random<R: Rng>(input: usize, output: usize, rng: &mut R) -> Linear {
        let scale = (6.0 / (input + output) as f64).sqrt();
        Linear { w: Tensor::uniform(&[output, input], scale, rng), b: Tensor::zeros(&[output]) }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        let n_in = self.input_dim();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w.data[o * n_in..(o + 1) * n_in];
            *yo = self.b.data[o] + dot(row, x);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.output_dim()];
        self.forward(x, &mut y);
        y
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy`, and `dx += Wᵀ dy` when `dx` is given.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        let n_in = self.input_dim();
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b.data[o] += g;
            let grow = &mut grad.w.data[o * n_in..(o + 1) * n_in];
            for (gw, &xi) in grow.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.w.data[o * n_in..(o + 1) * n_in];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

impl Params for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "b"), &self.b);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "w"), &mut self.w);
        f(join(prefix, "b"), &mut self.b);
    }
}

/// Linear map without a parameterized bias. Used for attention keys, where a
/// bias shifts every logit of a query equally and never reaches the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection(Linear);

impl Projection {
    pub fn random<R: Rng>(input: usize, output: usize, rng: &mut R) -> Projection {
        Projection(Linear::random(input, output, rng))
    }

    pub fn weight(&self) -> &Tensor {
        &self.0.w
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        self.0.forward(x, y);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.apply(x)
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Projection, dx: Option<&mut [f64]>) {
        self.0.backward(x, dy, &mut grad.0, dx);
    }
}

impl Params for Projection {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w"), &self.0.w);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "w"), &mut self.0.w);
    }
}

/// Layer normalization over the feature dimension with learned scale and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// What the backward pass needs from a layer-norm forward.
#[derive(Debug, Clone, Default)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub inv_std: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> LayerNorm {
        LayerNorm { gamma: Tensor::filled(&[dim], 1.0), beta: Tensor::zeros(&[dim]) }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) -> LnCache {
        let mut xhat = vec![0.0; x.len()];
        let inv_std = self.forward_into(x, y, &mut xhat);
        LnCache { xhat, inv_std }
    }

    /// Writes the output to `y` and the normalized input to `xhat`; returns 1/std.
    pub fn forward_into(&self, x: &[f64], y: &mut [f64], xhat: &mut [f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        for k in 0..x.len() {
            xhat[k] = (x[k] - mean) * inv_std;
            y[k] = self.gamma.data[k] * xhat[k] + self.beta.data[k];
        }
        inv_std
    }

    pub fn apply(&self, x: &[f64]) -> (Vec<f64>, LnCache) {
        let mut y = vec![0.0; x.len()];
        let c = self.forward(x, &mut y);
        (y, c)
    }

    pub fn backward(&self, cache: &LnCache, dy: &[f64], grad: &mut LayerNorm, dx: &mut [f64]) {
        self.backward_from(&cache.xhat, cache.inv_std, dy, grad, dx);
    }

    pub fn backward_from(&self, xhat: &[f64], inv_std: f64, dy: &[f64], grad: &mut LayerNorm, dx: &mut [f64]) {
        let d = dy.len();
        let n = d as f64;
        let (mut mean_d, mut mean_dx) = (0.0, 0.0);
        for k in 0..d {
            grad.gamma.data[k] += dy[k] * xhat[k];
            grad.beta.data[k] += dy[k];
            let g = dy[k] * self.gamma.data[k];
            mean_d += g;
            mean_dx += g * xhat[k];
        }
        mean_d /= n;
        mean_dx /= n;
        for k in 0..d {
            let g = dy[k] * self.gamma.data[k];
            dx[k] += inv_std * (g - mean_d - xhat[k] * mean_dx);
        }
    }
}

impl Params for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place softmax over the entries selected by `keep`; others become 0.
/// Returns false when nothing is selected.
pub fn masked_softmax(logits: &mut [f64], keep: &[bool]) -> bool {
    let max = logits.iter().zip(keep).filter(|(_, &k)| k).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        logits.iter_mut().for_each(|l| *l = 0.0);
        return false;
    }
    let mut total = 0.0;
    for (l, &k) in logits.iter_mut().zip(keep) {
        *l = if k { (*l - max).exp() } else { 0.0 };
        total += *l;
    }
    logits.iter_mut().for_each(|l| *l /= total);
    true
}

/// Two-layer perceptron `W2 gelu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
}

impl Mlp {
    pub fn random<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Mlp {
        Mlp { fc1: Linear::random(input, hidden, rng), fc2: Linear::random(hidden, output, rng) }
    }

    /// Output layer zeroed so the block starts as an identity residual.
    pub fn residual_init<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Mlp {
        Mlp { fc1: Linear::random(input, hidden, rng), fc2: Linear::zeros(hidden, output) }
    }

    pub fn hidden_dim(&self) -> usize {
        self.fc1.output_dim()
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) -> MlpCache {
        let h = self.hidden_dim();
        let mut cache = MlpCache { pre: vec![0.0; h], act: vec![0.0; h] };
        self.forward_into(x, y, &mut cache.pre, &mut cache.act);
        cache
    }

    pub fn forward_into(&self, x: &[f64], y: &mut [f64], pre: &mut [f64], act: &mut [f64]) {
        self.fc1.forward(x, pre);
        for (a, &p) in act.iter_mut().zip(pre.iter()) {
            *a = gelu(p);
        }
        self.fc2.forward(act, y);
    }

    pub fn backward(&self, x: &[f64], cache: &MlpCache, dy: &[f64], grad: &mut Mlp, dx: &mut [f64]) {
        self.backward_from(x, &cache.pre, &cache.act, dy, grad, dx);
    }

    pub fn backward_from(&self, x: &[f64], pre: &[f64], act: &[f64], dy: &[f64], grad: &mut Mlp, dx: &mut [f64]) {
        let mut dact = vec![0.0; act.len()];
        self.fc2.backward(act, dy, &mut grad.fc2, Some(&mut dact));
        for (d, &p) in dact.iter_mut().zip(pre) {
            *d *= gelu_grad(p);
        }
        self.fc1.backward(x, &dact, &mut grad.fc1, Some(dx));
    }
}

impl Params for Mlp {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn activation_derivatives() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            assert!((gelu_grad(x) - numeric(&gelu, x)).abs() < 1e-8);
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-800.0)).is_finite());
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let ln = LayerNorm::new(4);
        let (y, _) = ln.apply(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ln = LayerNorm::new(5);
        ln.gamma = Tensor::uniform(&[5], 1.0, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |x: &[f64]| dot(&ln.apply(x).0, &r);
        let (_, cache) = ln.apply(&x);
        let mut g = LayerNorm::new(5);
        let mut dx = vec![0.0; 5];
        ln.backward(&cache, &r, &mut g, &mut dx);
        for k in 0..5 {
            let mut xp = x.clone();
            xp[k] += 1e-6;
            let mut xm = x.clone();
            xm[k] -= 1e-6;
            let n = (f(&xp) - f(&xm)) / 2e-6;
            assert!((n - dx[k]).abs() < 1e-7, "{k}: {n} vs {}", dx[k]);
        }
    }

    #[test]
    fn softmax_respects_mask() {
        let mut l = vec![1.0, 1000.0, 1.0];
        assert!(masked_softmax(&mut l, &[true, false, true]));
        assert_eq!(l, vec![0.5, 0.0, 0.5]);
        let mut l = vec![1.0, 2.0];
        assert!(!masked_softmax(&mut l, &[false, false]));
        assert_eq!(l, vec![0.0, 0.0]);
    }
}
