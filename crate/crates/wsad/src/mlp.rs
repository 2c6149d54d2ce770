//! Two-layer regression network: FC1 -> ReLU -> Dropout -> FC2 -> Sigmoid.
//!
//! Forward produces per-segment anomaly scores plus the hidden
//! representations that clustering consumes; backward is exact reverse-mode
//! over both the score path and a gradient injected directly on the hidden
//! representations (the cluster-distance loss path). All math is f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weights and biases of the two-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// FC1 weights, `hidden_dim x input_dim` row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// FC2 weights, one row of `hidden_dim`.
    pub w2: Vec<f64>,
    pub b2: f64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
}

impl ModelParams {
    pub fn num_params(&self) -> usize {
        self.hidden_dim * self.input_dim + self.hidden_dim + self.hidden_dim + 1
    }

    /// Flattened view in declared order: W1, b1, W2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let hd = self.hidden_dim * self.input_dim;
        self.w1.copy_from_slice(&flat[..hd]);
        self.b1.copy_from_slice(&flat[hd..hd + self.hidden_dim]);
        self.w2.copy_from_slice(&flat[hd + self.hidden_dim..hd + 2 * self.hidden_dim]);
        self.b2 = flat[hd + 2 * self.hidden_dim];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    /// Inverted dropout, mask seeded for reproducibility.
    Train { dropout_seed: u64 },
    Eval,
}

/// Everything backward needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub num_segments: usize,
    /// Input features, `m x D` row-major.
    pub inputs: Vec<f64>,
    /// FC1 pre-activations, `m x H`.
    pub pre_act: Vec<f64>,
    /// Hidden representations fed to FC2, `m x H`: post-ReLU in eval mode,
    /// post-dropout (scaled by 1/(1-rate)) in train mode.
    pub hidden: Vec<f64>,
    /// Per-unit keep scales (0 or 1/(1-rate)); None in eval mode.
    pub dropout_scale: Option<Vec<f64>>,
    /// Sigmoid scores, strictly inside (0,1).
    pub scores: Vec<f64>,
}

/// Parameter gradients, same shapes as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn zeros(p: &ModelParams) -> Self {
        Gradients {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite()) && self.b2.is_finite()
    }
}

/// Adam optimizer state over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(p: &ModelParams, lr: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; p.num_params()],
            second_moment: vec![0.0; p.num_params()],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform init scaled by 1/sqrt(fan-in); biases zero. Deterministic in seed.
pub fn init_params(input_dim: usize, hidden_dim: usize, dropout_rate: f64, seed: u64) -> Result<ModelParams> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::InvalidConfig("input_dim and hidden_dim must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::InvalidConfig("dropout_rate must be in [0,1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound1 = 1.0 / (input_dim as f64).sqrt();
    let bound2 = 1.0 / (hidden_dim as f64).sqrt();
    let w1 = (0..hidden_dim * input_dim)
        .map(|_| rng.random_range(-bound1..bound1))
        .collect();
    let w2 = (0..hidden_dim).map(|_| rng.random_range(-bound2..bound2)).collect();
    Ok(ModelParams {
        w1,
        b1: vec![0.0; hidden_dim],
        w2,
        b2: 0.0,
        input_dim,
        hidden_dim,
        dropout_rate,
    })
}

/// Forward pass over a whole bag (`m x D` features, row-major).
pub fn forward(p: &ModelParams, features: &[f64], num_segments: usize, mode: ForwardMode) -> Result<ForwardCache> {
    let (d, h) = (p.input_dim, p.hidden_dim);
    if features.len() != num_segments * d {
        return Err(Error::ShapeMismatch(format!(
            "features has {} values, expected {}x{}",
            features.len(),
            num_segments,
            d
        )));
    }
    let dropout_scale = match mode {
        ForwardMode::Train { dropout_seed } if p.dropout_rate > 0.0 => {
            let keep = 1.0 - p.dropout_rate;
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            Some(
                (0..num_segments * h)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect::<Vec<f64>>(),
            )
        }
        ForwardMode::Train { .. } => Some(vec![1.0; num_segments * h]),
        ForwardMode::Eval => None,
    };

    let mut pre_act = vec![0.0; num_segments * h];
    let mut hidden = vec![0.0; num_segments * h];
    let mut scores = vec![0.0; num_segments];
    for j in 0..num_segments {
        let x = &features[j * d..(j + 1) * d];
        let mut logit = p.b2;
        for k in 0..h {
            let mut z = p.b1[k];
            let row = &p.w1[k * d..(k + 1) * d];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            pre_act[j * h + k] = z;
            let mut a = z.max(0.0);
            if let Some(scale) = &dropout_scale {
                a *= scale[j * h + k];
            }
            hidden[j * h + k] = a;
            logit += p.w2[k] * a;
        }
        scores[j] = sigmoid(logit);
    }
    Ok(ForwardCache {
        num_segments,
        inputs: features.to_vec(),
        pre_act,
        hidden,
        dropout_scale,
        scores,
    })
}

/// Exact reverse-mode gradients with respect to all parameters, summing the
/// score-loss path (`dloss_dscores`) and the hidden-representation path
/// (`dloss_dhidden`, `m x H`, addressing [`ForwardCache::hidden`]).
pub fn backward(
    p: &ModelParams,
    cache: &ForwardCache,
    dloss_dscores: &[f64],
    dloss_dhidden: &[f64],
) -> Result<Gradients> {
    let (d, h, m) = (p.input_dim, p.hidden_dim, cache.num_segments);
    if dloss_dscores.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "dloss_dscores has length {}, expected {m}",
            dloss_dscores.len()
        )));
    }
    if dloss_dhidden.len() != m * h {
        return Err(Error::ShapeMismatch(format!(
            "dloss_dhidden has {} values, expected {m}x{h}",
            dloss_dhidden.len()
        )));
    }
    if cache.pre_act.len() != m * h || cache.inputs.len() != m * d {
        return Err(Error::ShapeMismatch("cache does not match params".into()));
    }

    let mut g = Gradients::zeros(p);
    for j in 0..m {
        let s = cache.scores[j];
        let dz2 = dloss_dscores[j] * s * (1.0 - s);
        g.b2 += dz2;
        let x = &cache.inputs[j * d..(j + 1) * d];
        for k in 0..h {
            let hv = cache.hidden[j * h + k];
            g.w2[k] += dz2 * hv;
            // both incoming paths meet at the (possibly dropped) hidden unit
            let dh = dz2 * p.w2[k] + dloss_dhidden[j * h + k];
            let da = match &cache.dropout_scale {
                Some(scale) => dh * scale[j * h + k],
                None => dh,
            };
            if cache.pre_act[j * h + k] > 0.0 {
                g.b1[k] += da;
                let row = &mut g.w1[k * d..(k + 1) * d];
                for (gw, xi) in row.iter_mut().zip(x) {
                    *gw += da * xi;
                }
            }
        }
    }
    Ok(g)
}

/// One bias-corrected Adam update. Errors on non-finite gradients so the
/// trainer can halt instead of corrupting the parameters.
pub fn adam_step(p: &ModelParams, g: &Gradients, state: &AdamState) -> Result<(ModelParams, AdamState)> {
    if !g.is_finite() {
        return Err(Error::NumericFailure("adam_step: non-finite gradient"));
    }
    let flat_g = g.flatten();
    if flat_g.len() != state.first_moment.len() {
        return Err(Error::ShapeMismatch("gradient does not match optimizer state".into()));
    }
    let mut new_state = state.clone();
    new_state.step += 1;
    let t = new_state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let mut flat_p = p.flatten();
    for i in 0..flat_g.len() {
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * flat_g[i];
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * flat_g[i] * flat_g[i];
        new_state.first_moment[i] = m;
        new_state.second_moment[i] = v;
        flat_p[i] -= state.lr * (m / bc1) / ((v / bc2).sqrt() + state.epsilon);
    }
    let mut new_p = p.clone();
    new_p.assign_from_flat(&flat_p);
    Ok((new_p, new_state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_params(d: usize, h: usize, dropout: f64, seed: u64) -> ModelParams {
        init_params(d, h, dropout, seed).unwrap()
    }

    fn random_features(m: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = random_params(4, 8, 0.0, 7);
        let b = random_params(4, 8, 0.0, 7);
        assert_eq!(a, b);
        assert!(a.b1.iter().all(|&v| v == 0.0));
        assert_eq!(a.b2, 0.0);
        let bound = 1.0 / 2.0; // 1/sqrt(4)
        assert!(a.w1.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_params_score_half() {
        let mut p = random_params(3, 5, 0.0, 1);
        p.w1.iter_mut().for_each(|v| *v = 0.0);
        p.w2.iter_mut().for_each(|v| *v = 0.0);
        let feats = random_features(4, 3, 2);
        let cache = forward(&p, &feats, 4, ForwardMode::Eval).unwrap();
        assert!(cache.scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn eval_forward_deterministic_and_in_open_interval() {
        let p = random_params(6, 9, 0.5, 3);
        let feats = random_features(7, 6, 4);
        let a = forward(&p, &feats, 7, ForwardMode::Eval).unwrap();
        let b = forward(&p, &feats, 7, ForwardMode::Eval).unwrap();
        assert_eq!(a.scores, b.scores);
        assert!(a.dropout_scale.is_none());
        assert!(a.scores.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn zero_loss_grads_give_zero_gradients() {
        let p = random_params(3, 4, 0.0, 5);
        let feats = random_features(5, 3, 6);
        let cache = forward(&p, &feats, 5, ForwardMode::Eval).unwrap();
        let g = backward(&p, &cache, &vec![0.0; 5], &vec![0.0; 5 * 4]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    /// Scalar functional of (scores, hidden) with fixed coefficients, used
    /// as an independent target for finite differences.
    fn functional(scores: &[f64], hidden: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let mut v = 0.0;
        for (s, c) in scores.iter().zip(a) {
            v += c * s;
        }
        for (h, c) in hidden.iter().zip(b) {
            v += 0.5 * c * h * h;
        }
        v
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (d, h, m) = (3, 4, 5);
        let step = 1e-5;
        for seed in 0..20u64 {
            let p = random_params(d, h, 0.0, 100 + seed);
            let feats = random_features(m, d, 200 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let a: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..m * h).map(|_| rng.random_range(-1.0..1.0)).collect();

            let cache = forward(&p, &feats, m, ForwardMode::Eval).unwrap();
            let dscores: Vec<f64> = a.clone();
            let dhidden: Vec<f64> = b.iter().zip(&cache.hidden).map(|(c, hv)| c * hv).collect();
            let analytic = backward(&p, &cache, &dscores, &dhidden).unwrap().flatten();

            let flat = p.flatten();
            let mut max_rel = 0.0f64;
            for i in 0..flat.len() {
                let probe = |delta: f64| {
                    let mut q = p.clone();
                    let mut f = flat.clone();
                    f[i] += delta;
                    q.assign_from_flat(&f);
                    let c = forward(&q, &feats, m, ForwardMode::Eval).unwrap();
                    functional(&c.scores, &c.hidden, &a, &b)
                };
                let fd = (probe(step) - probe(-step)) / (2.0 * step);
                let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max((analytic[i] - fd).abs() / denom);
            }
            assert!(max_rel < 1e-4, "seed {seed}: max rel err {max_rel}");
        }
    }

    #[test]
    fn score_path_matches_hand_derived_backprop() {
        // one segment, D=2, H=2, all quantities worked out symbolically here
        let p = ModelParams {
            w1: vec![0.3, -0.2, 0.5, 0.4],
            b1: vec![0.1, -0.05],
            w2: vec![0.7, -0.6],
            b2: 0.2,
            input_dim: 2,
            hidden_dim: 2,
            dropout_rate: 0.0,
        };
        let x = [1.5, -0.5];
        let cache = forward(&p, &x, 1, ForwardMode::Eval).unwrap();
        let dscore = 1.0;
        let g = backward(&p, &cache, &[dscore], &[0.0, 0.0]).unwrap();

        // independent symbolic derivation
        let z1 = [
            p.w1[0] * x[0] + p.w1[1] * x[1] + p.b1[0],
            p.w1[2] * x[0] + p.w1[3] * x[1] + p.b1[1],
        ];
        let a = [z1[0].max(0.0), z1[1].max(0.0)];
        let logit = p.w2[0] * a[0] + p.w2[1] * a[1] + p.b2;
        let s = 1.0 / (1.0 + (-logit).exp());
        let dz2 = s * (1.0 - s);
        let da = [dz2 * p.w2[0], dz2 * p.w2[1]];
        let dz1 = [
            if z1[0] > 0.0 { da[0] } else { 0.0 },
            if z1[1] > 0.0 { da[1] } else { 0.0 },
        ];
        let expect_w1 = [dz1[0] * x[0], dz1[0] * x[1], dz1[1] * x[0], dz1[1] * x[1]];

        assert!((g.b2 - dz2).abs() < 1e-12);
        assert!((g.w2[0] - dz2 * a[0]).abs() < 1e-12);
        assert!((g.w2[1] - dz2 * a[1]).abs() < 1e-12);
        for i in 0..4 {
            assert!((g.w1[i] - expect_w1[i]).abs() < 1e-12);
        }
        assert!((g.b1[0] - dz1[0]).abs() < 1e-12);
        assert!((g.b1[1] - dz1[1]).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_unbiased_in_expectation() {
        let p = random_params(4, 6, 0.6, 9);
        let feats = random_features(3, 4, 10);
        let eval = forward(&p, &feats, 3, ForwardMode::Eval).unwrap();
        let mut acc = vec![0.0; eval.hidden.len()];
        let trials = 20_000u64;
        for t in 0..trials {
            let c = forward(&p, &feats, 3, ForwardMode::Train { dropout_seed: t }).unwrap();
            for (s, hv) in acc.iter_mut().zip(&c.hidden) {
                *s += hv;
            }
        }
        for (mean, ev) in acc.iter().map(|s| s / trials as f64).zip(&eval.hidden) {
            if ev.abs() > 1e-9 {
                assert!((mean - ev).abs() / ev.abs() < 0.02, "mean {mean} vs eval {ev}");
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let p = random_params(3, 4, 0.0, 11);
        let s = AdamState::new(&p, 1e-3);
        let g = Gradients::zeros(&p);
        let (p2, s2) = adam_step(&p, &g, &s).unwrap();
        assert_eq!(p, p2);
        assert_eq!(s2.step, 1);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // first bias-corrected step moves by ~lr regardless of gradient scale
        let mut p = random_params(1, 1, 0.0, 12);
        p.w1[0] = 2.0;
        let s = AdamState::new(&p, 1e-3);
        let mut g = Gradients::zeros(&p);
        g.w1[0] = 10.0;
        let (p2, _) = adam_step(&p, &g, &s).unwrap();
        let delta = p.w1[0] - p2.w1[0];
        assert!((delta - 1e-3).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn adam_is_deterministic() {
        let p = random_params(2, 3, 0.0, 13);
        let s = AdamState::new(&p, 5e-5);
        let mut g = Gradients::zeros(&p);
        g.w2[0] = 0.37;
        g.b2 = -0.4;
        let a = adam_step(&p, &g, &s).unwrap();
        let b = adam_step(&p, &g, &s).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let p = random_params(2, 2, 0.0, 14);
        let s = AdamState::new(&p, 1e-3);
        let mut g = Gradients::zeros(&p);
        g.b2 = f64::NAN;
        assert!(matches!(adam_step(&p, &g, &s), Err(Error::NumericFailure(_))));
    }
}
