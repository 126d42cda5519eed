//! Tanh-squashed Gaussian actor with reparameterized sampling, and the
//! automatically tuned entropy temperature.
//!
//! For pre-squash sample `u = μ + σ⊙ε` with `ε ~ N(0, I)`, the action is
//! `a = scale⊙tanh(u) + offset` and its log-density is
//!
//! ```text
//! log π(a|s) = Σ_j [ −ε_j²/2 − log σ_j − log(2π)/2 − log scale_j − log(1 − tanh² u_j) ]
//! ```
//!
//! with `log(1 − tanh² u) = 2(log 2 − u − softplus(−2u))`, which stays finite
//! when `tanh u` rounds to ±1.

use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::{AdamConfig, AdamState, Gradients, Mlp, Tape};
use crate::{Error, Result};

pub const DEFAULT_LOG_STD_BOUNDS: (f64, f64) = (-5.0, 2.0);

/// Actions never reach the box boundary: `|tanh|` is capped at `1 − SQUASH_MARGIN`.
const SQUASH_MARGIN: f64 = 1e-12;

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 − tanh²(u))`, stable for large |u|.
#[inline]
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussianPolicy {
    /// Outputs `2·d_a` values: means first, then raw log-stds.
    pub net: Mlp,
    pub log_std_bounds: (f64, f64),
    pub action_scale: Vec<f64>,
    pub action_offset: Vec<f64>,
}

/// A batch of reparameterized samples plus everything needed to
/// differentiate through them.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    tape: Tape,
    noise: Array2<f64>,
    pre_squash: Array2<f64>,
    std: Array2<f64>,
    /// 1 where the raw log-std was inside the clamp bounds, else 0.
    log_std_active: Array2<f64>,
}

impl SquashedGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        low: &[f64],
        high: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::config("action bounds must be non-empty and of equal length"));
        }
        if low.iter().zip(high).any(|(l, h)| !(l < h)) {
            return Err(Error::config("action box needs low < high in every dimension"));
        }
        let action_dim = low.len();
        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        dims.push(2 * action_dim);
        Ok(Self {
            net: Mlp::new(&dims, rng)?,
            log_std_bounds: DEFAULT_LOG_STD_BOUNDS,
            action_scale: low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).collect(),
            action_offset: low.iter().zip(high).map(|(l, h)| 0.5 * (h + l)).collect(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_scale.len()
    }

    fn squash(&self, j: usize, u: f64) -> f64 {
        let t = u.tanh().clamp(-1.0 + SQUASH_MARGIN, 1.0 - SQUASH_MARGIN);
        self.action_scale[j] * t + self.action_offset[j]
    }

    /// Draws standard normal noise of shape `(rows, d_a)`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.action_dim()), || rng.sample(StandardNormal))
    }

    /// Reparameterized batch sample: `a = scale·tanh(μ + σ⊙noise) + offset`.
    pub fn sample_batch(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<PolicySample> {
        let da = self.action_dim();
        if noise.ncols() != da || noise.nrows() != states.nrows() {
            return Err(Error::DimensionMismatch {
                context: "policy noise",
                expected: da,
                actual: noise.ncols(),
            });
        }
        let (out, tape) = self.net.forward(states)?;
        let n = states.nrows();
        let (lo, hi) = self.log_std_bounds;
        let mean = out.slice(s![.., ..da]);
        let raw_log_std = out.slice(s![.., da..]);

        let log_std = raw_log_std.mapv(|v| v.clamp(lo, hi));
        let log_std_active = raw_log_std.mapv(|v| if (lo..=hi).contains(&v) { 1.0 } else { 0.0 });
        let std = log_std.mapv(f64::exp);
        let pre_squash = &mean + &(&std * &noise);

        let mut actions = Array2::zeros((n, da));
        let mut log_probs = Array1::zeros(n);
        let norm = 0.5 * (2.0 * PI).ln();
        for i in 0..n {
            let mut lp = 0.0;
            for j in 0..da {
                let u = pre_squash[[i, j]];
                let e = noise[[i, j]];
                actions[[i, j]] = self.squash(j, u);
                lp += -0.5 * e * e - log_std[[i, j]] - norm - self.action_scale[j].ln() - log_one_minus_tanh_sq(u);
            }
            log_probs[i] = lp;
        }
        Ok(PolicySample {
            actions,
            log_probs,
            tape,
            noise: noise.to_owned(),
            pre_squash,
            std,
            log_std_active,
        })
    }

    /// Parameter gradients of a loss `L(actions, log_probs)` given
    /// `∂L/∂actions` and `∂L/∂log_probs`.
    pub fn backward(
        &self,
        sample: &PolicySample,
        d_actions: ArrayView2<f64>,
        d_log_probs: ArrayView1<f64>,
    ) -> Result<Gradients> {
        let (n, da) = sample.actions.dim();
        if d_actions.dim() != (n, da) || d_log_probs.len() != n {
            return Err(Error::DimensionMismatch {
                context: "policy backward",
                expected: n * da,
                actual: d_actions.len(),
            });
        }
        let mut d_out = Array2::zeros((n, 2 * da));
        for i in 0..n {
            for j in 0..da {
                let u = sample.pre_squash[[i, j]];
                let t = u.tanh();
                let du = d_actions[[i, j]] * self.action_scale[j] * (1.0 - t * t) + d_log_probs[i] * 2.0 * t;
                d_out[[i, j]] = du;
                let d_log_std = du * sample.std[[i, j]] * sample.noise[[i, j]] - d_log_probs[i];
                d_out[[i, da + j]] = d_log_std * sample.log_std_active[[i, j]];
            }
        }
        Ok(self.net.backward(&sample.tape, d_out.view())?.params)
    }

    /// Single-state sample.
    pub fn sample_action(&self, state: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        let states = ArrayView2::from_shape((1, state.len()), state).expect("contiguous");
        let noise = ArrayView2::from_shape((1, noise.len()), noise).expect("contiguous");
        let s = self.sample_batch(states, noise)?;
        Ok((s.actions.row(0).to_vec(), s.log_probs[0]))
    }

    /// Deterministic action `scale·tanh(μ) + offset` for a batch.
    pub fn mean_actions(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        let da = self.action_dim();
        let out = self.net.predict(states)?;
        let mut actions = out.slice(s![.., ..da]).to_owned();
        for mut row in actions.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.squash(j, *v);
            }
        }
        Ok(actions)
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let states = ArrayView2::from_shape((1, state.len()), state).expect("contiguous");
        Ok(self.mean_actions(states)?.row(0).to_vec())
    }
}

/// Trainable entropy coefficient `α = exp(log_alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTemperature {
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub optimizer: AdamState,
}

impl EntropyTemperature {
    pub fn new(initial_alpha: f64, target_entropy: f64, config: AdamConfig) -> Result<Self> {
        if !(initial_alpha > 0.0 && initial_alpha.is_finite()) {
            return Err(Error::config(format!(
                "initial alpha must be positive, got {initial_alpha}"
            )));
        }
        Ok(Self {
            log_alpha: initial_alpha.ln(),
            target_entropy,
            optimizer: AdamState::new(config, &[1]),
        })
    }

    /// Target entropy `−d_a`.
    pub fn default_target(action_dim: usize) -> f64 {
        -(action_dim as f64)
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// One Adam step on `−log_alpha · mean(log_prob + target_entropy)`.
    pub fn update(&mut self, batch_log_probs: ArrayView1<f64>) -> Result<()> {
        if batch_log_probs.is_empty() {
            return Err(Error::config("temperature update needs a non-empty batch"));
        }
        let mean = batch_log_probs.mean().expect("non-empty");
        let grad = -(mean + self.target_entropy);
        self.optimizer.step_scalar(&mut self.log_alpha, grad)
    }
}
