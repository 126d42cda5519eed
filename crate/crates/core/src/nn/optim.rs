//! Adam and Polyak averaging.

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-tensor first and second moments plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl AdamState {
    /// Zero moments for tensors of the given lengths.
    pub fn new(config: AdamConfig, tensor_lens: &[usize]) -> Self {
        Self {
            config,
            first_moment: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        }
    }

    /// Moments for every weight and bias tensor of `net`, in layer order.
    pub fn for_net(config: AdamConfig, net: &Mlp) -> Self {
        let lens: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect();
        Self::new(config, &lens)
    }

    /// One bias-corrected update. `tensors` pairs each parameter slice with
    /// its gradient and the layer index reported on failure. Gradients are
    /// all checked before anything is written.
    fn apply(&mut self, tensors: &mut [(usize, &mut [f64], &[f64])]) -> Result<()> {
        if tensors.len() != self.first_moment.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer tensor count",
                expected: self.first_moment.len(),
                actual: tensors.len(),
            });
        }
        for (k, (layer, p, g)) in tensors.iter().enumerate() {
            if p.len() != g.len() || g.len() != self.first_moment[k].len() {
                return Err(Error::DimensionMismatch {
                    context: "optimizer tensor length",
                    expected: self.first_moment[k].len(),
                    actual: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: *layer });
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (k, (_, p, g)) in tensors.iter_mut().enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    /// Update a single scalar parameter (tensor list of one length-1 entry).
    pub fn step_scalar(&mut self, param: &mut f64, grad: f64) -> Result<()> {
        let mut p = [*param];
        let g = [grad];
        self.apply(&mut [(0, &mut p[..], &g[..])])?;
        *param = p[0];
        Ok(())
    }
}

/// Descends `grads` on the parameters of `net`.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.weights.len() != net.layers().len() || grads.biases.len() != net.layers().len() {
        return Err(Error::DimensionMismatch {
            context: "gradient layer count",
            expected: net.layers().len(),
            actual: grads.weights.len(),
        });
    }
    for (i, (l, gw)) in net.layers().iter().zip(&grads.weights).enumerate() {
        if l.weight.shape() != gw.shape() || l.bias.len() != grads.biases[i].len() {
            return Err(Error::DimensionMismatch {
                context: "gradient shape",
                expected: l.weight.len() + l.bias.len(),
                actual: gw.len() + grads.biases[i].len(),
            });
        }
    }
    let layers = net.layers_mut();
    let mut tensors: Vec<(usize, &mut [f64], &[f64])> = Vec::with_capacity(layers.len() * 2);
    for (i, (l, (gw, gb))) in layers
        .iter_mut()
        .zip(grads.weights.iter().zip(&grads.biases))
        .enumerate()
    {
        tensors.push((
            i,
            l.weight.as_slice_mut().expect("standard layout"),
            gw.as_slice().expect("standard layout"),
        ));
        tensors.push((
            i,
            l.bias.as_slice_mut().expect("standard layout"),
            gb.as_slice().expect("standard layout"),
        ));
    }
    state.apply(&mut tensors)
}

/// Validates a Polyak coefficient: it must lie in the open interval (0, 1).
pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("polyak tau must lie in (0, 1), got {tau}")))
    }
}

/// `target ← τ·online + (1−τ)·target`, evaluated as `target + τ(online − target)`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    check_tau(tau)?;
    if target.dims() != online.dims() {
        return Err(Error::DimensionMismatch {
            context: "polyak network shapes",
            expected: online.param_count(),
            actual: target.param_count(),
        });
    }
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers()) {
        t.weight.zip_mut_with(&o.weight, |a, &b| *a += tau * (b - *a));
        t.bias.zip_mut_with(&o.bias, |a, &b| *a += tau * (b - *a));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: array![[w]],
            bias: array![0.0],
        }])
        .unwrap()
    }

    #[test]
    fn quadratic_converges_to_minimizer() {
        let mut state = AdamState::new(AdamConfig::with_learning_rate(0.1), &[1]);
        let mut w = 0.0;
        let mut hit = None;
        for step in 1..=500 {
            let g = 2.0 * (w - 3.0);
            state.step_scalar(&mut w, g).unwrap();
            if hit.is_none() && (w - 3.0f64).abs() < 1e-3 {
                hit = Some(step);
            }
        }
        assert!(hit.is_some(), "never came within 1e-3 of 3");
        assert!((w - 3.0f64).abs() < 1e-3, "ended at {w}");
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = scalar_net(1.25);
        let mut state = AdamState::for_net(AdamConfig::default(), &net);
        let grads = Gradients::zeros_like(&net);
        for _ in 0..10 {
            adam_step(&mut net, &grads, &mut state).unwrap();
        }
        assert_eq!(net.flat_params(), vec![1.25, 0.0]);
        assert_eq!(state.step_count, 10);
    }

    #[test]
    fn first_step_is_normalized_gradient() {
        let cfg = AdamConfig::default();
        for g in [0.5, -3.0, 1e-6, 42.0] {
            let mut state = AdamState::new(cfg, &[1]);
            let mut w = 0.0;
            state.step_scalar(&mut w, g).unwrap();
            let want = -cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((w - want).abs() <= 1e-15 * want.abs().max(1e-300), "{w} vs {want}");
        }
    }

    #[test]
    fn non_finite_gradient_reports_layer_and_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let before = net.flat_params();
        let mut state = AdamState::for_net(AdamConfig::default(), &net);
        let mut grads = Gradients::zeros_like(&net);
        grads.biases[1][0] = f64::NAN;
        let err = adam_step(&mut net, &grads, &mut state).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { layer: 1 }));
        assert_eq!(net.flat_params(), before);
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn table_defaults_accepted() {
        let cfg = AdamConfig::default();
        assert_eq!(cfg.learning_rate, 3e-4);
        assert_eq!((cfg.beta1, cfg.beta2, cfg.epsilon), (0.9, 0.999, 1e-8));
        cfg.validate().unwrap();
    }

    #[test]
    fn polyak_rejects_closed_bounds() {
        let mut a = scalar_net(0.0);
        let b = scalar_net(1.0);
        for tau in [0.0, 1.0, -0.1, 1.5] {
            assert!(polyak_update(&mut a, &b, tau).is_err());
        }
    }

    #[test]
    fn polyak_single_step() {
        let mut target = scalar_net(0.0);
        let online = scalar_net(1.0);
        polyak_update(&mut target, &online, 5e-3).unwrap();
        assert_eq!(target.layers()[0].weight[[0, 0]], 0.005);
    }

    #[test]
    fn polyak_gap_decays_geometrically() {
        let tau = 5e-3;
        let mut target = scalar_net(0.0);
        let online = scalar_net(1.0);
        for n in 1..=1000 {
            polyak_update(&mut target, &online, tau).unwrap();
            if n % 100 == 0 {
                let gap = 1.0 - target.layers()[0].weight[[0, 0]];
                let want = (1.0 - tau).powi(n);
                assert!((gap - want).abs() < 1e-12, "n={n}: {gap} vs {want}");
            }
        }
    }

    #[test]
    fn polyak_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let mut target = online.clone();
        polyak_update(&mut target, &online, 0.3).unwrap();
        assert_eq!(target, online);
    }
}
