//! Twin-critic soft actor-critic whose critic target and actor objective
//! aggregate the two critics through configurable utility rules.
//!
//! One training step, in order:
//!
//! 1. sample a mini-batch and fresh next actions `a′ ~ π(·|s′)`;
//! 2. `y = r + (1−done)·γ·[agg_critic(Q̄₁, Q̄₂)(s′,a′) − α log π(a′|s′)]`;
//! 3. one Adam step for each online critic on `mean (Q_k − y)²`;
//! 4. one Adam ascent step for the actor on
//!    `mean [agg_actor(Q₁, Q₂)(s, ã) − α log π(ã|s)]`, `ã` reparameterized;
//! 5. one temperature step (auto mode only);
//! 6. Polyak averaging of both target critics.

mod buffer;

pub use buffer::{Batch, ReplayBuffer, Transition};

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, check_tau, polyak_update, AdamConfig, AdamState, Checkpoint, Gradients, Mlp};
use crate::policy::{EntropyTemperature, SquashedGaussianPolicy};
use crate::utility::{AggregationRule, Aggregator, KAPPA_MIN_CLIP};
use crate::{Error, Result, Rng};

/// Scale applied to the critics' output layer at initialization.
pub const CRITIC_OUTPUT_INIT_SCALE: f64 = 0.1;

/// Entropy temperature: learned toward a target entropy, or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaMode {
    Auto { initial: f64 },
    Fixed { value: f64 },
}

impl Default for AlphaMode {
    fn default() -> Self {
        AlphaMode::Auto { initial: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Uniformly random environment steps before the first update.
    pub warmup_steps: usize,
    pub hidden: Vec<usize>,
    pub rule_critic: AggregationRule,
    pub rule_actor: AggregationRule,
    pub alpha: AlphaMode,
    /// Defaults to `−d_a` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 5e-3,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            warmup_steps: 1_000,
            hidden: vec![256, 256],
            rule_critic: AggregationRule::LaplaceUtility { kappa: KAPPA_MIN_CLIP },
            rule_actor: AggregationRule::LaplaceUtility { kappa: KAPPA_MIN_CLIP },
            alpha: AlphaMode::default(),
            target_entropy: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        check_tau(self.tau)?;
        for lr in [self.actor_lr, self.critic_lr, self.alpha_lr] {
            AdamConfig::with_learning_rate(lr).validate()?;
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        self.rule_critic.validate()?;
        self.rule_actor.validate()?;
        match self.alpha {
            AlphaMode::Auto { initial: a } | AlphaMode::Fixed { value: a } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::config(format!("alpha must be positive, got {a}")));
                }
            }
        }
        if let Some(h) = self.target_entropy {
            if !h.is_finite() {
                return Err(Error::config("target_entropy must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Temperature {
    Auto(EntropyTemperature),
    Fixed(f64),
}

impl Temperature {
    pub fn alpha(&self) -> f64 {
        match self {
            Temperature::Auto(t) => t.alpha(),
            Temperature::Fixed(a) => *a,
        }
    }
}

/// Scalars produced by one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsDelta {
    /// Pre-step mean squared TD errors of the two critics.
    pub critic_losses: [f64; 2],
    /// Pre-step actor objective (to be maximized).
    pub actor_objective: f64,
    pub mean_log_prob: f64,
    /// Temperature after the step.
    pub alpha: f64,
}

/// Actor objective with its sampled log-probabilities and the gradient of
/// the negated objective.
#[derive(Debug, Clone)]
pub struct ActorStep {
    pub objective: f64,
    pub log_probs: Array1<f64>,
    pub loss_grads: Gradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsacAgent {
    pub config: AgentConfig,
    pub actor: SquashedGaussianPolicy,
    pub critics: [Mlp; 2],
    pub target_critics: [Mlp; 2],
    pub temperature: Temperature,
    pub actor_optimizer: AdamState,
    pub critic_optimizers: [AdamState; 2],
    critic_agg: Aggregator,
    actor_agg: Aggregator,
    /// Completed training steps.
    pub updates: u64,
}

/// Row-wise `[states | actions]`.
pub fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::DimensionMismatch {
            context: "critic input rows",
            expected: states.nrows(),
            actual: actions.nrows(),
        });
    }
    Ok(concatenate![Axis(1), states, actions])
}

fn column(out: &Array2<f64>) -> Array1<f64> {
    out.column(0).to_owned()
}

impl UsacAgent {
    pub fn new(config: AgentConfig, state_dim: usize, low: &[f64], high: &[f64], rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let action_dim = low.len();
        let actor = SquashedGaussianPolicy::new(state_dim, &config.hidden, low, high, rng)?;
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(&config.hidden);
        dims.push(1);
        let mut make_critic = || -> Result<Mlp> {
            let mut net = Mlp::new(&dims, rng)?;
            net.scale_output_layer(CRITIC_OUTPUT_INIT_SCALE);
            Ok(net)
        };
        let critics = [make_critic()?, make_critic()?];
        let target_critics = critics.clone();
        let temperature = match config.alpha {
            AlphaMode::Auto { initial } => Temperature::Auto(EntropyTemperature::new(
                initial,
                config
                    .target_entropy
                    .unwrap_or_else(|| EntropyTemperature::default_target(action_dim)),
                AdamConfig::with_learning_rate(config.alpha_lr),
            )?),
            AlphaMode::Fixed { value } => Temperature::Fixed(value),
        };
        let critic_opt = AdamConfig::with_learning_rate(config.critic_lr);
        Ok(Self {
            actor_optimizer: AdamState::for_net(AdamConfig::with_learning_rate(config.actor_lr), &actor.net),
            critic_optimizers: [
                AdamState::for_net(critic_opt, &critics[0]),
                AdamState::for_net(critic_opt, &critics[1]),
            ],
            critic_agg: config.rule_critic.compile()?,
            actor_agg: config.rule_actor.compile()?,
            actor,
            critics,
            target_critics,
            temperature,
            config,
            updates: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.action_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.temperature.alpha()
    }

    pub fn critic_aggregator(&self) -> Aggregator {
        self.critic_agg
    }

    pub fn actor_aggregator(&self) -> Aggregator {
        self.actor_agg
    }

    /// Stochastic action for one state.
    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let noise = self.actor.draw_noise(1, rng);
        Ok(self
            .actor
            .sample_action(state, noise.as_slice().expect("contiguous"))?
            .0)
    }

    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.mean_action(state)
    }

    /// Outputs of a critic pair at `(states, actions)`.
    pub fn critic_pair(
        nets: &[Mlp; 2],
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let x = critic_input(states, actions)?;
        Ok((column(&nets[0].predict(x.view())?), column(&nets[1].predict(x.view())?)))
    }

    /// Actor-rule aggregate of the online critics, used as the agent's
    /// value estimate.
    pub fn estimate_q(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let (q1, q2) = Self::critic_pair(&self.critics, states, actions)?;
        Ok(ndarray::Zip::from(&q1)
            .and(&q2)
            .map_collect(|&a, &b| self.actor_agg.value(a, b)))
    }

    /// Critic regression targets with next actions drawn as
    /// `a′ = f(s′, next_noise)`. No parameter receives gradient from here.
    pub fn critic_target(&self, batch: &Batch, next_noise: ArrayView2<f64>) -> Result<Array1<f64>> {
        if batch.is_empty() {
            return Err(Error::config("critic target needs a non-empty batch"));
        }
        let next = self.actor.sample_batch(batch.next_states.view(), next_noise)?;
        let (q1, q2) = Self::critic_pair(&self.target_critics, batch.next_states.view(), next.actions.view())?;
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        let mut y = Array1::zeros(batch.len());
        for i in 0..batch.len() {
            let soft = self.critic_agg.value(q1[i], q2[i]) - alpha * next.log_probs[i];
            y[i] = if batch.terminals[i] != 0.0 {
                batch.rewards[i]
            } else {
                batch.rewards[i] + gamma * soft
            };
        }
        Ok(y)
    }

    /// Mean squared error of critic `k` against `targets` and its parameter
    /// gradient.
    pub fn critic_loss_grad(
        &self,
        k: usize,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<(f64, Gradients)> {
        let x = critic_input(states, actions)?;
        let n = targets.len();
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "critic targets",
                expected: x.nrows(),
                actual: n,
            });
        }
        let (q, tape) = self.critics[k].forward(x.view())?;
        let diff = &q.column(0) - &targets;
        let loss = diff.mapv(|d| d * d).sum() / n as f64;
        let d_out = (diff * (2.0 / n as f64)).insert_axis(Axis(1));
        Ok((loss, self.critics[k].backward(&tape, d_out.view())?.params))
    }

    /// One Adam step per online critic toward the shared `targets`.
    /// Returns the pre-step losses.
    pub fn critic_update(
        &mut self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<[f64; 2]> {
        let mut losses = [0.0; 2];
        for k in 0..2 {
            let (loss, grads) = self.critic_loss_grad(k, states, actions, targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: self.updates,
                    reason: format!("critic {k} loss is {loss}"),
                });
            }
            losses[k] = loss;
            adam_step(&mut self.critics[k], &grads, &mut self.critic_optimizers[k])?;
        }
        Ok(losses)
    }

    /// Actor objective `mean [agg_actor(Q₁, Q₂)(s, ã) − α log π(ã|s)]`
    /// with `ã = f(s, noise)`, and the gradient of its negation (the loss)
    /// with respect to the actor parameters. Critics are held fixed.
    pub fn actor_objective_grad(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<ActorStep> {
        let n = states.nrows();
        let ds = self.state_dim();
        let sample = self.actor.sample_batch(states, noise)?;
        let x = critic_input(states, sample.actions.view())?;
        let (q1, t1) = self.critics[0].forward(x.view())?;
        let (q2, t2) = self.critics[1].forward(x.view())?;
        let alpha = self.alpha();

        let mut objective = 0.0;
        let mut dq1 = Array2::zeros((n, 1));
        let mut dq2 = Array2::zeros((n, 1));
        for i in 0..n {
            let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
            objective += self.actor_agg.value(a, b) - alpha * sample.log_probs[i];
            let (g1, g2) = self.actor_agg.grad(a, b);
            dq1[[i, 0]] = -g1 / n as f64;
            dq2[[i, 0]] = -g2 / n as f64;
        }
        objective /= n as f64;

        let din1 = self.critics[0].backward_input(&t1, dq1.view())?;
        let din2 = self.critics[1].backward_input(&t2, dq2.view())?;
        let d_actions = &din1.slice(s![.., ds..]) + &din2.slice(s![.., ds..]);
        let d_log_probs = Array1::from_elem(n, alpha / n as f64);
        let loss_grads = self.actor.backward(&sample, d_actions.view(), d_log_probs.view())?;
        Ok(ActorStep {
            objective,
            log_probs: sample.log_probs,
            loss_grads,
        })
    }

    /// One ascent step on the actor objective, with `ã = f(s, noise)`.
    /// Returns the pre-step objective and the sampled log-probabilities.
    pub fn actor_update(&mut self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<(f64, Array1<f64>)> {
        let step = self.actor_objective_grad(states, noise)?;
        if !step.objective.is_finite() {
            return Err(Error::Diverged {
                step: self.updates,
                reason: format!("actor objective is {}", step.objective),
            });
        }
        adam_step(&mut self.actor.net, &step.loss_grads, &mut self.actor_optimizer)?;
        Ok((step.objective, step.log_probs))
    }

    /// Temperature step from the actor's sampled log-probabilities; a
    /// no-op for a fixed temperature.
    pub fn update_alpha(&mut self, log_probs: ArrayView1<f64>) -> Result<()> {
        match &mut self.temperature {
            Temperature::Auto(t) => t.update(log_probs),
            Temperature::Fixed(_) => Ok(()),
        }
    }

    pub fn update_targets(&mut self) -> Result<()> {
        for k in 0..2 {
            polyak_update(&mut self.target_critics[k], &self.critics[k], self.config.tau)?;
        }
        Ok(())
    }

    /// One full update. Noise for `a′` is drawn before the noise for `ã`.
    pub fn training_step(&mut self, buffer: &mut ReplayBuffer, rng: &mut Rng) -> Result<MetricsDelta> {
        let n = self.config.batch_size;
        let batch = buffer.sample(n)?;
        let next_noise = self.actor.draw_noise(n, rng);
        let actor_noise = self.actor.draw_noise(n, rng);
        self.update_from_batch(&batch, next_noise.view(), actor_noise.view())
    }

    /// Steps 2–6 with all randomness supplied.
    pub fn update_from_batch(
        &mut self,
        batch: &Batch,
        next_noise: ArrayView2<f64>,
        actor_noise: ArrayView2<f64>,
    ) -> Result<MetricsDelta> {
        let targets = self.critic_target(batch, next_noise)?;
        if let Some(bad) = targets.iter().find(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: self.updates,
                reason: format!("critic target is {bad}"),
            });
        }
        let critic_losses = self.critic_update(batch.states.view(), batch.actions.view(), targets.view())?;
        let (actor_objective, log_probs) = self.actor_update(batch.states.view(), actor_noise)?;
        self.update_alpha(log_probs.view())?;
        self.update_targets()?;
        self.updates += 1;
        Ok(MetricsDelta {
            critic_losses,
            actor_objective,
            mean_log_prob: log_probs.mean().unwrap_or(0.0),
            alpha: self.alpha(),
        })
    }

    /// Writes every network, optimizer moment and the temperature under
    /// `prefix`. The replay buffer is not included.
    pub fn save(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.put_net(&format!("{prefix}.actor"), &self.actor.net);
        ck.put_f64(
            format!("{prefix}.actor_box"),
            &[2, self.action_dim()],
            self.actor
                .action_scale
                .iter()
                .chain(&self.actor.action_offset)
                .copied()
                .collect(),
        );
        ck.put_f64(
            format!("{prefix}.log_std_bounds"),
            &[2],
            vec![self.actor.log_std_bounds.0, self.actor.log_std_bounds.1],
        );
        ck.put_adam(&format!("{prefix}.actor_opt"), &self.actor_optimizer);
        for k in 0..2 {
            ck.put_net(&format!("{prefix}.critic{k}"), &self.critics[k]);
            ck.put_net(&format!("{prefix}.target{k}"), &self.target_critics[k]);
            ck.put_adam(&format!("{prefix}.critic{k}_opt"), &self.critic_optimizers[k]);
        }
        match &self.temperature {
            Temperature::Auto(t) => {
                ck.put_scalar(format!("{prefix}.log_alpha"), t.log_alpha);
                ck.put_scalar(format!("{prefix}.target_entropy"), t.target_entropy);
                ck.put_adam(&format!("{prefix}.alpha_opt"), &t.optimizer);
            }
            Temperature::Fixed(a) => ck.put_scalar(format!("{prefix}.fixed_alpha"), *a),
        }
        ck.put_u64(format!("{prefix}.updates"), &[1], vec![self.updates]);
    }

    /// Restores an agent saved with [`UsacAgent::save`]. `config` supplies
    /// the hyperparameters and must describe the same architecture.
    pub fn load(config: AgentConfig, ck: &Checkpoint, prefix: &str) -> Result<Self> {
        config.validate()?;
        let net = ck.get_net(&format!("{prefix}.actor"))?;
        let (shape, bx) = ck.get_f64(&format!("{prefix}.actor_box"))?;
        let da = shape.get(1).copied().unwrap_or(0);
        let (_, bounds) = ck.get_f64(&format!("{prefix}.log_std_bounds"))?;
        let [lo, hi] = bounds else {
            return Err(Error::Checkpoint("log_std_bounds needs 2 values".into()));
        };
        let actor = SquashedGaussianPolicy {
            net,
            log_std_bounds: (*lo, *hi),
            action_scale: bx[..da].to_vec(),
            action_offset: bx[da..].to_vec(),
        };
        let critics = [
            ck.get_net(&format!("{prefix}.critic0"))?,
            ck.get_net(&format!("{prefix}.critic1"))?,
        ];
        let target_critics = [
            ck.get_net(&format!("{prefix}.target0"))?,
            ck.get_net(&format!("{prefix}.target1"))?,
        ];
        let expected_hidden = &actor.net.dims()[1..actor.net.dims().len() - 1];
        if expected_hidden != config.hidden.as_slice() || critics[0].input_dim() != actor.state_dim() + da {
            return Err(Error::Checkpoint(
                "checkpoint architecture does not match config".into(),
            ));
        }
        let temperature = match config.alpha {
            AlphaMode::Auto { .. } => Temperature::Auto(EntropyTemperature {
                log_alpha: ck.get_scalar(&format!("{prefix}.log_alpha"))?,
                target_entropy: ck.get_scalar(&format!("{prefix}.target_entropy"))?,
                optimizer: ck.get_adam(&format!("{prefix}.alpha_opt"))?,
            }),
            AlphaMode::Fixed { .. } => Temperature::Fixed(ck.get_scalar(&format!("{prefix}.fixed_alpha"))?),
        };
        let (_, updates) = ck.get_u64(&format!("{prefix}.updates"))?;
        Ok(Self {
            actor_optimizer: ck.get_adam(&format!("{prefix}.actor_opt"))?,
            critic_optimizers: [
                ck.get_adam(&format!("{prefix}.critic0_opt"))?,
                ck.get_adam(&format!("{prefix}.critic1_opt"))?,
            ],
            critic_agg: config.rule_critic.compile()?,
            actor_agg: config.rule_actor.compile()?,
            actor,
            critics,
            target_critics,
            temperature,
            config,
            updates: updates.first().copied().unwrap_or(0),
        })
    }
}
