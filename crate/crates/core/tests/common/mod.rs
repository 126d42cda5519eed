//! Shared helpers for integration tests: small configs and a reference
//! update that hardcodes the min-clipped target and actor objective.

#![allow(dead_code)]

use ndarray::{s, Array1, Array2, Axis};
use usac_core::agent::{critic_input, MetricsDelta, UsacAgent};
use usac_core::nn::adam_step;
use usac_core::{Error, ReplayBuffer, Result, Rng, RunConfig};

/// A pendulum run small enough for debug-mode tests.
pub fn tiny_config(total_steps: u64, eval_every: u64) -> RunConfig {
    let mut c = RunConfig {
        env: "pendulum".into(),
        total_steps,
        eval_every,
        eval_episodes: 2,
        record_wall_clock: false,
        ..RunConfig::default()
    };
    c.estimation.pairs = 4;
    c.estimation.rollouts = 2;
    c.agent.hidden = vec![16, 16];
    c.agent.batch_size = 32;
    c.agent.warmup_steps = 50;
    c
}

fn column(a: &Array2<f64>) -> Array1<f64> {
    a.column(0).to_owned()
}

/// One update written out with `min(q1, q2)` everywhere, sharing only the
/// network, policy and optimizer primitives with the agent.
pub fn min_clip_reference_update(
    agent: &mut UsacAgent,
    buffer: &mut ReplayBuffer,
    rng: &mut Rng,
) -> Result<MetricsDelta> {
    let n = agent.config.batch_size;
    let batch = buffer.sample(n)?;
    let next_noise = agent.actor.draw_noise(n, rng);
    let actor_noise = agent.actor.draw_noise(n, rng);
    let alpha = agent.alpha();
    let gamma = agent.config.gamma;

    // Target: r + γ (min(Q̄₁, Q̄₂)(s′, a′) − α log π(a′|s′)).
    let next = agent.actor.sample_batch(batch.next_states.view(), next_noise.view())?;
    let xn = critic_input(batch.next_states.view(), next.actions.view())?;
    let t1 = column(&agent.target_critics[0].predict(xn.view())?);
    let t2 = column(&agent.target_critics[1].predict(xn.view())?);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let soft = t1[i].min(t2[i]) - alpha * next.log_probs[i];
        y[i] = if batch.terminals[i] != 0.0 {
            batch.rewards[i]
        } else {
            batch.rewards[i] + gamma * soft
        };
    }

    // Critics: plain MSE regression.
    let x = critic_input(batch.states.view(), batch.actions.view())?;
    let mut critic_losses = [0.0; 2];
    for k in 0..2 {
        let (q, tape) = agent.critics[k].forward(x.view())?;
        let diff = &q.column(0) - &y;
        critic_losses[k] = diff.mapv(|d| d * d).sum() / n as f64;
        let d_out = (diff * (2.0 / n as f64)).insert_axis(Axis(1));
        let grads = agent.critics[k].backward(&tape, d_out.view())?.params;
        let UsacAgent {
            critics,
            critic_optimizers,
            ..
        } = agent;
        adam_step(&mut critics[k], &grads, &mut critic_optimizers[k])?;
    }

    // Actor: maximize min(Q₁, Q₂)(s, ã) − α log π(ã|s).
    let ds = agent.state_dim();
    let sample = agent.actor.sample_batch(batch.states.view(), actor_noise.view())?;
    let xa = critic_input(batch.states.view(), sample.actions.view())?;
    let (q1, tape1) = agent.critics[0].forward(xa.view())?;
    let (q2, tape2) = agent.critics[1].forward(xa.view())?;
    let mut objective = 0.0;
    let mut dq1 = Array2::zeros((n, 1));
    let mut dq2 = Array2::zeros((n, 1));
    for i in 0..n {
        let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
        objective += a.min(b) - alpha * sample.log_probs[i];
        let (g1, g2) = if a < b {
            (1.0, 0.0)
        } else if a > b {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        };
        dq1[[i, 0]] = -g1 / n as f64;
        dq2[[i, 0]] = -g2 / n as f64;
    }
    objective /= n as f64;
    if !objective.is_finite() {
        return Err(Error::Diverged {
            step: agent.updates,
            reason: "reference actor objective".into(),
        });
    }
    let din1 = agent.critics[0].backward_input(&tape1, dq1.view())?;
    let din2 = agent.critics[1].backward_input(&tape2, dq2.view())?;
    let d_actions = &din1.slice(s![.., ds..]) + &din2.slice(s![.., ds..]);
    let d_log_probs = Array1::from_elem(n, alpha / n as f64);
    let grads = agent.actor.backward(&sample, d_actions.view(), d_log_probs.view())?;
    let UsacAgent {
        actor, actor_optimizer, ..
    } = agent;
    adam_step(&mut actor.net, &grads, actor_optimizer)?;

    agent.update_alpha(sample.log_probs.view())?;
    agent.update_targets()?;
    agent.updates += 1;
    Ok(MetricsDelta {
        critic_losses,
        actor_objective: objective,
        mean_log_prob: sample.log_probs.mean().unwrap_or(0.0),
        alpha: agent.alpha(),
    })
}

/// Always reports a non-finite loss.
pub fn diverging_update(agent: &mut UsacAgent, _: &mut ReplayBuffer, _: &mut Rng) -> Result<MetricsDelta> {
    Err(Error::Diverged {
        step: agent.updates,
        reason: "critic 0 loss is NaN".into(),
    })
}
