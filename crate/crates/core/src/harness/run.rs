use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng as _, SeedableRng};

use super::config::{EvalAction, RunConfig};
use super::metrics::{MetricsRecord, Provenance};
use crate::agent::{MetricsDelta, ReplayBuffer, Transition, UsacAgent};
use crate::envs::{batched_returns, horizon_for, make_env, ContinuousEnv, EnvKind, EnvSpec};
use crate::nn::Checkpoint;
use crate::{Error, Result, Rng};

/// Offset between a training seed and its evaluation seed.
pub const EVAL_SEED_OFFSET: u64 = 100;

// Independent ChaCha streams derived from one seed.
const STREAM_INIT: u64 = 1;
const STREAM_ACTION: u64 = 2;
const STREAM_ENV: u64 = 3;
const STREAM_REPLAY: u64 = 4;
const STREAM_EVAL_EPISODES: u64 = 0;
const STREAM_EVAL_ESTIMATION: u64 = 1;

pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One gradient update given the agent, its buffer and the training stream.
pub type UpdateFn = fn(&mut UsacAgent, &mut ReplayBuffer, &mut Rng) -> Result<MetricsDelta>;

fn default_update(agent: &mut UsacAgent, buffer: &mut ReplayBuffer, rng: &mut Rng) -> Result<MetricsDelta> {
    agent.training_step(buffer, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// A loss or action went non-finite; records up to this point are kept.
    Diverged {
        step: u64,
        reason: String,
    },
}

impl RunStatus {
    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    pub status: RunStatus,
    pub provenance: Provenance,
    /// Environment actions that fell outside the box and were clipped.
    pub clipped_actions: u64,
}

/// A training run that can be stepped, checkpointed and resumed.
pub struct Trainer {
    config: RunConfig,
    spec: EnvSpec,
    env: EnvKind,
    agent: UsacAgent,
    buffer: ReplayBuffer,
    action_rng: Rng,
    env_rng: Rng,
    observation: Vec<f64>,
    step: u64,
    records: Vec<MetricsRecord>,
    clipped_actions: u64,
    elapsed_before: f64,
    started: Instant,
    update: UpdateFn,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mut env = make_env(&config.env)?;
        let spec = env.spec();
        let mut init_rng = seeded_stream(config.seed, STREAM_INIT);
        let agent = UsacAgent::new(
            config.agent.clone(),
            spec.state_dim,
            &spec.low,
            &spec.high,
            &mut init_rng,
        )?;
        let buffer = ReplayBuffer::from_rng(
            config.agent.buffer_capacity,
            spec.state_dim,
            spec.action_dim,
            seeded_stream(config.seed, STREAM_REPLAY),
        )?;
        let mut env_rng = seeded_stream(config.seed, STREAM_ENV);
        let observation = env.reset(&mut env_rng);
        Ok(Self {
            action_rng: seeded_stream(config.seed, STREAM_ACTION),
            env_rng,
            observation,
            config,
            spec,
            env,
            agent,
            buffer,
            step: 0,
            records: Vec::new(),
            clipped_actions: 0,
            elapsed_before: 0.0,
            started: Instant::now(),
            update: default_update,
        })
    }

    /// Replaces the gradient update, e.g. with a reference implementation.
    pub fn with_update_fn(mut self, update: UpdateFn) -> Self {
        self.update = update;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn agent(&self) -> &UsacAgent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config.hash(),
            seed: self.config.seed,
        }
    }

    fn wall_clock(&self) -> f64 {
        if self.config.record_wall_clock {
            self.elapsed_before + self.started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// One environment step, followed by one update once warm-up is over.
    pub fn env_step(&mut self) -> Result<Option<MetricsDelta>> {
        let warm = self.step < self.config.agent.warmup_steps as u64;
        let action = if warm {
            self.spec
                .low
                .iter()
                .zip(&self.spec.high)
                .map(|(&l, &h)| self.action_rng.random_range(l..h))
                .collect()
        } else {
            let a = self.agent.act(&self.observation, &mut self.action_rng)?;
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: self.step,
                    reason: "policy produced a non-finite action".into(),
                });
            }
            a
        };
        let out = self.env.step(&action, &mut self.env_rng);
        self.clipped_actions += u64::from(out.clipped);
        let next = if out.terminal || out.truncated {
            self.env.reset(&mut self.env_rng)
        } else {
            out.observation.clone()
        };
        self.buffer.push(Transition {
            state: std::mem::replace(&mut self.observation, next),
            action,
            reward: out.reward,
            next_state: out.observation,
            terminal: out.terminal,
        })?;
        let delta = if warm {
            None
        } else {
            Some((self.update)(&mut self.agent, &mut self.buffer, &mut self.action_rng)?)
        };
        self.step += 1;
        Ok(delta)
    }

    /// Evaluates the current agent and appends the record.
    pub fn record_evaluation(&mut self) -> Result<&MetricsRecord> {
        let record = evaluate(&self.agent, &self.config, &self.spec, self.step, self.wall_clock())?;
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Runs to `total_steps`, evaluating at step 0 and every `eval_every`
    /// steps. Divergence stops the run and is reported in the status;
    /// every other error propagates.
    pub fn run(&mut self) -> Result<RunStatus> {
        if self.records.is_empty() && self.step == 0 {
            self.record_evaluation()?;
        }
        while self.step < self.config.total_steps {
            match self.env_step() {
                Ok(_) => {}
                Err(Error::Diverged { step, reason }) => return Ok(RunStatus::Diverged { step, reason }),
                Err(e) => return Err(e),
            }
            if self.step.is_multiple_of(self.config.eval_every) {
                self.record_evaluation()?;
            }
        }
        Ok(RunStatus::Completed)
    }

    pub fn into_outcome(self, status: RunStatus) -> RunOutcome {
        RunOutcome {
            provenance: self.provenance(),
            records: self.records,
            status,
            clipped_actions: self.clipped_actions,
        }
    }

    /// Full run state: agent, replay buffer, generator states, environment
    /// state and the records so far.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_u64("run.resume_key", &[1], vec![self.config.resume_key()]);
        ck.put_u64("run.step", &[1], vec![self.step]);
        ck.put_u64("run.clipped_actions", &[1], vec![self.clipped_actions]);
        ck.put_scalar("run.wall_clock_s", self.wall_clock());
        self.agent.save(&mut ck, "agent");
        self.buffer.save(&mut ck, "replay");
        ck.put_rng("rng.action", &self.action_rng);
        ck.put_rng("rng.env", &self.env_rng);
        let state = self.env.state();
        ck.put_f64("env.state", &[state.len()], state);
        ck.put_f64("env.observation", &[self.observation.len()], self.observation.clone());

        let n = self.records.len();
        let mut rows = Vec::with_capacity(n * 6);
        let mut returns = Vec::with_capacity(n * self.config.eval_episodes);
        for r in &self.records {
            rows.extend([
                r.step as f64,
                r.mean_return,
                r.std_return,
                r.estimation_error,
                r.alpha,
                r.wall_clock_s,
            ]);
            returns.extend_from_slice(&r.episode_returns);
        }
        ck.put_f64("run.records", &[n, 6], rows);
        ck.put_f64("run.episode_returns", &[n, self.config.eval_episodes], returns);
        ck
    }

    /// Rebuilds a run from [`Trainer::checkpoint`]. `config` may differ from
    /// the original only in `total_steps`.
    pub fn resume(config: RunConfig, ck: &Checkpoint) -> Result<Self> {
        config.validate()?;
        let (_, key) = ck.get_u64("run.resume_key")?;
        if key != [config.resume_key()] {
            return Err(Error::Checkpoint(
                "run checkpoint was written under a different configuration".into(),
            ));
        }
        let mut env = make_env(&config.env)?;
        env.set_state(ck.get_f64("env.state")?.1)?;
        let spec = env.spec();
        let agent = UsacAgent::load(config.agent.clone(), ck, "agent")?;
        let buffer = ReplayBuffer::load(ck, "replay")?;
        let (_, rows) = ck.get_f64("run.records")?;
        let (_, returns) = ck.get_f64("run.episode_returns")?;
        let k = config.eval_episodes;
        if rows.len() % 6 != 0 || returns.len() != rows.len() / 6 * k {
            return Err(Error::Checkpoint("record tables have inconsistent shapes".into()));
        }
        let records = rows
            .chunks_exact(6)
            .zip(returns.chunks_exact(k.max(1)))
            .map(|(r, ret)| MetricsRecord {
                step: r[0] as u64,
                episode_returns: ret.to_vec(),
                mean_return: r[1],
                std_return: r[2],
                estimation_error: r[3],
                alpha: r[4],
                wall_clock_s: r[5],
            })
            .collect();
        let step = ck.get_u64("run.step")?.1.first().copied().unwrap_or(0);
        if step > config.total_steps {
            return Err(Error::Checkpoint(format!(
                "checkpoint is at step {step}, beyond total_steps {}",
                config.total_steps
            )));
        }
        Ok(Self {
            action_rng: ck.get_rng("rng.action")?,
            env_rng: ck.get_rng("rng.env")?,
            observation: ck.get_f64("env.observation")?.1.to_vec(),
            elapsed_before: ck.get_scalar("run.wall_clock_s")?,
            clipped_actions: ck.get_u64("run.clipped_actions")?.1.first().copied().unwrap_or(0),
            started: Instant::now(),
            update: default_update,
            config,
            spec,
            env,
            agent,
            buffer,
            step,
            records,
        })
    }
}

/// Evaluation episodes plus the estimation-error measurement, on fresh
/// environments seeded with `seed + 100`. Uses no state from training
/// streams, so evaluating never perturbs the run.
pub fn evaluate(
    agent: &UsacAgent,
    config: &RunConfig,
    spec: &EnvSpec,
    step: u64,
    wall_clock_s: f64,
) -> Result<MetricsRecord> {
    let eval_seed = config.seed.wrapping_add(EVAL_SEED_OFFSET);
    let mut rng = seeded_stream(eval_seed, STREAM_EVAL_EPISODES);
    let mut env = make_env(&config.env)?;
    let keep_snapshots = config.estimation.pairs > 0;
    let mut snapshots = Vec::new();
    let mut returns = Vec::with_capacity(config.eval_episodes);
    for _ in 0..config.eval_episodes {
        let mut obs = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            if keep_snapshots {
                snapshots.push(env.clone());
            }
            let action = match config.eval_action {
                EvalAction::Deterministic => agent.act_deterministic(&obs)?,
                EvalAction::Sampled => agent.act(&obs, &mut rng)?,
            };
            let out = env.step(&action, &mut rng);
            total += out.reward;
            obs = out.observation;
            if out.terminal || out.truncated {
                break;
            }
        }
        returns.push(total);
    }
    let estimation_error = if keep_snapshots {
        let mut est_rng = seeded_stream(eval_seed, STREAM_EVAL_ESTIMATION);
        estimation_error(agent, config, spec, &snapshots, &mut est_rng)?
    } else {
        f64::NAN
    };
    Ok(MetricsRecord::from_returns(
        step,
        returns,
        estimation_error,
        agent.alpha(),
        wall_clock_s,
    ))
}

/// Mean Monte-Carlo discounted return minus mean critic estimate over
/// `pairs` states drawn from `snapshots`, each with an action sampled from
/// the policy. The estimate aggregates the online critics with the actor's
/// rule; rollouts follow the stochastic policy and count rewards only.
pub fn estimation_error(
    agent: &UsacAgent,
    config: &RunConfig,
    spec: &EnvSpec,
    snapshots: &[EnvKind],
    rng: &mut Rng,
) -> Result<f64> {
    let est = config.estimation;
    if snapshots.is_empty() || est.pairs == 0 {
        return Ok(f64::NAN);
    }
    let picks: Vec<&EnvKind> = (0..est.pairs)
        .map(|_| &snapshots[rng.random_range(0..snapshots.len())])
        .collect();
    let mut states = Array2::zeros((est.pairs, spec.state_dim));
    for (i, env) in picks.iter().enumerate() {
        states.row_mut(i).assign(&Array1::from(env.observe()));
    }
    let noise = agent.actor.draw_noise(est.pairs, rng);
    let actions = agent.actor.sample_batch(states.view(), noise.view())?.actions;
    let estimates = agent.estimate_q(states.view(), actions.view())?;

    let gamma = agent.config.gamma;
    let horizon = horizon_for(gamma, spec.reward_bound, est.tolerance);
    let mut sims = Vec::with_capacity(est.pairs * est.rollouts);
    let mut first = Array2::zeros((est.pairs * est.rollouts, spec.action_dim));
    for (i, env) in picks.iter().enumerate() {
        for r in 0..est.rollouts {
            sims.push((*env).clone());
            first.row_mut(i * est.rollouts + r).assign(&actions.row(i));
        }
    }
    let actor = &agent.actor;
    let returns = batched_returns(
        sims,
        first.view(),
        |obs, rng| {
            let noise = actor.draw_noise(obs.nrows(), rng);
            Ok(actor.sample_batch(obs, noise.view())?.actions)
        },
        gamma,
        horizon,
        rng,
    )?;
    let truth = returns.iter().sum::<f64>() / returns.len() as f64;
    let estimate = estimates.mean().expect("pairs > 0");
    Ok(truth - estimate)
}

/// Runs one configuration from scratch to completion or divergence.
pub fn run_training(config: RunConfig) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(config)?;
    let status = trainer.run()?;
    Ok(trainer.into_outcome(status))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(total_steps: u64) -> RunConfig {
        let mut c = RunConfig {
            env: "pointmass".into(),
            total_steps,
            eval_every: 20,
            eval_episodes: 2,
            record_wall_clock: false,
            ..RunConfig::default()
        };
        c.estimation.pairs = 3;
        c.estimation.rollouts = 2;
        c.agent.hidden = vec![8];
        c.agent.batch_size = 8;
        c.agent.warmup_steps = 10;
        c
    }

    #[test]
    fn zero_steps_gives_one_baseline_record() {
        let out = run_training(tiny(0)).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].step, 0);
        assert_eq!(out.status, RunStatus::Completed);
    }

    #[test]
    fn records_at_every_eval_point() {
        let out = run_training(tiny(60)).unwrap();
        let steps: Vec<u64> = out.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 20, 40, 60]);
        assert!(out
            .records
            .iter()
            .all(|r| r.episode_returns.len() == 2 && r.estimation_error.is_finite()));
    }

    #[test]
    fn updates_start_after_warmup_at_replay_ratio_one() {
        let mut t = Trainer::new(tiny(40)).unwrap();
        for i in 0..30 {
            let delta = t.env_step().unwrap();
            assert_eq!(delta.is_some(), i >= 10, "step {i}");
        }
        assert_eq!(t.agent().updates, 20);
        assert_eq!(t.buffer().len(), 30);
    }

    #[test]
    fn evaluation_does_not_disturb_training_streams() {
        let mut a = Trainer::new(tiny(40)).unwrap();
        let mut b = Trainer::new(tiny(40)).unwrap();
        for _ in 0..15 {
            a.env_step().unwrap();
            b.env_step().unwrap();
            a.record_evaluation().unwrap();
        }
        assert_eq!(a.agent(), b.agent());
    }

    #[test]
    fn resume_matches_unbroken_run() {
        let full = run_training(tiny(80)).unwrap();
        let mut first = Trainer::new(tiny(40)).unwrap();
        first.run().unwrap();
        let ck = Checkpoint::parse(&first.checkpoint().to_text()).unwrap();
        let mut resumed = Trainer::resume(tiny(80), &ck).unwrap();
        let status = resumed.run().unwrap();
        assert_eq!(resumed.into_outcome(status), full);
    }

    #[test]
    fn resume_rejects_other_config() {
        let t = Trainer::new(tiny(20)).unwrap();
        let mut other = tiny(20);
        other.seed = 9;
        assert!(Trainer::resume(other, &t.checkpoint()).is_err());
    }
}
