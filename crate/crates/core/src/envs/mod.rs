//! Environments and exact oracles.
//!
//! Continuous-control environments share the [`ContinuousEnv`] interface and
//! are selected by string id through [`make_env`]. Rewards are shifted into
//! `[0, B_r]`; the shift and bound are reported in [`EnvSpec`].

mod pendulum;
mod pointmass;
mod tabular;

pub use pendulum::Pendulum;
pub use pointmass::PointMass;
pub use tabular::{sup_distance, TabularPolicy, TabularSoftMdp, TabularWalker};

pub mod constants {
    pub mod pendulum {
        pub use crate::envs::pendulum::{
            DT, GRAVITY, LENGTH, MASS, MAX_EPISODE_STEPS, MAX_SPEED, MAX_TORQUE, REWARD_BOUND,
        };
    }
    pub mod pointmass {
        pub use crate::envs::pointmass::{
            CONTROL_WEIGHT, DT, MAX_EPISODE_STEPS, MAX_FORCE, POSITION_WEIGHT, REWARD_BOUND, VELOCITY_WEIGHT,
        };
    }
}

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result, Rng};

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub max_episode_steps: usize,
    /// Rewards lie in `[0, reward_bound]`.
    pub reward_bound: f64,
    /// Constant added to the environment's native reward.
    pub reward_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// True environment termination; time limits never set this.
    pub terminal: bool,
    /// Episode hit `max_episode_steps`.
    pub truncated: bool,
    /// The action was outside the box and got clipped.
    pub clipped: bool,
}

pub trait ContinuousEnv: Clone + Send {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn observe(&self) -> Vec<f64>;
    fn step(&mut self, action: &[f64], rng: &mut Rng) -> StepOutcome;
    /// Full internal state, for checkpoints.
    fn state(&self) -> Vec<f64>;
    fn set_state(&mut self, state: &[f64]) -> Result<()>;
}

/// Environments selectable by id.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    Pendulum(Pendulum),
    PointMass(PointMass),
}

pub const ENV_IDS: &[&str] = &["pendulum", "pointmass"];

pub fn make_env(id: &str) -> Result<EnvKind> {
    match id {
        "pendulum" => Ok(EnvKind::Pendulum(Pendulum::default())),
        "pointmass" => Ok(EnvKind::PointMass(PointMass::default())),
        other => Err(Error::config(format!(
            "unknown environment {other:?}; expected one of {ENV_IDS:?}"
        ))),
    }
}

macro_rules! delegate {
    ($self:ident, $env:ident => $body:expr) => {
        match $self {
            EnvKind::Pendulum($env) => $body,
            EnvKind::PointMass($env) => $body,
        }
    };
}

impl ContinuousEnv for EnvKind {
    fn spec(&self) -> EnvSpec {
        delegate!(self, e => e.spec())
    }
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        delegate!(self, e => e.reset(rng))
    }
    fn observe(&self) -> Vec<f64> {
        delegate!(self, e => e.observe())
    }
    fn step(&mut self, action: &[f64], rng: &mut Rng) -> StepOutcome {
        delegate!(self, e => e.step(action, rng))
    }
    fn state(&self) -> Vec<f64> {
        delegate!(self, e => e.state())
    }
    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        delegate!(self, e => e.set_state(state))
    }
}

/// Something that can be stepped forward from a copied state.
pub trait Rollout: Clone {
    type Action;
    /// Applies `action`; returns `(reward, terminal)`.
    fn advance(&mut self, action: &Self::Action, rng: &mut Rng) -> (f64, bool);
}

/// Continuous environments roll out past their time limit.
impl<E: ContinuousEnv> Rollout for E {
    type Action = Vec<f64>;

    fn advance(&mut self, action: &Vec<f64>, rng: &mut Rng) -> (f64, bool) {
        let out = self.step(action, rng);
        (out.reward, out.terminal)
    }
}

/// Smallest `h` with `γ^h · B_r < tol`.
pub fn horizon_for(gamma: f64, reward_bound: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    if reward_bound < tol {
        return 1;
    }
    let h = ((tol / reward_bound).ln() / gamma.ln()).floor() as usize + 1;
    h.max(1)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Discounted return `Σ_{t<horizon} γ^t r_t` from `(start, first_action)`,
/// then following `policy`, averaged over `n_rollouts`.
pub fn monte_carlo_return<S, P>(
    start: &S,
    first_action: &S::Action,
    mut policy: P,
    gamma: f64,
    horizon: usize,
    n_rollouts: usize,
    rng: &mut Rng,
) -> McEstimate
where
    S: Rollout,
    P: FnMut(&S, &mut Rng) -> S::Action,
{
    assert!(n_rollouts > 0, "need at least one rollout");
    let samples: Vec<f64> = (0..n_rollouts)
        .map(|_| {
            let mut sim = start.clone();
            let (mut ret, mut done) = sim.advance(first_action, rng);
            let mut discount = 1.0;
            for _ in 1..horizon {
                if done {
                    break;
                }
                discount *= gamma;
                let a = policy(&sim, rng);
                let (r, terminal) = sim.advance(&a, rng);
                ret += discount * r;
                done = terminal;
            }
            ret
        })
        .collect();
    McEstimate::from_samples(&samples)
}

/// Discounted returns of many simulators stepped in lockstep: each
/// `sims[i]` first takes `first_actions` row `i`, then follows `policy`,
/// which maps a batch of observations to a batch of actions. Time limits
/// are ignored; a simulator stops accumulating once it terminates.
pub fn batched_returns<E, P>(
    mut sims: Vec<E>,
    first_actions: ArrayView2<f64>,
    mut policy: P,
    gamma: f64,
    horizon: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>>
where
    E: ContinuousEnv,
    P: FnMut(ArrayView2<f64>, &mut Rng) -> Result<Array2<f64>>,
{
    let n = sims.len();
    if first_actions.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "rollout first actions",
            expected: n,
            actual: first_actions.nrows(),
        });
    }
    let mut returns = vec![0.0; n];
    let mut alive = vec![true; n];
    for (i, sim) in sims.iter_mut().enumerate() {
        let out = sim.step(first_actions.row(i).as_slice().expect("row-major"), rng);
        returns[i] = out.reward;
        alive[i] = !out.terminal;
    }
    let mut discount = 1.0;
    for _ in 1..horizon {
        if !alive.iter().any(|&a| a) {
            break;
        }
        discount *= gamma;
        let obs_dim = sims.first().map_or(0, |s| s.observe().len());
        let mut obs = Array2::zeros((n, obs_dim));
        for (i, sim) in sims.iter().enumerate() {
            obs.row_mut(i).assign(&ArrayView1::from(&sim.observe()));
        }
        let actions = policy(obs.view(), rng)?;
        for (i, sim) in sims.iter_mut().enumerate() {
            if alive[i] {
                let out = sim.step(actions.row(i).as_slice().expect("row-major"), rng);
                returns[i] += discount * out.reward;
                alive[i] = !out.terminal;
            }
        }
    }
    Ok(returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn horizon_meets_tolerance() {
        let h = horizon_for(0.99, pendulum::REWARD_BOUND, 0.01);
        assert!(0.99f64.powi(h as i32) * pendulum::REWARD_BOUND < 0.01);
        assert!(0.99f64.powi(h as i32 - 1) * pendulum::REWARD_BOUND >= 0.01);
    }

    #[test]
    fn gamma_zero_gives_immediate_reward() {
        let env = Pendulum::at(0.4, -0.2);
        let mut rng = Rng::seed_from_u64(0);
        let est = monte_carlo_return(&env, &vec![0.5], |_, _| vec![0.0], 0.0, 50, 3, &mut rng);
        let want = pendulum::REWARD_BOUND - env.cost(0.5);
        assert_eq!(est.mean, want);
    }

    #[test]
    fn deterministic_rollouts_have_zero_variance() {
        let env = Pendulum::at(2.0, 0.0);
        let mut rng = Rng::seed_from_u64(0);
        let est = monte_carlo_return(&env, &vec![1.0], |e, _| vec![-e.theta_dot], 0.99, 300, 5, &mut rng);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn tabular_monte_carlo_matches_exact_solution() {
        let mut rng = Rng::seed_from_u64(21);
        let mdp = TabularSoftMdp::random(5, 3, 0.9, &mut rng);
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let q = mdp.solve_soft_q(&pi, 0.0, 1e-12).unwrap();
        let h = horizon_for(mdp.gamma, mdp.reward_bound, 0.01);
        for (s, a) in [(0, 0), (2, 1), (4, 2)] {
            let est = monte_carlo_return(
                &mdp.walker(s),
                &a,
                |w: &TabularWalker, rng: &mut Rng| pi.sample(w.state, rng),
                mdp.gamma,
                h,
                2000,
                &mut rng,
            );
            // Truncation bias is below 0.01/(1-γ)·... ; allow it on top of 3 SE.
            let trunc = mdp.gamma.powi(h as i32) * mdp.reward_bound / (1.0 - mdp.gamma);
            assert!(
                (est.mean - q[[s, a]]).abs() <= 3.0 * est.std_error + trunc,
                "({s},{a}): {} vs {} ± {}",
                est.mean,
                q[[s, a]],
                est.std_error
            );
        }
    }

    #[test]
    fn batched_returns_match_single_rollouts() {
        let starts = [Pendulum::at(0.3, 0.1), Pendulum::at(2.5, -0.7), Pendulum::at(-1.0, 3.0)];
        let first = ndarray::array![[0.5], [-2.0], [1.5]];
        let mut rng = Rng::seed_from_u64(0);
        let batched = batched_returns(
            starts.to_vec(),
            first.view(),
            |obs, _| Ok(obs.column(2).mapv(|w| -0.3 * w).insert_axis(ndarray::Axis(1))),
            0.99,
            400,
            &mut rng,
        )
        .unwrap();
        for (i, env) in starts.iter().enumerate() {
            let single = monte_carlo_return(
                env,
                &vec![first[[i, 0]]],
                |e, _| vec![-0.3 * e.theta_dot],
                0.99,
                400,
                1,
                &mut rng,
            );
            assert_eq!(batched[i], single.mean);
        }
    }

    #[test]
    fn make_env_by_id() {
        assert_eq!(make_env("pendulum").unwrap().spec().state_dim, 3);
        assert_eq!(make_env("pointmass").unwrap().spec().action_dim, 1);
        assert!(make_env("hopper").is_err());
    }
}
