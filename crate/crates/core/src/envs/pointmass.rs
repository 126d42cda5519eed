//! One-dimensional point mass (double integrator) with quadratic cost.
//!
//! `v' = v + dt·u`, `x' = x + dt·v'` with `dt = 0.1`, `u ∈ [−1, 1]`, cost
//! `x² + 0.1v² + 0.1u²`. Starts uniform in `[−1, 1]²` and truncates after
//! 50 steps. Within one episode `|v| ≤ 6` and `|x| ≤ 18.75`, which bounds
//! the cost by `B_r`; the reward is `max(B_r − cost, 0)`.
//!
//! In matrix form `s' = A s + B u` with `A = [[1, dt], [0, 1]]` and
//! `B = [dt², dt]`, so a discounted finite-horizon Riccati recursion gives
//! the minimum unconstrained cost and hence an upper bound on any policy's
//! return.

use rand::Rng as _;

use super::{ContinuousEnv, EnvSpec, StepOutcome};
use crate::{Error, Result, Rng};

pub const DT: f64 = 0.1;
pub const MAX_FORCE: f64 = 1.0;
pub const MAX_EPISODE_STEPS: usize = 50;
pub const POSITION_WEIGHT: f64 = 1.0;
pub const VELOCITY_WEIGHT: f64 = 0.1;
pub const CONTROL_WEIGHT: f64 = 0.1;

const MAX_SPEED_IN_EPISODE: f64 = 1.0 + MAX_EPISODE_STEPS as f64 * DT * MAX_FORCE;
// 1 + dt·Σ_{k=1..T} (1 + k·dt)
const MAX_POSITION_IN_EPISODE: f64 = 18.75;

pub const REWARD_BOUND: f64 = POSITION_WEIGHT * MAX_POSITION_IN_EPISODE * MAX_POSITION_IN_EPISODE
    + VELOCITY_WEIGHT * MAX_SPEED_IN_EPISODE * MAX_SPEED_IN_EPISODE
    + CONTROL_WEIGHT * MAX_FORCE * MAX_FORCE;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointMass {
    pub position: f64,
    pub velocity: f64,
    pub elapsed: usize,
}

type Mat2 = [[f64; 2]; 2];

impl PointMass {
    pub fn at(position: f64, velocity: f64) -> Self {
        Self {
            position,
            velocity,
            elapsed: 0,
        }
    }

    pub fn cost(&self, u: f64) -> f64 {
        POSITION_WEIGHT * self.position * self.position
            + VELOCITY_WEIGHT * self.velocity * self.velocity
            + CONTROL_WEIGHT * u * u
    }

    /// Riccati matrices `P_0..P_T` for the discounted `horizon`-step problem
    /// (`P_T = 0`) and the feedback gains `K_t` with `u_t = −K_t s_t`.
    pub fn riccati(gamma: f64, horizon: usize) -> (Vec<Mat2>, Vec<[f64; 2]>) {
        let a: Mat2 = [[1.0, DT], [0.0, 1.0]];
        let b = [DT * DT, DT];
        let q: Mat2 = [[POSITION_WEIGHT, 0.0], [0.0, VELOCITY_WEIGHT]];
        let r = CONTROL_WEIGHT;
        let mut ps = vec![[[0.0; 2]; 2]; horizon + 1];
        let mut gains = vec![[0.0; 2]; horizon];
        for t in (0..horizon).rev() {
            let p = ps[t + 1];
            // PA, PB
            let pa = mul(&p, &a);
            let pb = [p[0][0] * b[0] + p[0][1] * b[1], p[1][0] * b[0] + p[1][1] * b[1]];
            let btpb = b[0] * pb[0] + b[1] * pb[1];
            // B'PA (row vector)
            let btpa = [b[0] * pa[0][0] + b[1] * pa[1][0], b[0] * pa[0][1] + b[1] * pa[1][1]];
            let denom = r + gamma * btpb;
            let k = [gamma * btpa[0] / denom, gamma * btpa[1] / denom];
            let atpa = mul(&transpose(&a), &pa);
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = q[i][j] + gamma * atpa[i][j] - gamma * btpa[i] * k[j];
                }
            }
            ps[t] = next;
            gains[t] = k;
        }
        (ps, gains)
    }

    /// Upper bound on the discounted return of any policy over one episode
    /// from `(x, v)`: `Σ_t γ^t B_r − s'P_0 s`.
    pub fn return_upper_bound(position: f64, velocity: f64, gamma: f64) -> f64 {
        let (ps, _) = Self::riccati(gamma, MAX_EPISODE_STEPS);
        let p = ps[0];
        let s = [position, velocity];
        let min_cost = s[0] * (p[0][0] * s[0] + p[0][1] * s[1]) + s[1] * (p[1][0] * s[0] + p[1][1] * s[1]);
        let reward_sum: f64 = (0..MAX_EPISODE_STEPS)
            .map(|t| gamma.powi(t as i32) * REWARD_BOUND)
            .sum();
        reward_sum - min_cost
    }
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

impl ContinuousEnv for PointMass {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: "pointmass",
            state_dim: 2,
            action_dim: 1,
            low: vec![-MAX_FORCE],
            high: vec![MAX_FORCE],
            max_episode_steps: MAX_EPISODE_STEPS,
            reward_bound: REWARD_BOUND,
            reward_shift: REWARD_BOUND,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.position = rng.random_range(-1.0..1.0);
        self.velocity = rng.random_range(-1.0..1.0);
        self.elapsed = 0;
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }

    fn step(&mut self, action: &[f64], _rng: &mut Rng) -> StepOutcome {
        let raw = action[0];
        let u = raw.clamp(-MAX_FORCE, MAX_FORCE);
        let reward = (REWARD_BOUND - self.cost(u)).max(0.0);
        self.velocity += DT * u;
        self.position += DT * self.velocity;
        self.elapsed += 1;
        StepOutcome {
            observation: self.observe(),
            reward,
            terminal: false,
            truncated: self.elapsed >= MAX_EPISODE_STEPS,
            clipped: u != raw,
        }
    }

    fn state(&self) -> Vec<f64> {
        vec![self.position, self.velocity, self.elapsed as f64]
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        let [x, v, elapsed] = state else {
            return Err(Error::Checkpoint("point-mass state needs 3 values".into()));
        };
        self.position = *x;
        self.velocity = *v;
        self.elapsed = *elapsed as usize;
        Ok(())
    }
}
