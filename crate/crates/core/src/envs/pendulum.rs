//! Pendulum swing-up.
//!
//! Uniform rod of mass `m` and length `l` on a frictionless pivot, angle `θ`
//! measured from upright. Semi-implicit Euler with `dt = 0.05`:
//!
//! ```text
//! θ̇' = clip(θ̇ + (3g/(2l)·sin θ + 3u/(m l²))·dt, ±8)
//! θ'  = θ + θ̇'·dt
//! ```
//!
//! Torque `u ∈ [−2, 2]`. Per-step cost `θ_n² + 0.1θ̇² + 0.001u²` (θ_n wrapped
//! to [−π, π)) is bounded by `B_r = π² + 6.4 + 0.004`; the reward is
//! `B_r − cost ∈ [0, B_r]`. Episodes truncate after 200 steps and never
//! terminate.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{ContinuousEnv, EnvSpec, StepOutcome};
use crate::{Error, Result, Rng};

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_EPISODE_STEPS: usize = 200;
pub const REWARD_BOUND: f64 = PI * PI + 0.1 * MAX_SPEED * MAX_SPEED + 0.001 * MAX_TORQUE * MAX_TORQUE;

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub theta: f64,
    pub theta_dot: f64,
    pub elapsed: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            theta: PI,
            theta_dot: 0.0,
            elapsed: 0,
        }
    }
}

fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn at(theta: f64, theta_dot: f64) -> Self {
        Self {
            theta,
            theta_dot,
            elapsed: 0,
        }
    }

    /// Mechanical energy with the potential referenced to the pivot.
    pub fn energy(&self) -> f64 {
        MASS * LENGTH * LENGTH / 6.0 * self.theta_dot * self.theta_dot
            + 0.5 * MASS * GRAVITY * LENGTH * self.theta.cos()
    }

    pub fn cost(&self, torque: f64) -> f64 {
        let th = angle_normalize(self.theta);
        th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque
    }
}

impl ContinuousEnv for Pendulum {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: "pendulum",
            state_dim: 3,
            action_dim: 1,
            low: vec![-MAX_TORQUE],
            high: vec![MAX_TORQUE],
            max_episode_steps: MAX_EPISODE_STEPS,
            reward_bound: REWARD_BOUND,
            reward_shift: REWARD_BOUND,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.elapsed = 0;
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    fn step(&mut self, action: &[f64], _rng: &mut Rng) -> StepOutcome {
        let raw = action[0];
        let u = raw.clamp(-MAX_TORQUE, MAX_TORQUE);
        let reward = REWARD_BOUND - self.cost(u);
        let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
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
        vec![self.theta, self.theta_dot, self.elapsed as f64]
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        let [theta, theta_dot, elapsed] = state else {
            return Err(Error::Checkpoint("pendulum state needs 3 values".into()));
        };
        self.theta = *theta;
        self.theta_dot = *theta_dot;
        self.elapsed = *elapsed as usize;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let mut env = Pendulum::at(0.0, 0.0);
        let mut rng = Rng::seed_from_u64(0);
        let out = env.step(&[0.0], &mut rng);
        assert!(env.theta.abs() < 1e-6 && env.theta_dot.abs() < 1e-6);
        assert_eq!(out.reward, REWARD_BOUND);
    }

    #[test]
    fn small_swing_conserves_energy() {
        let mut env = Pendulum::at(PI - 0.3, 0.0);
        let mut rng = Rng::seed_from_u64(0);
        let e0 = env.energy();
        for _ in 0..200 {
            env.step(&[0.0], &mut rng);
            assert!((env.energy() - e0).abs() <= 0.01 * e0.abs());
        }
    }

    #[test]
    fn large_swing_energy_does_not_drift() {
        let mut env = Pendulum::at(PI - 1.0, 0.0);
        let mut rng = Rng::seed_from_u64(0);
        let mut window_mean = |env: &mut Pendulum| {
            let mut acc = 0.0;
            for _ in 0..200 {
                env.step(&[0.0], &mut rng);
                acc += env.energy();
            }
            acc / 200.0
        };
        let first = window_mean(&mut env);
        for _ in 0..8 {
            window_mean(&mut env);
        }
        let last = window_mean(&mut env);
        assert!((last - first).abs() <= 0.01 * first.abs(), "{first} -> {last}");
    }

    #[test]
    fn rewards_stay_in_bounds_and_clipping_is_flagged() {
        let mut env = Pendulum::default();
        let mut rng = Rng::seed_from_u64(3);
        env.reset(&mut rng);
        for t in 0..MAX_EPISODE_STEPS {
            let a: f64 = rng.random_range(-3.0..3.0);
            let out = env.step(&[a], &mut rng);
            assert!((0.0..=REWARD_BOUND).contains(&out.reward));
            assert_eq!(out.clipped, a.abs() > MAX_TORQUE);
            assert_eq!(out.truncated, t + 1 == MAX_EPISODE_STEPS);
            assert!(!out.terminal);
        }
    }

    #[test]
    fn state_round_trip() {
        let mut env = Pendulum::default();
        let mut rng = Rng::seed_from_u64(4);
        env.reset(&mut rng);
        env.step(&[1.0], &mut rng);
        let mut other = Pendulum::default();
        other.set_state(&env.state()).unwrap();
        assert_eq!(other, env);
    }
}
