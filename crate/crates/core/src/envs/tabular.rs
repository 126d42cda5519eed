//! Small discrete soft MDP with exact policy evaluation.
//!
//! Everything here is computed with finite sums, so it serves as ground
//! truth for the soft Bellman operator, the Bellman-error/TD-loss bound and
//! Monte-Carlo value estimates.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::Exp1;

use super::Rollout;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TabularSoftMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p(s'|s,a)` at index `[(s * n_actions + a) * n_states + s']`.
    pub transitions: Vec<f64>,
    /// `r(s,a)`, shape `(n_states, n_actions)`.
    pub rewards: Array2<f64>,
    pub gamma: f64,
    pub initial: Vec<f64>,
    pub reward_bound: f64,
}

/// Stochastic policy `π(a|s)` with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub probs: Array2<f64>,
}

fn dirichlet_ones(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

impl TabularSoftMdp {
    /// Dense random MDP: Dirichlet(1) transition rows and initial
    /// distribution, rewards uniform on `[0, 1]`.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, rng: &mut Rng) -> Self {
        let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            transitions.extend(dirichlet_ones(n_states, rng));
        }
        let rewards = Array2::from_shape_simple_fn((n_states, n_actions), || rng.random_range(0.0..=1.0));
        Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            initial: dirichlet_ones(n_states, rng),
            reward_bound: 1.0,
        }
    }

    /// Checks shapes, probability rows and `γ < 1`.
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if self.transitions.len() != ns * na * ns || self.rewards.dim() != (ns, na) || self.initial.len() != ns {
            return Err(Error::config("tabular MDP arrays have inconsistent shapes"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("tabular MDP needs gamma in [0, 1)"));
        }
        let rows = self.transitions.chunks(ns).chain(std::iter::once(&self.initial[..]));
        for row in rows {
            if row.iter().any(|&p| p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::config("probability rows must be nonnegative and sum to 1"));
            }
        }
        if self.rewards.iter().any(|&r| !(0.0..=self.reward_bound).contains(&r)) {
            return Err(Error::config("rewards must lie in [0, B_r]"));
        }
        Ok(())
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.n_actions + a) * self.n_states + next]
    }

    fn next_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    /// Expected soft value of the next state-action pair under `π`:
    /// `V(s') = Σ_a' π(a'|s')[Q(s',a') − α log π(a'|s')]`.
    fn soft_state_values(&self, policy: &TabularPolicy, q: &Array2<f64>, alpha: f64) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        let pi = policy.probs[[s, a]];
                        pi * (q[[s, a]] - alpha * pi.ln())
                    })
                    .sum()
            })
            .collect()
    }

    /// `(T^π Q)(s,a) = r(s,a) + γ Σ_{s',a'} p(s'|s,a) π(a'|s') [Q(s',a') − α log π(a'|s')]`.
    pub fn soft_bellman_apply(&self, policy: &TabularPolicy, q: &Array2<f64>, alpha: f64) -> Array2<f64> {
        let v = self.soft_state_values(policy, q, alpha);
        Array2::from_shape_fn((self.n_states, self.n_actions), |(s, a)| {
            let ev: f64 = self.next_row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            self.rewards[[s, a]] + self.gamma * ev
        })
    }

    /// Fixed-point iteration from `Q = 0` until the sup-norm change is below `tol`.
    pub fn solve_soft_q(&self, policy: &TabularPolicy, alpha: f64, tol: f64) -> Result<Array2<f64>> {
        if !(tol > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        let mut q = Array2::zeros((self.n_states, self.n_actions));
        loop {
            let next = self.soft_bellman_apply(policy, &q, alpha);
            let change = sup_distance(&next, &q);
            q = next;
            if change < tol {
                return Ok(q);
            }
        }
    }

    /// Normalized discounted state-action occupancy
    /// `ρ(s,a) = (1−γ) Σ_t γ^t Pr(s_t = s, a_t = a)` from `p0`.
    pub fn occupancy(&self, policy: &TabularPolicy) -> Array2<f64> {
        let (ns, na) = (self.n_states, self.n_actions);
        let start = Array2::from_shape_fn((ns, na), |(s, a)| self.initial[s] * policy.probs[[s, a]]);
        // ρ = (1−γ)ρ0 + γ P^T ρ, iterated to convergence.
        let mut rho = start.mapv(|x| (1.0 - self.gamma) * x);
        loop {
            let mut next = start.mapv(|x| (1.0 - self.gamma) * x);
            for s in 0..ns {
                for a in 0..na {
                    let mass = rho[[s, a]];
                    if mass == 0.0 {
                        continue;
                    }
                    for (s2, p) in self.next_row(s, a).iter().enumerate() {
                        for a2 in 0..na {
                            next[[s2, a2]] += self.gamma * mass * p * policy.probs[[s2, a2]];
                        }
                    }
                }
            }
            let change = sup_distance(&next, &rho);
            rho = next;
            if change < 1e-15 {
                return rho;
            }
        }
    }

    /// Both sides of the Bellman-error bound for a value table `u`:
    ///
    /// `lhs = E_ρ[(T^π u − u)²]`,
    /// `rhs = E_ρ E_{p^π}[(r + γ(u(s',a') − α log π(a'|s')) − u(s,a))²]`.
    ///
    /// Jensen's inequality gives `lhs ≤ rhs`.
    pub fn bellman_error_bound(&self, policy: &TabularPolicy, alpha: f64, u: &Array2<f64>) -> (f64, f64) {
        let rho = self.occupancy(policy);
        let tu = self.soft_bellman_apply(policy, u, alpha);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = rho[[s, a]];
                let be = tu[[s, a]] - u[[s, a]];
                lhs += w * be * be;
                let mut inner = 0.0;
                for (s2, p) in self.next_row(s, a).iter().enumerate() {
                    for a2 in 0..self.n_actions {
                        let pi = policy.probs[[s2, a2]];
                        let td = self.rewards[[s, a]] + self.gamma * (u[[s2, a2]] - alpha * pi.ln()) - u[[s, a]];
                        inner += p * pi * td * td;
                    }
                }
                rhs += w * inner;
            }
        }
        (lhs, rhs)
    }

    pub fn walker(&self, state: usize) -> TabularWalker<'_> {
        TabularWalker { mdp: self, state }
    }
}

impl TabularPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    /// Dirichlet(1) rows.
    pub fn random(n_states: usize, n_actions: usize, rng: &mut Rng) -> Self {
        let mut probs = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            for (a, p) in dirichlet_ones(n_actions, rng).into_iter().enumerate() {
                probs[[s, a]] = p;
            }
        }
        Self { probs }
    }

    pub fn validate(&self) -> Result<()> {
        for row in self.probs.rows() {
            if row.iter().any(|&p| !(p > 0.0)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::config("policy rows must be positive and sum to 1"));
            }
        }
        Ok(())
    }

    pub fn sample(&self, state: usize, rng: &mut Rng) -> usize {
        let mut x: f64 = rng.random();
        let row = self.probs.row(state);
        for (a, p) in row.iter().enumerate() {
            x -= p;
            if x < 0.0 {
                return a;
            }
        }
        row.len() - 1
    }
}

pub fn sup_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cursor over a [`TabularSoftMdp`] for rollouts.
#[derive(Debug, Clone)]
pub struct TabularWalker<'a> {
    pub mdp: &'a TabularSoftMdp,
    pub state: usize,
}

impl Rollout for TabularWalker<'_> {
    type Action = usize;

    fn advance(&mut self, action: &usize, rng: &mut Rng) -> (f64, bool) {
        let r = self.mdp.rewards[[self.state, *action]];
        let mut x: f64 = rng.random();
        let row = self.mdp.next_row(self.state, *action);
        let mut next = row.len() - 1;
        for (s2, p) in row.iter().enumerate() {
            x -= p;
            if x < 0.0 {
                next = s2;
                break;
            }
        }
        self.state = next;
        (r, false)
    }
}
