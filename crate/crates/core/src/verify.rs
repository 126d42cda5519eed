//! Built-in numerical self-checks, runnable from the command line.
//!
//! Each check recomputes a quantity through an independent route (closed
//! form vs. sampling, exact solver vs. fixed-point residual, analytic vs.
//! finite-difference gradients) and reports pass/fail with the measured
//! discrepancy.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::agent::{AgentConfig, AlphaMode, UsacAgent};
use crate::envs::{sup_distance, TabularPolicy, TabularSoftMdp};
use crate::harness::{run_csv_string, run_training, RunConfig};
use crate::utility::{
    g, gaussian_utility, laplace_utility, twin_stats_laplace, twin_stats_top, AggregationRule, KAPPA_MIN_CLIP,
    KAPPA_TOP_PESSIMISTIC,
};
use crate::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, passed: bool, started: Instant, detail: String) -> CheckReport {
    CheckReport {
        name,
        passed,
        detail: format!("{detail} [{:.2}s]", started.elapsed().as_secs_f64()),
    }
}

/// Odd, zero at zero, strictly increasing, and the published constants.
pub fn utility_math() -> CheckReport {
    let t = Instant::now();
    let n = 10_000;
    let grid: Vec<f64> = (1..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&k| g(k).expect("in domain")).collect();
    let increasing = vals.windows(2).all(|w| w[0] < w[1]);
    let odd = grid.iter().all(|&k| g(-k).unwrap() == -g(k).unwrap());
    let e1 = (g(KAPPA_MIN_CLIP).unwrap() + 1.0).abs();
    let e2 = (g(KAPPA_TOP_PESSIMISTIC).unwrap() + SQRT_2).abs();
    let passed = g(0.0).ok() == Some(0.0) && odd && increasing && e1 < 1e-4 && e2 < 1e-4;
    report(
        "utility-math",
        passed,
        t,
        format!("odd={odd} increasing={increasing} |g(min)+1|={e1:.2e} |g(top)+sqrt2|={e2:.2e}"),
    )
}

/// Min-clip, κ with `g = −1`, and TOP with `β = −1/√2` agree on random pairs.
pub fn min_clip_equivalence() -> CheckReport {
    let t = Instant::now();
    let mut rng = Rng::seed_from_u64(2);
    let lap = AggregationRule::laplace(KAPPA_MIN_CLIP).unwrap().compile().unwrap();
    let top = AggregationRule::TopBeta { beta: -FRAC_1_SQRT_2 }.compile().unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_formula: f64 = 0.0;
    for _ in 0..100_000 {
        let q1: f64 = rng.random_range(-1e3..1e3);
        let q2: f64 = rng.random_range(-1e3..1e3);
        let m = q1.min(q2);
        worst = worst
            .max((lap.value(q1, q2) - m).abs())
            .max((top.value(q1, q2) - m).abs());
        // The distribution form, for reference: μ + gσ with g exactly −1.
        let d = twin_stats_laplace(q1, q2);
        worst_formula = worst_formula.max((d.mu - d.sigma - m).abs());
        let d = twin_stats_top(q1, q2);
        worst_formula = worst_formula.max((d.mu - FRAC_1_SQRT_2 * d.sigma - m).abs());
    }
    report(
        "min-clip-equivalence",
        worst < 1e-9 && worst_formula < 1e-9,
        t,
        format!("max deviation {worst:.2e} (formula route {worst_formula:.2e})"),
    )
}

fn log_mean_exp(lambda: f64, samples: &[f64]) -> f64 {
    let m = samples.iter().map(|x| lambda * x).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = samples.iter().map(|x| (lambda * x - m).exp()).sum::<f64>() / samples.len() as f64;
    (m + s.ln()) / lambda
}

/// Closed-form utilities against `(1/λ) log mean exp(λX)` over 10⁶ draws,
/// σ = 1. The Laplace check covers |κ| ≤ 1/2, where `exp(λX)` has finite
/// variance; beyond that the plain sample mean does not settle at this
/// sample size.
pub fn sampling_oracle() -> CheckReport {
    let t = Instant::now();
    let n = 1_000_000;
    let mut rng = Rng::seed_from_u64(3);
    let (mu, sigma) = (0.5, 1.0);
    let b = sigma / SQRT_2;
    let laplace: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            mu + if rng.random::<bool>() { b * e } else { -b * e }
        })
        .collect();
    let gauss: Vec<f64> = (0..n)
        .map(|_| mu + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut worst: f64 = 0.0;
    for kappa in [-0.5, -0.3, -0.1, 0.1, 0.3, 0.5] {
        let lambda = SQRT_2 * kappa / sigma;
        let closed = laplace_utility(crate::utility::CriticDistribution { mu, sigma }, kappa).unwrap();
        worst = worst.max((log_mean_exp(lambda, &laplace) - closed).abs());
    }
    for lambda in [-1.0, -0.5, 0.5, 1.0] {
        let closed = gaussian_utility(mu, sigma * sigma, lambda);
        worst = worst.max((log_mean_exp(lambda, &gauss) - closed).abs());
    }
    report("sampling-oracle", worst < 1e-2, t, format!("max error {worst:.2e}"))
}

/// Fixed-point residual and measured contraction of the soft Bellman operator.
pub fn soft_bellman() -> CheckReport {
    let t = Instant::now();
    let mut rng = Rng::seed_from_u64(5);
    let mut worst_residual: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut gamma = 0.0;
    for _ in 0..10 {
        let mdp = TabularSoftMdp::random(5, 3, 0.9, &mut rng);
        gamma = mdp.gamma;
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let alpha = rng.random_range(0.0..1.0);
        let q = mdp.solve_soft_q(&pi, alpha, 1e-10).unwrap();
        worst_residual = worst_residual.max(sup_distance(&mdp.soft_bellman_apply(&pi, &q, alpha), &q));
        for _ in 0..10 {
            let a = Array2::from_shape_fn((5, 3), |_| rng.random_range(-10.0..10.0));
            let b = Array2::from_shape_fn((5, 3), |_| rng.random_range(-10.0..10.0));
            let ratio = sup_distance(
                &mdp.soft_bellman_apply(&pi, &a, alpha),
                &mdp.soft_bellman_apply(&pi, &b, alpha),
            ) / sup_distance(&a, &b);
            worst_ratio = worst_ratio.max(ratio);
        }
    }
    report(
        "soft-bellman",
        worst_residual < 1e-8 && worst_ratio <= gamma + 1e-12,
        t,
        format!("residual {worst_residual:.2e}, contraction {worst_ratio:.6} (gamma {gamma})"),
    )
}

/// Bellman error under the occupancy never exceeds the expected sampled TD loss.
pub fn bellman_error_bound() -> CheckReport {
    let t = Instant::now();
    let mut rng = Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut worst_fixed: f64 = 0.0;
    for _ in 0..20 {
        let mdp = TabularSoftMdp::random(5, 3, 0.9, &mut rng);
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let alpha = 0.2;
        for _ in 0..100 {
            let u = Array2::from_shape_fn((5, 3), |_| rng.random_range(-20.0..20.0));
            let (lhs, rhs) = mdp.bellman_error_bound(&pi, alpha, &u);
            violations += usize::from(lhs > rhs);
        }
        let q = mdp.solve_soft_q(&pi, alpha, 1e-12).unwrap();
        worst_fixed = worst_fixed.max(mdp.bellman_error_bound(&pi, alpha, &q).0);
    }
    report(
        "bellman-error-bound",
        violations == 0 && worst_fixed < 1e-10,
        t,
        format!("violations {violations}/2000, lhs at fixed point {worst_fixed:.2e}"),
    )
}

fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Critic and actor gradients against central differences on a width-16 agent.
pub fn gradients() -> CheckReport {
    let t = Instant::now();
    let mut rng = Rng::seed_from_u64(11);
    let cfg = AgentConfig {
        hidden: vec![16, 16],
        rule_actor: AggregationRule::laplace(0.4).unwrap(),
        alpha: AlphaMode::Fixed { value: 0.3 },
        ..AgentConfig::default()
    };
    let agent = UsacAgent::new(cfg, 3, &[-2.0], &[2.0], &mut rng).unwrap();
    let n = 8;
    let states = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
    let actions = Array2::from_shape_fn((n, 1), |_| rng.random_range(-2.0..2.0));
    let targets = ndarray::Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let noise = agent.actor.draw_noise(n, &mut rng);

    let (_, cg) = agent
        .critic_loss_grad(0, states.view(), actions.view(), targets.view())
        .unwrap();
    let critic_fd = central_difference(&agent.critics[0].flat_params(), 1e-6, |p| {
        let mut c = agent.clone();
        c.critics[0].set_flat_params(p).unwrap();
        c.critic_loss_grad(0, states.view(), actions.view(), targets.view())
            .unwrap()
            .0
    });
    let critic_err = max_rel_error(&cg.flatten(), &critic_fd);

    let step = agent.actor_objective_grad(states.view(), noise.view()).unwrap();
    let actor_fd = central_difference(&agent.actor.net.flat_params(), 1e-6, |p| {
        let mut a = agent.clone();
        a.actor.net.set_flat_params(p).unwrap();
        -a.actor_objective_grad(states.view(), noise.view()).unwrap().objective
    });
    let actor_err = max_rel_error(&step.loss_grads.flatten(), &actor_fd);
    report(
        "gradients",
        critic_err < 1e-4 && actor_err < 1e-4,
        t,
        format!("critic {critic_err:.2e}, actor {actor_err:.2e}"),
    )
}

/// Two runs with the same seed emit identical CSV text.
pub fn determinism() -> CheckReport {
    let t = Instant::now();
    let mut cfg = RunConfig {
        env: "pendulum".into(),
        total_steps: 300,
        eval_every: 100,
        eval_episodes: 2,
        record_wall_clock: false,
        ..RunConfig::default()
    };
    cfg.estimation.pairs = 4;
    cfg.estimation.rollouts = 2;
    cfg.agent.hidden = vec![16, 16];
    cfg.agent.batch_size = 32;
    cfg.agent.warmup_steps = 100;
    let csv = |c: RunConfig| {
        let out = run_training(c).unwrap();
        run_csv_string(&out.records, &out.provenance).unwrap()
    };
    let (a, b) = (csv(cfg.clone()), csv(cfg));
    report("determinism", a == b, t, format!("{} bytes", a.len()))
}

pub fn run_all() -> Vec<CheckReport> {
    vec![
        utility_math(),
        min_clip_equivalence(),
        sampling_oracle(),
        soft_bellman(),
        bellman_error_bound(),
        gradients(),
        determinism(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for r in [utility_math(), min_clip_equivalence(), soft_bellman(), gradients()] {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
