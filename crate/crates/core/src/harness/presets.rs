//! Shipped configurations.
//!
//! `full-scale` carries the full-scale shared hyperparameters. The `pendulum-*`
//! presets are a desk-scale version: 30k steps, evaluation every 1% of the
//! run, two hidden layers of 64 units. The benchmark-named presets keep the
//! best `(κ_critic, κ_actor)` pair reported for that benchmark and apply it
//! to the desk-scale pendulum, since the original simulators are not
//! available here.

use super::config::RunConfig;
use crate::utility::{AggregationRule, KAPPA_MIN_CLIP};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: RunConfig,
    /// Training seeds for multi-seed protocols.
    pub seeds: Vec<u64>,
}

/// Published best pairs: `(name, κ_critic, κ_actor)`.
pub const BENCHMARK_PAIRS: &[(&str, f64, f64)] = &[
    ("ant", KAPPA_MIN_CLIP, -0.99),
    ("halfcheetah", -0.33, -0.50),
    ("hopper", KAPPA_MIN_CLIP, 0.50),
    ("humanoid", KAPPA_MIN_CLIP, KAPPA_MIN_CLIP),
    ("walker2d", KAPPA_MIN_CLIP, 0.0),
];

pub const DESK_TOTAL_STEPS: u64 = 30_000;
pub const DESK_HIDDEN: [usize; 2] = [64, 64];

/// Desk-scale pendulum with min-clipped critic and actor.
pub fn pendulum_desk() -> RunConfig {
    let mut c = RunConfig {
        env: "pendulum".into(),
        total_steps: DESK_TOTAL_STEPS,
        eval_every: DESK_TOTAL_STEPS / 100,
        ..RunConfig::default()
    };
    c.agent.hidden = DESK_HIDDEN.to_vec();
    c
}

fn with_kappas(mut c: RunConfig, kc: f64, ka: f64) -> RunConfig {
    c.agent.rule_critic = AggregationRule::LaplaceUtility { kappa: kc };
    c.agent.rule_actor = AggregationRule::LaplaceUtility { kappa: ka };
    c
}

pub fn all() -> Vec<Preset> {
    let mut out = vec![
        Preset {
            name: "full-scale",
            description: "full-scale shared hyperparameters (1M steps, 2x256 hidden, min-clipped)",
            config: RunConfig::default(),
            seeds: vec![1],
        },
        Preset {
            name: "pendulum-sac",
            description: "desk-scale pendulum, min-clipped critic and actor",
            config: pendulum_desk(),
            seeds: vec![1, 2, 3],
        },
        Preset {
            name: "pendulum-optimistic-critic",
            description: "desk-scale pendulum with an optimistic critic target (kappa_critic = 0.5)",
            config: with_kappas(pendulum_desk(), 0.5, KAPPA_MIN_CLIP),
            seeds: vec![1, 2, 3],
        },
        Preset {
            name: "pointmass-sac",
            description: "point mass, 10k steps, min-clipped",
            config: {
                let mut c = pendulum_desk();
                c.env = "pointmass".into();
                c.total_steps = 10_000;
                c.eval_every = 100;
                c
            },
            seeds: vec![1, 2, 3],
        },
        Preset {
            name: "protocol-curves",
            description: "learning-curve protocol: 3 seeds x 3 evaluation episodes",
            config: RunConfig {
                eval_episodes: 3,
                ..pendulum_desk()
            },
            seeds: vec![1, 2, 3],
        },
        Preset {
            name: "protocol-table",
            description: "final-return protocol: 5 seeds x 10 evaluation episodes",
            config: RunConfig {
                eval_episodes: 10,
                ..pendulum_desk()
            },
            seeds: vec![1, 2, 3, 4, 5],
        },
    ];
    for &(name, kc, ka) in BENCHMARK_PAIRS {
        out.push(Preset {
            name,
            description: "best published kappa pair for this benchmark, on the desk-scale pendulum",
            config: with_kappas(pendulum_desk(), kc, ka),
            seeds: vec![1, 2, 3],
        });
    }
    out
}

pub fn find(name: &str) -> Result<Preset> {
    all().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = all().iter().map(|p| p.name).collect();
        Error::config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })
}
