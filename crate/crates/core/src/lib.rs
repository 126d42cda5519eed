//! Utility soft actor-critic.
//!
//! Twin-critic soft actor-critic where the critic target and the actor
//! objective each aggregate the two critic outputs through an exponential
//! utility of a Laplace-distributed value estimate, `μ + g(κ)·σ`. A single
//! scalar κ ∈ (−1, 1) per role dials between pessimism and optimism;
//! `g(κ) = −1` recovers the usual min-clipped target.
//!
//! Modules:
//! - [`nn`]: MLP with reverse-mode gradients, Adam, Polyak averaging.
//! - [`policy`]: tanh-squashed Gaussian actor and entropy temperature.
//! - [`utility`]: `g(κ)`, utilities of Laplace and Gaussian value
//!   distributions, twin-critic aggregation rules.
//! - [`agent`]: replay buffer and the training step.
//! - [`envs`]: pendulum, point-mass, and an exact tabular soft MDP.
//! - [`harness`]: configs, training runs, evaluation metrics, grids, output.

pub mod agent;
pub mod envs;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod utility;
pub mod verify;

mod error;

pub use error::{Error, Result};

/// RNG used for every seeded stream in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub use agent::{AgentConfig, ReplayBuffer, Transition, UsacAgent};
pub use harness::{MetricsRecord, RunConfig};
pub use utility::{AggregationRule, CriticDistribution, UtilityParams};
