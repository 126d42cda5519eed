use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::envs::{make_env, ContinuousEnv, ENV_IDS};
use crate::{Error, Result};

/// How evaluation episodes pick actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalAction {
    /// `scale·tanh(μ(s)) + offset`.
    #[default]
    Deterministic,
    /// A fresh draw from the policy.
    Sampled,
}

/// Monte-Carlo estimation-error measurement at each evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// `(s, a)` pairs per evaluation point; 0 disables the measurement.
    pub pairs: usize,
    /// Rollouts per pair.
    pub rollouts: usize,
    /// Truncation tolerance: the horizon is the smallest `h` with `γ^h·B_r < tol`.
    pub tolerance: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            pairs: 20,
            rollouts: 10,
            tolerance: 0.01,
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub eval_action: EvalAction,
    pub estimation: EstimationConfig,
    /// When false the wall-clock column is written as 0, so repeated runs
    /// produce byte-identical output.
    pub record_wall_clock: bool,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "pendulum".into(),
            total_steps: 1_000_000,
            eval_every: 10_000,
            eval_episodes: 10,
            seed: 1,
            eval_action: EvalAction::default(),
            estimation: EstimationConfig::default(),
            record_wall_clock: true,
            agent: AgentConfig::default(),
        }
    }
}

/// Upper limit on evaluation points per run.
pub const MAX_EVAL_POINTS: u64 = 100_000;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !ENV_IDS.contains(&self.env.as_str()) {
            return Err(Error::config(format!(
                "unknown environment {:?}; expected one of {ENV_IDS:?}",
                self.env
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be positive"));
        }
        if !self.total_steps.is_multiple_of(self.eval_every) {
            return Err(Error::config(format!(
                "eval_every ({}) must divide total_steps ({})",
                self.eval_every, self.total_steps
            )));
        }
        if self.total_steps / self.eval_every > MAX_EVAL_POINTS {
            return Err(Error::config("too many evaluation points"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes must be positive"));
        }
        if self.estimation.pairs > 0 && self.estimation.rollouts == 0 {
            return Err(Error::config("estimation.rollouts must be positive"));
        }
        if !(self.estimation.tolerance > 0.0 && self.estimation.tolerance.is_finite()) {
            return Err(Error::config("estimation.tolerance must be positive"));
        }
        self.agent.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical TOML form (first 16 digits).
    pub fn hash(&self) -> String {
        hex16(&Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Hash of everything except `total_steps`: a run checkpoint may be
    /// resumed under any config with the same key.
    pub fn resume_key(&self) -> u64 {
        let mut c = self.clone();
        c.total_steps = 0;
        let d = Sha256::digest(c.to_toml().as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    pub fn env_spec(&self) -> Result<crate::envs::EnvSpec> {
        Ok(make_env(&self.env)?.spec())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
