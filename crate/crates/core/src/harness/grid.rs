use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex16, RunConfig};
use super::metrics::{area_under_curve, mean_std};
use super::run::{run_training, RunOutcome};
use crate::utility::{AggregationRule, KAPPA_CONFIG_BOUND};
use crate::{Error, Result};

/// A named cell with arbitrary rules, e.g. a TOP-style or mean baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineCell {
    pub name: String,
    pub rule_critic: AggregationRule,
    pub rule_actor: AggregationRule,
}

/// Cartesian `(κ_critic, κ_actor)` sweep plus optional baseline cells, each
/// run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub kappa_critic: Vec<f64>,
    pub kappa_actor: Vec<f64>,
    pub seeds: Vec<u64>,
    pub baselines: Vec<BaselineCell>,
    /// Upper bound on cells × seeds.
    pub max_runs: usize,
    pub base: RunConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            kappa_critic: vec![-0.831559, -0.5, -0.33],
            kappa_actor: vec![-0.99, -0.5, 0.0, 0.5, 0.99],
            seeds: vec![1, 2, 3],
            baselines: Vec::new(),
            max_runs: 1000,
            base: RunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub rule_critic: AggregationRule,
    pub rule_actor: AggregationRule,
}

/// Short human-readable form of a rule, e.g. `laplace(-0.5)`.
pub fn rule_label(rule: &AggregationRule) -> String {
    match *rule {
        AggregationRule::LaplaceUtility { kappa } => format!("laplace({kappa})"),
        AggregationRule::GaussianUtility { lambda } => format!("gaussian({lambda})"),
        AggregationRule::MinClip => "min_clip".into(),
        AggregationRule::TopBeta { beta } => format!("top_beta({beta})"),
        AggregationRule::Mean => "mean".into(),
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for &k in self.kappa_critic.iter().chain(&self.kappa_actor) {
            if !(k.abs() <= KAPPA_CONFIG_BOUND) {
                return Err(Error::KappaDomain(k));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::config("grid needs at least one seed"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::config("grid seeds must be distinct"));
        }
        for b in &self.baselines {
            b.rule_critic.validate()?;
            b.rule_actor.validate()?;
        }
        let runs = self.cells().len() * self.seeds.len();
        if runs > self.max_runs {
            return Err(Error::config(format!(
                "grid has {runs} runs, above max_runs = {}",
                self.max_runs
            )));
        }
        self.base.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid spec always serializes")
    }

    pub fn hash(&self) -> String {
        hex16(&Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Laplace cells in row-major `(κ_critic, κ_actor)` order, then baselines.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut cells = Vec::new();
        for &kc in &self.kappa_critic {
            for &ka in &self.kappa_actor {
                let rule_critic = AggregationRule::LaplaceUtility { kappa: kc };
                let rule_actor = AggregationRule::LaplaceUtility { kappa: ka };
                cells.push(GridCell {
                    label: format!("{}/{}", rule_label(&rule_critic), rule_label(&rule_actor)),
                    rule_critic,
                    rule_actor,
                });
            }
        }
        for b in &self.baselines {
            cells.push(GridCell {
                label: b.name.clone(),
                rule_critic: b.rule_critic,
                rule_actor: b.rule_actor,
            });
        }
        cells
    }

    /// The run config of one `(cell, seed)` pair.
    pub fn run_config(&self, cell: &GridCell, seed: u64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        cfg.agent.rule_critic = cell.rule_critic;
        cfg.agent.rule_actor = cell.rule_actor;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub cell: usize,
    pub seed: u64,
    pub outcome: RunOutcome,
}

/// Mean ± population std over a cell's seeds, ignoring NaN entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        let (mean, std) = mean_std(&finite);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: GridCell,
    pub runs: usize,
    pub diverged: usize,
    /// Mean return at each run's last valid evaluation.
    pub final_return: Stat,
    pub estimation_error: Stat,
    pub auc: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub spec_hash: String,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<CellRun>,
    /// Index of the cell with the highest mean final return.
    pub best: Option<usize>,
}

pub fn summarize_cell(cell: GridCell, runs: &[&RunOutcome]) -> CellSummary {
    let last = |o: &RunOutcome, f: fn(&super::MetricsRecord) -> f64| o.records.last().map_or(f64::NAN, f);
    let finals: Vec<f64> = runs.iter().map(|o| last(o, |r| r.mean_return)).collect();
    let errors: Vec<f64> = runs.iter().map(|o| last(o, |r| r.estimation_error)).collect();
    let aucs: Vec<f64> = runs
        .iter()
        .map(|o| area_under_curve(&o.records).unwrap_or(f64::NAN))
        .collect();
    CellSummary {
        cell,
        runs: runs.len(),
        diverged: runs.iter().filter(|o| o.status.is_diverged()).count(),
        final_return: Stat::of(&finals),
        estimation_error: Stat::of(&errors),
        auc: Stat::of(&aucs),
    }
}

/// Runs every `(cell, seed)` pair on a pool of `workers` threads. Each run
/// is independent, so results do not depend on scheduling. A diverged run
/// is kept with its last valid metrics; any other error aborts the grid.
pub fn run_grid(spec: &GridSpec, workers: usize) -> Result<GridResult> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, seed)| run_training(spec.run_config(&cells[c], seed)))
            .collect::<Result<_>>()
    })?;
    let runs: Vec<CellRun> = jobs
        .iter()
        .zip(outcomes)
        .map(|(&(cell, seed), outcome)| CellRun { cell, seed, outcome })
        .collect();
    let summaries: Vec<CellSummary> = cells
        .into_iter()
        .enumerate()
        .map(|(i, cell)| {
            let outs: Vec<&RunOutcome> = runs.iter().filter(|r| r.cell == i).map(|r| &r.outcome).collect();
            summarize_cell(cell, &outs)
        })
        .collect();
    let best = summaries
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.final_return.mean.is_nan())
        .max_by(|a, b| a.1.final_return.mean.total_cmp(&b.1.final_return.mean))
        .map(|(i, _)| i);
    Ok(GridResult {
        spec_hash: spec.hash(),
        cells: summaries,
        runs,
        best,
    })
}
