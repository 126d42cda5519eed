//! File emission: per-run CSVs, the grid summary CSV, and plain-text
//! summaries. Every file starts with a provenance line carrying the config
//! hash and seed(s).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::grid::{rule_label, GridResult, GridSpec};
use super::metrics::{area_under_curve, csv_err, write_run_csv};
use super::run::RunOutcome;
use super::RunStatus;
use crate::{Error, Result};

pub const GRID_CSV_HEADER: &str = "cell,rule_critic,rule_actor,runs,diverged,final_return_mean,final_return_std,estimation_error_mean,estimation_error_std,auc_mean,auc_std";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { step, reason } => format!("diverged at step {step}: {reason}"),
    }
}

pub fn run_summary_text(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    writeln!(s, "{}", outcome.provenance.comment_line()).unwrap();
    writeln!(s, "status: {}", status_text(&outcome.status)).unwrap();
    writeln!(s, "evaluations: {}", outcome.records.len()).unwrap();
    if let Some(last) = outcome.records.last() {
        writeln!(s, "final step: {}", last.step).unwrap();
        writeln!(s, "final mean return: {} (std {})", last.mean_return, last.std_return).unwrap();
        writeln!(s, "final estimation error: {}", last.estimation_error).unwrap();
        writeln!(s, "final alpha: {}", last.alpha).unwrap();
    }
    if let Ok(auc) = area_under_curve(&outcome.records) {
        writeln!(s, "area under curve: {auc}").unwrap();
    }
    writeln!(s, "clipped actions: {}", outcome.clipped_actions).unwrap();
    s
}

/// Writes `run.csv` and `summary.txt` into `dir`.
pub fn emit_run(dir: &Path, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let csv_path = dir.join("run.csv");
    write_run_csv(&csv_path, &outcome.records, &outcome.provenance)?;
    let txt_path = dir.join("summary.txt");
    write_text(&txt_path, &run_summary_text(outcome))?;
    Ok(vec![csv_path, txt_path])
}

fn grid_provenance(spec: &GridSpec, result: &GridResult) -> String {
    let seeds: Vec<String> = spec.seeds.iter().map(u64::to_string).collect();
    format!("# config_hash={} seeds={}", result.spec_hash, seeds.join(";"))
}

pub fn grid_csv_string(spec: &GridSpec, result: &GridResult) -> Result<String> {
    let mut out = Vec::new();
    writeln!(out, "{}", grid_provenance(spec, result)).expect("in-memory write");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(GRID_CSV_HEADER.split(','))
            .map_err(csv_err("<memory>"))?;
        for c in &result.cells {
            w.write_record([
                c.cell.label.clone(),
                rule_label(&c.cell.rule_critic),
                rule_label(&c.cell.rule_actor),
                c.runs.to_string(),
                c.diverged.to_string(),
                c.final_return.mean.to_string(),
                c.final_return.std.to_string(),
                c.estimation_error.mean.to_string(),
                c.estimation_error.std.to_string(),
                c.auc.mean.to_string(),
                c.auc.std.to_string(),
            ])
            .map_err(csv_err("<memory>"))?;
        }
        w.flush().map_err(|e| Error::io("<memory>", e))?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn grid_summary_text(spec: &GridSpec, result: &GridResult) -> String {
    let mut s = String::new();
    writeln!(s, "{}", grid_provenance(spec, result)).unwrap();
    writeln!(s, "cells: {}, runs: {}", result.cells.len(), result.runs.len()).unwrap();
    let mut order: Vec<usize> = (0..result.cells.len()).collect();
    order.sort_by(|&a, &b| {
        result.cells[b]
            .final_return
            .mean
            .total_cmp(&result.cells[a].final_return.mean)
    });
    for i in order {
        let c = &result.cells[i];
        writeln!(
            s,
            "{:<40} final {:.3} ± {:.3}  est.err {:.3} ± {:.3}  auc {:.3}  diverged {}/{}",
            c.cell.label,
            c.final_return.mean,
            c.final_return.std,
            c.estimation_error.mean,
            c.estimation_error.std,
            c.auc.mean,
            c.diverged,
            c.runs
        )
        .unwrap();
    }
    match result.best {
        Some(b) => writeln!(s, "best cell: {}", result.cells[b].cell.label).unwrap(),
        None => writeln!(s, "best cell: none").unwrap(),
    }
    s
}

/// Writes one CSV per run (`runs/cell<i>_seed<s>.csv`), `grid.csv` and
/// `summary.txt` into `dir`.
pub fn emit_grid(dir: &Path, spec: &GridSpec, result: &GridResult) -> Result<Vec<PathBuf>> {
    let runs_dir = dir.join("runs");
    ensure_dir(&runs_dir)?;
    let mut written = Vec::new();
    for r in &result.runs {
        let p = runs_dir.join(format!("cell{:03}_seed{}.csv", r.cell, r.seed));
        write_run_csv(&p, &r.outcome.records, &r.outcome.provenance)?;
        written.push(p);
    }
    let grid_path = dir.join("grid.csv");
    write_text(&grid_path, &grid_csv_string(spec, result)?)?;
    let txt_path = dir.join("summary.txt");
    write_text(&txt_path, &grid_summary_text(spec, result))?;
    written.extend([grid_path, txt_path]);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_header_only() {
        let spec = GridSpec {
            kappa_critic: vec![],
            ..GridSpec::default()
        };
        let result = GridResult {
            spec_hash: spec.hash(),
            cells: vec![],
            runs: vec![],
            best: None,
        };
        let text = grid_csv_string(&spec, &result).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("# config_hash="));
        assert_eq!(lines[1], GRID_CSV_HEADER);
    }
}
