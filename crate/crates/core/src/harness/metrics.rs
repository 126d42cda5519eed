//! Evaluation records, area under the learning curve, and CSV output.
//!
//! Per-run CSV layout:
//!
//! ```text
//! # config_hash=<16 hex> seed=<u64>
//! step,mean_return,std_return,estimation_error,alpha,wall_clock_s
//! 0,1234.5,10.25,-3.5,1,0
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! value; a disabled estimation error is written as `NaN`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const RUN_CSV_HEADER: &str = "step,mean_return,std_return,estimation_error,alpha,wall_clock_s";

/// One evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// Environment steps taken before this evaluation.
    pub step: u64,
    /// Undiscounted return of each evaluation episode.
    pub episode_returns: Vec<f64>,
    pub mean_return: f64,
    /// Population standard deviation of `episode_returns`.
    pub std_return: f64,
    /// Monte-Carlo return minus critic estimate: positive means the critics
    /// underestimate, negative that they overestimate. `NaN` if disabled.
    pub estimation_error: f64,
    pub alpha: f64,
    pub wall_clock_s: f64,
}

/// The CSV projection of a [`MetricsRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunCsvRow {
    pub step: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub estimation_error: f64,
    pub alpha: f64,
    pub wall_clock_s: f64,
}

impl RunCsvRow {
    /// Field-wise equality that treats two NaNs as equal.
    pub fn same_as(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.step == other.step
            && eq(self.mean_return, other.mean_return)
            && eq(self.std_return, other.std_return)
            && eq(self.estimation_error, other.estimation_error)
            && eq(self.alpha, other.alpha)
            && eq(self.wall_clock_s, other.wall_clock_s)
    }
}

impl MetricsRecord {
    pub fn from_returns(
        step: u64,
        episode_returns: Vec<f64>,
        estimation_error: f64,
        alpha: f64,
        wall_clock_s: f64,
    ) -> Self {
        let (mean_return, std_return) = mean_std(&episode_returns);
        Self {
            step,
            episode_returns,
            mean_return,
            std_return,
            estimation_error,
            alpha,
            wall_clock_s,
        }
    }

    pub fn csv_row(&self) -> RunCsvRow {
        RunCsvRow {
            step: self.step,
            mean_return: self.mean_return,
            std_return: self.std_return,
            estimation_error: self.estimation_error,
            alpha: self.alpha,
            wall_clock_s: self.wall_clock_s,
        }
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trapezoidal integral of mean return over steps, divided by the step
/// span, so the result is in units of return.
pub fn area_under_curve(records: &[MetricsRecord]) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::config("area under curve needs at least 2 records"));
    }
    let span = (records[records.len() - 1].step - records[0].step) as f64;
    if span <= 0.0 {
        return Err(Error::config("area under curve needs increasing steps"));
    }
    let area: f64 = records
        .windows(2)
        .map(|w| 0.5 * (w[0].mean_return + w[1].mean_return) * (w[1].step - w[0].step) as f64)
        .sum();
    Ok(area / span)
}

/// Provenance stamped on every emitted file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

pub fn run_csv_string(records: &[MetricsRecord], provenance: &Provenance) -> Result<String> {
    let mut out = Vec::new();
    writeln!(out, "{}", provenance.comment_line()).expect("in-memory write");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(RUN_CSV_HEADER.split(',')).map_err(csv_err("<memory>"))?;
        for r in records {
            w.serialize(r.csv_row()).map_err(csv_err("<memory>"))?;
        }
        w.flush().map_err(|e| Error::io("<memory>", e))?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn write_run_csv(path: &Path, records: &[MetricsRecord], provenance: &Provenance) -> Result<()> {
    let text = run_csv_string(records, provenance)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_run_csv(text: &str) -> Result<Vec<RunCsvRow>> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rd
        .headers()
        .map_err(csv_err("<memory>"))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != RUN_CSV_HEADER {
        return Err(Error::config(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(csv_err("<memory>"))).collect()
}

pub fn read_run_csv(path: &Path) -> Result<Vec<RunCsvRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_csv(&text)
}

pub(crate) fn csv_err(path: impl Into<std::path::PathBuf>) -> impl FnOnce(csv::Error) -> Error {
    let path = path.into();
    move |source| Error::Csv { path, source }
}
