use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::metrics::{efficiency, TrialReport, TrialResult};

/// One row of the per-trial results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: u8,
    pub trial: u32,
    pub episode: u32,
    pub acquired: usize,
    pub accumulated: usize,
    pub used_fraction: f64,
    pub final_accuracy: f64,
    pub xi: f64,
    pub relative_xi: Option<f64>,
}

/// Flatten trial results into rows ordered by (strategy, trial, episode).
pub fn result_rows(trials: &[TrialResult], xi_full: Option<f64>) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for t in trials {
        for r in &t.records {
            let xi = efficiency(r.final_accuracy, r.used_fraction)?;
            rows.push(ResultRow {
                strategy: t.strategy,
                trial: t.trial,
                episode: r.episode,
                acquired: r.acquired,
                accumulated: r.accumulated,
                used_fraction: r.used_fraction,
                final_accuracy: r.final_accuracy,
                xi,
                relative_xi: xi_full.map(|xf| xi / xf),
            });
        }
    }
    rows.sort_by_key(|r| (r.strategy, r.trial, r.episode));
    Ok(rows)
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write the per-trial table. Refuses (and creates nothing) when empty.
pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("nothing to write: empty report"));
    }
    write_file(path.as_ref(), &rows_to_csv(rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryRow {
    strategy: u8,
    theta: f64,
    n_trials: usize,
    episode: u32,
    accuracy_mean: f64,
    accuracy_std: f64,
    acquired_mean: f64,
    acquired_std: f64,
    accumulated_mean: f64,
    used_fraction_mean: f64,
    xi: Option<f64>,
    relative_xi: Option<f64>,
}

/// Write trial-averaged results, one row per (strategy, episode).
pub fn emit_summary_csv(reports: &[TrialReport], path: impl AsRef<Path>) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to write: no reports"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for rep in reports {
        let xi_full = rep.final_score.map(|s| s.xi_full);
        for e in &rep.episodes {
            let xi = (e.used_fraction_mean > 0.0)
                .then(|| efficiency(e.accuracy_mean, e.used_fraction_mean))
                .transpose()?;
            w.serialize(SummaryRow {
                strategy: rep.strategy,
                theta: rep.theta,
                n_trials: rep.n_trials,
                episode: e.episode,
                accuracy_mean: e.accuracy_mean,
                accuracy_std: e.accuracy_std,
                acquired_mean: e.acquired_mean,
                acquired_std: e.acquired_std,
                accumulated_mean: e.accumulated_mean,
                used_fraction_mean: e.used_fraction_mean,
                xi,
                relative_xi: xi.zip(xi_full).map(|(x, f)| x / f),
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_file(path.as_ref(), &String::from_utf8(bytes).expect("utf-8"))
}
