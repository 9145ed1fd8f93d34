use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{make_split_plan, Dataset, SplitPlan};
use crate::episodic::{train_initial, StrategySpec, TrialSeeds, TrialSetup};
use crate::error::{Error, Result};
use crate::experiment::config::{Precision, RunConfig};
use crate::network::{Architecture, NetworkSnapshot, TrainConfig};
use crate::numerics::{Real, RngStream};
use crate::report::{
    aggregate, emit_csv, emit_summary_csv, emit_svg_chart, result_rows, ChartKind, TrialReport, TrialResult,
};
use crate::uncertainty::{AcquisitionThreshold, McConfig};

const TRIAL_STREAM: u64 = 0x7121A1;

/// Seed of trial `trial`, a fixed substream of the master seed.
pub fn trial_seed(master_seed: u64, trial: u32) -> u64 {
    RngStream::new(master_seed, TRIAL_STREAM).derive_seed(&[u64::from(trial)])
}

/// All results measured at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub theta: f64,
    /// Ordered by (strategy in config order, trial).
    pub trials: Vec<TrialResult>,
    /// One per strategy, in config order.
    pub reports: Vec<TrialReport>,
    pub xi_full: Option<f64>,
}

struct Trial {
    index: u32,
    seed: u64,
    seeds: TrialSeeds,
    plan: SplitPlan,
}

struct Job {
    theta: Option<f64>,
    spec: StrategySpec,
    trial: usize,
}

fn log(quiet: bool, msg: impl FnOnce() -> String) {
    if !quiet {
        eprintln!("{}", msg());
    }
}

/// Run every (threshold, strategy, trial) combination of `cfg` on `data`.
/// Baselines do not depend on the threshold and run once per trial.
pub fn execute(cfg: &RunConfig, data: &Dataset, thetas: &[f64], quiet: bool) -> Result<Vec<BatchResult>> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if thetas.is_empty() {
        return Err(Error::Config(vec!["theta_sweep: no thresholds given".into()]));
    }
    for &t in thetas {
        AcquisitionThreshold::new(t).map_err(|e| Error::Config(vec![format!("theta: {e}")]))?;
    }
    match cfg.precision {
        Precision::F64 => execute_typed::<f64>(cfg, data, thetas, quiet),
        Precision::F32 => execute_typed::<f32>(cfg, data, thetas, quiet),
    }
}

fn execute_typed<T: Real>(cfg: &RunConfig, data: &Dataset, thetas: &[f64], quiet: bool) -> Result<Vec<BatchResult>> {
    let arch = cfg.architecture()?;
    let train = cfg.train_config();
    let mc = cfg.mc_config();
    let specs = cfg.strategy_specs()?;
    let pool_size = data.train.len();
    if data.test.is_empty() {
        return Err(Error::invalid("dataset has no test images"));
    }

    let trials = (0..cfg.trials as u32)
        .map(|index| {
            let seed = trial_seed(cfg.master_seed, index);
            let seeds = TrialSeeds::new(seed);
            let split = cfg.split_seed.unwrap_or_else(|| seeds.split());
            let plan = make_split_plan(pool_size, cfg.n_splits, split)?.with_test_count(data.test.len());
            Ok(Trial { index, seed, seeds, plan })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for &spec in &specs {
        let per_theta: Vec<Option<f64>> = if spec.is_baseline() {
            vec![None]
        } else {
            thetas.iter().copied().map(Some).collect()
        };
        for theta in per_theta {
            for trial in 0..trials.len() {
                jobs.push(Job { theta, spec, trial });
            }
        }
    }

    let workers = match cfg.parallelism {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len().max(trials.len()))
    .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;

    let needs_n0 = cfg.baseline_from_initial || specs.iter().any(|s| !s.is_baseline());
    let started = Instant::now();
    let n0s: Vec<Option<NetworkSnapshot<T>>> = pool.install(|| {
        trials
            .par_iter()
            .map(|t| {
                if !needs_n0 {
                    return Ok(None);
                }
                let n0 = train_initial::<T>(data, &t.plan, &arch, &train, &t.seeds).map_err(|e| Error::Run {
                    strategy: None,
                    trial: t.index,
                    source: Box::new(e),
                })?;
                log(quiet, || format!("trial {}: initial network trained ({:.1?})", t.index, started.elapsed()));
                Ok(Some(n0))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let ctx = JobContext {
        data,
        arch: &arch,
        train: &train,
        mc: &mc,
        baseline_from_initial: cfg.baseline_from_initial,
    };
    let outcomes: Vec<Result<TrialResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let trial = &trials[job.trial];
                let n0 = n0s[job.trial].as_ref();
                let result = ctx.run(job, trial, n0);
                if let Ok(r) = &result {
                    let last = r.records.last().expect("records");
                    log(quiet, || {
                        format!(
                            "strategy {} trial {}{}: accuracy {:.4}, used fraction {:.3} ({:.1?})",
                            r.strategy,
                            r.trial,
                            job.theta.map_or(String::new(), |t| format!(" theta {t}")),
                            last.final_accuracy,
                            last.used_fraction,
                            started.elapsed()
                        )
                    });
                }
                result
            })
            .collect()
    });
    let mut results = Vec::with_capacity(outcomes.len());
    for r in outcomes {
        results.push(r?);
    }

    let xi_full = cfg.xi_full.or_else(|| {
        let full: Vec<f64> = results
            .iter()
            .filter(|r| r.strategy == StrategySpec::FullTraining.id())
            .map(|r| r.records[0].final_accuracy / r.records[0].used_fraction)
            .collect();
        (!full.is_empty() && full.iter().all(|&x| x > 0.0)).then(|| full.iter().sum::<f64>() / full.len() as f64)
    });

    thetas
        .iter()
        .map(|&theta| {
            let mut batch = Vec::new();
            let mut reports = Vec::new();
            for spec in &specs {
                let group: Vec<TrialResult> = jobs
                    .iter()
                    .zip(&results)
                    .filter(|(j, _)| j.spec.id() == spec.id() && j.theta.is_none_or(|t| t == theta))
                    .map(|(_, r)| TrialResult { theta, ..r.clone() })
                    .collect();
                reports.push(aggregate(&group, xi_full)?);
                batch.extend(group);
            }
            Ok(BatchResult {
                theta,
                trials: batch,
                reports,
                xi_full,
            })
        })
        .collect()
}

struct JobContext<'a> {
    data: &'a Dataset,
    arch: &'a Architecture,
    train: &'a TrainConfig,
    mc: &'a McConfig,
    baseline_from_initial: bool,
}

impl JobContext<'_> {
    fn run<T: Real>(&self, job: &Job, trial: &Trial, n0: Option<&NetworkSnapshot<T>>) -> Result<TrialResult> {
        let theta = job.theta.unwrap_or(AcquisitionThreshold::DEFAULT);
        let wrap = |e: Error| Error::Run {
            strategy: Some(job.spec.id()),
            trial: trial.index,
            source: Box::new(e),
        };
        let setup = TrialSetup {
            data: self.data,
            plan: &trial.plan,
            architecture: self.arch,
            train: self.train,
            mc: self.mc,
            theta: AcquisitionThreshold::new(theta).map_err(wrap)?,
            seeds: trial.seeds.clone(),
            baseline_from_initial: self.baseline_from_initial,
        };
        let outcome = setup.run(job.spec, n0).map_err(wrap)?;
        Ok(TrialResult {
            strategy: job.spec.id(),
            trial: trial.index,
            seed: trial.seed,
            theta,
            records: outcome.records,
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write the results table, the trial-averaged summary and the per-run
/// charts of one batch into `dir`. Returns the written paths.
pub fn write_batch(batch: &BatchResult, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    emit_csv(&result_rows(&batch.trials, batch.xi_full)?, &results)?;
    written.push(results);
    let summary = dir.join("summary.csv");
    emit_summary_csv(&batch.reports, &summary)?;
    written.push(summary);
    let has_active = batch.reports.iter().any(|r| !r.is_baseline());
    for kind in ChartKind::RUN_CHARTS {
        if kind == ChartKind::AcquisitionsVsEpisode && !has_active {
            continue;
        }
        let path = dir.join(kind.file_name());
        emit_svg_chart(&batch.reports, kind, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    strategy: u8,
    theta: f64,
    n_trials: usize,
    acquired_per_episode: f64,
    final_accuracy: f64,
    used_fraction: f64,
}

/// Write one subdirectory per threshold plus the cross-threshold table and chart.
pub fn write_sweep(batches: &[BatchResult], dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for b in batches {
        written.extend(write_batch(b, &dir.join(format!("theta_{}", b.theta)))?);
        for r in b.reports.iter().filter(|r| !r.is_baseline()) {
            let n = r.episodes.len() as f64;
            rows.push(SweepRow {
                strategy: r.strategy,
                theta: b.theta,
                n_trials: r.n_trials,
                acquired_per_episode: r.episodes.iter().map(|e| e.acquired_mean).sum::<f64>() / n,
                final_accuracy: r.last().accuracy_mean,
                used_fraction: r.last().used_fraction_mean,
            });
            reports.push(r.clone());
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(vec!["strategies: a sweep needs at least one episodic strategy (1..=5)".into()]));
    }
    rows.sort_by(|a, b| a.strategy.cmp(&b.strategy).then(a.theta.total_cmp(&b.theta)));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let path = dir.join("sweep.csv");
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    let chart = dir.join(ChartKind::ThetaSweep.file_name());
    emit_svg_chart(&reports, ChartKind::ThetaSweep, &chart)?;
    written.push(chart);
    Ok(written)
}

/// Load the data, run every (strategy, trial) pair at `cfg.theta` and
/// write the outputs.
pub fn run(cfg: &RunConfig, quiet: bool) -> Result<(BatchResult, Vec<PathBuf>)> {
    let cfg = cfg.clone().validated()?;
    let data = cfg.load_dataset()?;
    let batch = execute(&cfg, &data, &[cfg.theta], quiet)?
        .pop()
        .expect("one threshold");
    let written = write_batch(&batch, &cfg.resolved_output_dir())?;
    Ok((batch, written))
}

/// Like [`run`] for each threshold in `thetas` (or the config's
/// `theta_sweep` when empty).
pub fn sweep(cfg: &RunConfig, thetas: &[f64], quiet: bool) -> Result<(Vec<BatchResult>, Vec<PathBuf>)> {
    let cfg = cfg.clone().validated()?;
    let thetas = if thetas.is_empty() { &cfg.theta_sweep[..] } else { thetas };
    let data = cfg.load_dataset()?;
    let batches = execute(&cfg, &data, thetas, quiet)?;
    let written = write_sweep(&batches, &cfg.resolved_output_dir())?;
    Ok((batches, written))
}
