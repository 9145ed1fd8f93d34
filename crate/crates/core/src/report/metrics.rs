use crate::episodic::EpisodeRecord;
use crate::error::{Error, Result};

/// Accuracy per fraction of the training pool used: `ξ = accuracy / fraction`.
pub fn efficiency(test_accuracy: f64, used_fraction: f64) -> Result<f64> {
    if !(used_fraction > 0.0 && used_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "used fraction must be in (0, 1], got {used_fraction}"
        )));
    }
    if !(0.0..=1.0).contains(&test_accuracy) {
        return Err(Error::invalid(format!(
            "accuracy must be in [0, 1], got {test_accuracy}"
        )));
    }
    Ok(test_accuracy / used_fraction)
}

/// `ξ` of a network together with its ratio to the full-training baseline `ξ_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyScore {
    pub xi: f64,
    pub xi_full: f64,
    pub relative: f64,
}

impl EfficiencyScore {
    pub fn new(xi: f64, xi_full: f64) -> Result<Self> {
        if !(xi > 0.0 && xi_full > 0.0) {
            return Err(Error::invalid(format!(
                "efficiencies must be positive (xi = {xi}, xi_F = {xi_full})"
            )));
        }
        Ok(Self {
            xi,
            xi_full,
            relative: xi / xi_full,
        })
    }

    pub fn from_measurements(accuracy: f64, fraction: f64, full_accuracy: f64, full_fraction: f64) -> Result<Self> {
        Self::new(efficiency(accuracy, fraction)?, efficiency(full_accuracy, full_fraction)?)
    }
}

/// Per-episode records of one (strategy, trial) run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub strategy: u8,
    pub trial: u32,
    pub seed: u64,
    pub theta: f64,
    pub records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u32,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub acquired_mean: f64,
    pub acquired_std: f64,
    pub accumulated_mean: f64,
    pub used_fraction_mean: f64,
}

/// Trial-averaged results of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub strategy: u8,
    pub theta: f64,
    pub n_trials: usize,
    pub episodes: Vec<EpisodeSummary>,
    /// Efficiency of the averaged last episode, when `ξ_F` is known.
    pub final_score: Option<EfficiencyScore>,
}

impl TrialReport {
    pub fn last(&self) -> &EpisodeSummary {
        self.episodes.last().expect("reports have at least one episode")
    }

    pub fn is_baseline(&self) -> bool {
        self.episodes.len() == 1 && self.episodes[0].episode == 0
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation per episode over trials of a single
/// strategy. Trials are ordered by seed first so the result does not depend
/// on the order they finished in.
pub fn aggregate(trials: &[TrialResult], xi_full: Option<f64>) -> Result<TrialReport> {
    let first = trials
        .first()
        .ok_or_else(|| Error::invalid("aggregate needs at least one trial"))?;
    if trials.iter().any(|t| t.strategy != first.strategy || t.theta != first.theta) {
        return Err(Error::invalid("aggregate mixes strategies or thresholds"));
    }
    let episodes = first.records.len();
    if episodes == 0 || trials.iter().any(|t| t.records.len() != episodes) {
        return Err(Error::invalid("trials have ragged or empty episode counts"));
    }
    let mut sorted: Vec<&TrialResult> = trials.iter().collect();
    sorted.sort_by_key(|t| (t.seed, t.trial));

    let summaries = (0..episodes)
        .map(|e| {
            let column = |f: &dyn Fn(&EpisodeRecord) -> f64| -> Vec<f64> {
                sorted.iter().map(|t| f(&t.records[e])).collect()
            };
            let (accuracy_mean, accuracy_std) = mean_std(&column(&|r| r.final_accuracy));
            let (acquired_mean, acquired_std) = mean_std(&column(&|r| r.acquired as f64));
            let (accumulated_mean, _) = mean_std(&column(&|r| r.accumulated as f64));
            let (used_fraction_mean, _) = mean_std(&column(&|r| r.used_fraction));
            EpisodeSummary {
                episode: sorted[0].records[e].episode,
                accuracy_mean,
                accuracy_std,
                acquired_mean,
                acquired_std,
                accumulated_mean,
                used_fraction_mean,
            }
        })
        .collect::<Vec<_>>();

    let last = summaries.last().expect("nonempty");
    let final_score = match xi_full {
        Some(xf) if last.accuracy_mean > 0.0 => Some(EfficiencyScore::new(
            efficiency(last.accuracy_mean, last.used_fraction_mean)?,
            xf,
        )?),
        _ => None,
    };
    Ok(TrialReport {
        strategy: first.strategy,
        theta: first.theta,
        n_trials: trials.len(),
        episodes: summaries,
        final_score,
    })
}
