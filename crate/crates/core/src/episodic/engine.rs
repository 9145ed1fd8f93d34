use std::time::{Duration, Instant};

use crate::data::{Oracle, SplitPlan};
use crate::episodic::strategy::{used_fraction, ActiveStrategy, FinalRule};
use crate::error::{Error, Result};
use crate::network::{Provenance, SetTag};
use crate::uncertainty::{acquire_by_entropy, AcquisitionThreshold};

/// Images acquired (and labeled by the oracle) in one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcquisitionSet {
    /// 1-based episode of origin.
    pub episode: u32,
    /// `(image id, oracle label)` in episode order.
    pub items: Vec<(usize, u8)>,
}

impl AcquisitionSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn tag(&self) -> SetTag {
        SetTag::Episode(self.episode)
    }
}

/// A labeled set handed to a fine-tuning step: the union of its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FineTuneSet {
    pub parts: Vec<AcquisitionSet>,
}

impl FineTuneSet {
    fn of<'a>(sets: impl IntoIterator<Item = &'a AcquisitionSet>) -> Self {
        Self {
            parts: sets.into_iter().filter(|s| !s.is_empty()).cloned().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(AcquisitionSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tags(&self) -> Vec<SetTag> {
        self.parts.iter().map(AcquisitionSet::tag).collect()
    }

    pub fn items(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.parts.iter().flat_map(|p| p.items.iter().copied())
    }
}

/// Which fine-tuning call within a run; learners derive their seeds from it
/// so a call is reproducible no matter how far the run continues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Network update after episode `t`.
    Update(u32),
    /// Would-be final training when stopping after episode `t`.
    Final(u32),
}

/// The training and scoring backend driven by [`run_episodes`].
pub trait Learner {
    type Model: Clone;

    /// `base ⊗ set`. Never called with an empty set.
    fn fine_tune(&mut self, base: &Self::Model, set: &FineTuneSet, stage: Stage) -> Result<Self::Model>;

    /// Predictive entropy of every image of episode `episode` under `model`.
    fn entropies(&mut self, model: &Self::Model, episode: u32, ids: &[usize]) -> Result<Vec<f64>>;

    /// Test accuracy of a would-be final network.
    fn test_accuracy(&mut self, model: &Self::Model) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index (0 for the non-episodic baselines).
    pub episode: u32,
    pub acquired: usize,
    pub accumulated: usize,
    pub used_fraction: f64,
    pub final_accuracy: f64,
    pub wall_time: Duration,
}

impl EpisodeRecord {
    /// Equality ignoring wall time.
    pub fn same_measurements(&self, other: &Self) -> bool {
        self.episode == other.episode
            && self.acquired == other.acquired
            && self.accumulated == other.accumulated
            && self.used_fraction == other.used_fraction
            && self.final_accuracy == other.final_accuracy
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRun<M> {
    pub records: Vec<EpisodeRecord>,
    pub acquisitions: Vec<AcquisitionSet>,
    /// `N_f` after the last episode.
    pub final_model: M,
    /// Symbolic history of `final_model`.
    pub final_provenance: Provenance,
    /// `N_k` before final training.
    pub last_model: M,
}

/// Run the acquire / label / update loop over every episode of `plan`,
/// evaluating the would-be final network after each one.
///
/// `n0` is the network trained on the initial split; the update chain and
/// the per-episode final training both start from models produced here and
/// never modify earlier ones.
pub fn run_episodes<L: Learner>(
    strategy: ActiveStrategy,
    plan: &SplitPlan,
    oracle: &Oracle,
    learner: &mut L,
    n0: &L::Model,
    theta: AcquisitionThreshold,
) -> Result<EpisodeRun<L::Model>> {
    if plan.episodes.is_empty() || plan.episodes.iter().any(Vec::is_empty) {
        return Err(Error::invalid("split plan needs nonempty episodes"));
    }
    let full_train_size = oracle.len();
    let root = Provenance::root("N0");
    let mut current = (n0.clone(), root.clone());
    let mut acquisitions: Vec<AcquisitionSet> = Vec::with_capacity(plan.episodes.len());
    let mut records = Vec::with_capacity(plan.episodes.len());
    let mut final_net = None;

    for (i, ids) in plan.episodes.iter().enumerate() {
        let t = i as u32 + 1;
        let started = Instant::now();
        let at = |source: Error| Error::Episode {
            episode: t,
            source: Box::new(source),
        };

        let entropies = learner.entropies(&current.0, t, ids).map_err(at)?;
        if entropies.len() != ids.len() {
            return Err(Error::invalid(format!(
                "learner scored {} of {} images in episode {t}",
                entropies.len(),
                ids.len()
            )));
        }
        let items = acquire_by_entropy(&entropies, theta)
            .into_iter()
            .map(|pos| Ok((ids[pos], oracle.label(ids[pos])?)))
            .collect::<Result<Vec<_>>>()
            .map_err(at)?;
        let acquired = AcquisitionSet { episode: t, items };
        let recent = !acquired.is_empty();
        acquisitions.push(acquired);

        if recent {
            let (base, base_prov) = if strategy.update.from_initial() {
                (n0, &root)
            } else {
                (&current.0, &current.1)
            };
            let set = if strategy.update.accumulates() {
                FineTuneSet::of(&acquisitions)
            } else {
                FineTuneSet::of(acquisitions.last())
            };
            let prov = base_prov.fine_tuned(set.tags());
            let next = learner.fine_tune(base, &set, Stage::Update(t)).map_err(at)?;
            current = (next, prov);
        }

        let accumulated = FineTuneSet::of(&acquisitions);
        let (base, base_prov) = match strategy.final_rule {
            FinalRule::LastNetwork => (None, &current.1),
            FinalRule::FineTuneAccum => (Some(&current.0), &current.1),
            FinalRule::InitOnAccum => (Some(n0), &root),
        };
        let final_prov = if base.is_some() && !accumulated.is_empty() {
            base_prov.fine_tuned(accumulated.tags())
        } else {
            base_prov.clone()
        };
        let candidate = if final_prov == current.1 {
            // already materialized by the update chain
            current.0.clone()
        } else if final_prov == root {
            n0.clone()
        } else {
            let base = base.expect("fine-tuned final rule");
            learner.fine_tune(base, &accumulated, Stage::Final(t)).map_err(at)?
        };
        let accuracy = learner.test_accuracy(&candidate).map_err(at)?;

        let accumulated_count = accumulated.len();
        records.push(EpisodeRecord {
            episode: t,
            acquired: acquisitions.last().map_or(0, AcquisitionSet::len),
            accumulated: accumulated_count,
            used_fraction: used_fraction(plan.initial.len(), accumulated_count, full_train_size).map_err(at)?,
            final_accuracy: accuracy,
            wall_time: started.elapsed(),
        });
        final_net = Some((candidate, final_prov));
    }

    let (final_model, final_provenance) = final_net.expect("at least one episode");
    Ok(EpisodeRun {
        records,
        acquisitions,
        final_model,
        final_provenance,
        last_model: current.0,
    })
}
