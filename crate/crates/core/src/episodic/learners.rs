use std::marker::PhantomData;
use std::time::Instant;

use rand::seq::index;

use crate::data::{Dataset, LabeledImage, Oracle, SplitPlan};
use crate::episodic::engine::{run_episodes, EpisodeRecord, FineTuneSet, Learner, Stage};
use crate::episodic::strategy::{used_fraction, StrategySpec};
use crate::error::{Error, Result};
use crate::network::{evaluate_accuracy, fine_tune, Architecture, NetworkSnapshot, Provenance, SetTag, TrainConfig};
use crate::numerics::{Real, RngStream};
use crate::uncertainty::{mc_predict_batch, AcquisitionThreshold, McConfig};

const SEED_STREAM: u64 = 0x5EED;
const INIT: u64 = 0;
const INITIAL_TRAIN: u64 = 1;
const SPLIT: u64 = 2;
const STRATEGY: u64 = 3;
const SUBSET: u64 = 4;

const UPDATE: u64 = 1;
const FINAL: u64 = 2;
const SCORE: u64 = 3;

/// Seeds of one trial, each derived from the trial seed by a fixed path so
/// adding or removing strategies never shifts another strategy's seeds.
#[derive(Debug, Clone)]
pub struct TrialSeeds {
    root: RngStream,
}

impl TrialSeeds {
    pub fn new(trial_seed: u64) -> Self {
        Self {
            root: RngStream::new(trial_seed, SEED_STREAM),
        }
    }

    pub fn init(&self) -> u64 {
        self.root.derive_seed(&[INIT])
    }

    pub fn initial_training(&self) -> u64 {
        self.root.derive_seed(&[INITIAL_TRAIN])
    }

    pub fn split(&self) -> u64 {
        self.root.derive_seed(&[SPLIT])
    }

    pub fn strategy(&self, id: u8) -> u64 {
        self.root.derive_seed(&[STRATEGY, u64::from(id)])
    }
}

/// Train `N_0` on the initial split from a fresh initialization.
pub fn train_initial<T: Real>(
    data: &Dataset,
    plan: &SplitPlan,
    arch: &Architecture,
    train: &TrainConfig,
    seeds: &TrialSeeds,
) -> Result<NetworkSnapshot<T>> {
    let fresh = NetworkSnapshot::<T>::build(arch.clone(), seeds.init());
    let images = data.train_refs(&plan.initial);
    let trained = fine_tune(&fresh, &images, &train.with_seed(seeds.initial_training()))?;
    Ok(trained.with_provenance(Provenance::root("N0"), Some(0)))
}

/// The real backend: CNN fine-tuning, MC-dropout scoring, test accuracy.
pub struct NetworkLearner<'a, T: Real> {
    data: &'a Dataset,
    test: Vec<&'a LabeledImage>,
    train: TrainConfig,
    mc: McConfig,
    seeds: RngStream,
    _precision: PhantomData<T>,
}

impl<'a, T: Real> NetworkLearner<'a, T> {
    pub fn new(data: &'a Dataset, train: TrainConfig, mc: McConfig, seed: u64) -> Self {
        Self {
            data,
            test: data.test_refs(),
            train,
            mc,
            seeds: RngStream::new(seed, SEED_STREAM),
            _precision: PhantomData,
        }
    }
}

impl<T: Real> Learner for NetworkLearner<'_, T> {
    type Model = NetworkSnapshot<T>;

    fn fine_tune(&mut self, base: &Self::Model, set: &FineTuneSet, stage: Stage) -> Result<Self::Model> {
        let mut images = Vec::with_capacity(set.len());
        for (id, label) in set.items() {
            let img = self
                .data
                .train
                .get(id)
                .ok_or_else(|| Error::invalid(format!("no training image {id}")))?;
            if img.label != label {
                return Err(Error::invalid(format!("oracle label mismatch for image {id}")));
            }
            images.push(img);
        }
        let (path, episode) = match stage {
            Stage::Update(t) => ([UPDATE, u64::from(t)], t),
            Stage::Final(t) => ([FINAL, u64::from(t)], t),
        };
        let cfg = self.train.with_seed(self.seeds.derive_seed(&path));
        let tuned = fine_tune(base, &images, &cfg)?;
        let provenance = base.metadata.provenance.fine_tuned(set.tags());
        Ok(tuned.with_provenance(provenance, Some(episode)))
    }

    fn entropies(&mut self, model: &Self::Model, episode: u32, ids: &[usize]) -> Result<Vec<f64>> {
        let images = self.data.train_refs(ids);
        let keys: Vec<u64> = ids.iter().map(|&i| i as u64).collect();
        let cfg = self.mc.with_seed(self.seeds.derive_seed(&[SCORE, u64::from(episode)]));
        Ok(mc_predict_batch(model, &images, &keys, &cfg)?
            .into_iter()
            .map(|d| d.entropy)
            .collect())
    }

    fn test_accuracy(&mut self, model: &Self::Model) -> Result<f64> {
        evaluate_accuracy(model, &self.test)
    }
}

/// A learner whose models are pure provenance expressions; fine-tuning
/// appends a tag. Useful for checking the update/final rules symbolically.
pub struct SymbolicLearner<F> {
    entropy: F,
}

impl<F> SymbolicLearner<F>
where
    F: FnMut(&Provenance, u32, &[usize]) -> Vec<f64>,
{
    pub fn new(entropy: F) -> Self {
        Self { entropy }
    }
}

impl SymbolicLearner<fn(&Provenance, u32, &[usize]) -> Vec<f64>> {
    /// Every image gets maximal uncertainty, so everything is acquired.
    pub fn acquire_all() -> Self {
        Self {
            entropy: |_, _, ids| vec![f64::INFINITY; ids.len()],
        }
    }
}

impl<F> Learner for SymbolicLearner<F>
where
    F: FnMut(&Provenance, u32, &[usize]) -> Vec<f64>,
{
    type Model = Provenance;

    fn fine_tune(&mut self, base: &Provenance, set: &FineTuneSet, _stage: Stage) -> Result<Provenance> {
        if set.is_empty() {
            return Err(Error::EmptyFineTuneSet);
        }
        Ok(base.fine_tuned(set.tags()))
    }

    fn entropies(&mut self, model: &Provenance, episode: u32, ids: &[usize]) -> Result<Vec<f64>> {
        Ok((self.entropy)(model, episode, ids))
    }

    fn test_accuracy(&mut self, _model: &Provenance) -> Result<f64> {
        Ok(0.0)
    }
}

/// Wraps a learner and logs which images it scored and trained on.
pub struct Recording<L> {
    pub inner: L,
    /// `(episode, ids)` per scoring call.
    pub scored: Vec<(u32, Vec<usize>)>,
    /// `(stage, ids)` per fine-tuning call.
    pub trained: Vec<(Stage, Vec<usize>)>,
}

impl<L> Recording<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            scored: Vec::new(),
            trained: Vec::new(),
        }
    }
}

impl<L: Learner> Learner for Recording<L> {
    type Model = L::Model;

    fn fine_tune(&mut self, base: &Self::Model, set: &FineTuneSet, stage: Stage) -> Result<Self::Model> {
        self.trained.push((stage, set.items().map(|(id, _)| id).collect()));
        self.inner.fine_tune(base, set, stage)
    }

    fn entropies(&mut self, model: &Self::Model, episode: u32, ids: &[usize]) -> Result<Vec<f64>> {
        self.scored.push((episode, ids.to_vec()));
        self.inner.entropies(model, episode, ids)
    }

    fn test_accuracy(&mut self, model: &Self::Model) -> Result<f64> {
        self.inner.test_accuracy(model)
    }
}

/// Where a baseline network starts training.
#[derive(Debug, Clone, Copy)]
pub enum BaselineStart<'a, T: Real> {
    /// Fresh seeded initialization of the given architecture.
    Scratch(&'a Architecture),
    /// Continue from the initial network.
    Initial(&'a NetworkSnapshot<T>),
}

/// Regular (non-episodic) training for the full-set and random-subset
/// baselines over the whole training pool.
pub fn run_baseline<T: Real>(
    spec: StrategySpec,
    data: &Dataset,
    start: BaselineStart<'_, T>,
    train: &TrainConfig,
    seed: u64,
) -> Result<(EpisodeRecord, NetworkSnapshot<T>)> {
    let started = Instant::now();
    let pool = data.train.len();
    let seeds = RngStream::new(seed, SEED_STREAM);
    let (ids, tag): (Vec<usize>, &str) = match spec {
        StrategySpec::FullTraining => ((0..pool).collect(), "full"),
        StrategySpec::RandomSubset { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
            }
            let amount = ((fraction * pool as f64).round() as usize).clamp(1, pool);
            let mut rng = seeds.substream(SUBSET);
            let mut ids = index::sample(&mut rng, pool, amount).into_vec();
            ids.sort_unstable();
            (ids, "random")
        }
        StrategySpec::Active { id, .. } => {
            return Err(Error::invalid(format!("strategy {id} is not a baseline")))
        }
    };
    let base = match start {
        BaselineStart::Scratch(arch) => NetworkSnapshot::build(arch.clone(), seeds.derive_seed(&[INIT])),
        BaselineStart::Initial(n0) => n0.clone(),
    };
    let images = data.train_refs(&ids);
    let cfg = train.with_seed(seeds.derive_seed(&[INITIAL_TRAIN]));
    let net = fine_tune(&base, &images, &cfg)?;
    let provenance = base.metadata.provenance.fine_tuned(vec![SetTag::Named(tag.into())]);
    let net = net.with_provenance(provenance, None);
    let test = data.test_refs();
    let record = EpisodeRecord {
        episode: 0,
        acquired: ids.len(),
        accumulated: ids.len(),
        used_fraction: used_fraction(0, ids.len(), pool)?,
        final_accuracy: evaluate_accuracy(&net, &test)?,
        wall_time: started.elapsed(),
    };
    Ok((record, net))
}

/// Outcome of [`run_strategy`].
#[derive(Debug, Clone)]
pub struct StrategyOutcome<T: Real> {
    pub records: Vec<EpisodeRecord>,
    pub final_network: NetworkSnapshot<T>,
}

/// Everything fixed across the strategies of one trial.
pub struct TrialSetup<'a> {
    pub data: &'a Dataset,
    pub plan: &'a SplitPlan,
    pub architecture: &'a Architecture,
    pub train: &'a TrainConfig,
    pub mc: &'a McConfig,
    pub theta: AcquisitionThreshold,
    pub seeds: TrialSeeds,
    /// Baselines continue from `N_0` instead of a fresh initialization.
    pub baseline_from_initial: bool,
}

impl TrialSetup<'_> {
    /// Run one strategy given the trial's shared initial network, which may
    /// only be absent for baselines trained from scratch.
    pub fn run<T: Real>(&self, spec: StrategySpec, n0: Option<&NetworkSnapshot<T>>) -> Result<StrategyOutcome<T>> {
        let need_n0 = || Error::invalid(format!("strategy {} needs the initial network", spec.id()));
        let seed = self.seeds.strategy(spec.id());
        match spec.active() {
            Some(rules) => {
                let oracle = Oracle::from_images(&self.data.train);
                let mut learner = NetworkLearner::<T>::new(self.data, self.train.clone(), self.mc.clone(), seed);
                let n0 = n0.ok_or_else(need_n0)?;
                let run = run_episodes(rules, self.plan, &oracle, &mut learner, n0, self.theta)?;
                Ok(StrategyOutcome {
                    records: run.records,
                    final_network: run.final_model,
                })
            }
            None => {
                let start = if self.baseline_from_initial {
                    BaselineStart::Initial(n0.ok_or_else(need_n0)?)
                } else {
                    BaselineStart::Scratch(self.architecture)
                };
                let (record, net) = run_baseline(spec, self.data, start, self.train, seed)?;
                Ok(StrategyOutcome {
                    records: vec![record],
                    final_network: net,
                })
            }
        }
    }
}

/// Train `N_0` and run a single strategy end to end.
#[allow(clippy::too_many_arguments)]
pub fn run_strategy<T: Real>(
    spec: StrategySpec,
    plan: &SplitPlan,
    data: &Dataset,
    architecture: &Architecture,
    train: &TrainConfig,
    mc: &McConfig,
    theta: AcquisitionThreshold,
    seed: u64,
) -> Result<StrategyOutcome<T>> {
    let setup = TrialSetup {
        data,
        plan,
        architecture,
        train,
        mc,
        theta,
        seeds: TrialSeeds::new(seed),
        baseline_from_initial: false,
    };
    let n0 = train_initial::<T>(data, plan, architecture, train, &setup.seeds)?;
    setup.run(spec, Some(&n0))
}
