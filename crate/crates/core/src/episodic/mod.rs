//! The episodic strategy engine: acquisition, oracle labeling, network
//! updates and per-episode evaluation of the would-be final network.

mod engine;
mod learners;
mod strategy;

pub use engine::{
    run_episodes, AcquisitionSet, EpisodeRecord, EpisodeRun, FineTuneSet, Learner, Stage,
};
pub use learners::{
    run_baseline, run_strategy, train_initial, BaselineStart, NetworkLearner, Recording,
    StrategyOutcome, SymbolicLearner, TrialSeeds, TrialSetup,
};
pub use strategy::{
    used_fraction, ActiveStrategy, FinalRule, StrategySpec, UpdateRule, DEFAULT_RANDOM_FRACTION,
};
