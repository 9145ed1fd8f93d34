use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar10_dir, Dataset, SyntheticSpec};
use crate::episodic::{StrategySpec, DEFAULT_RANDOM_FRACTION};
use crate::error::{Error, Result};
use crate::network::{Architecture, TrainConfig};
use crate::uncertainty::{AcquisitionThreshold, EntropyUnit, McConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
}

/// A complete experiment description, read from a flat TOML file.
///
/// Every key is optional; the defaults reproduce the full protocol (10
/// trials, 10 splits, θ = 0.8, 64 MC passes, paper-sized network) on a
/// synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
    pub cifar10_dir: Option<PathBuf>,
    pub synthetic_classes: usize,
    pub synthetic_image_size: usize,
    pub synthetic_train_per_class: usize,
    pub synthetic_test_per_class: usize,
    pub synthetic_blobs_per_class: usize,
    pub synthetic_noise: f64,
    pub synthetic_mixing: f64,
    pub synthetic_seed: u64,

    pub n_splits: usize,
    /// Fixed split for every trial; by default each trial draws its own.
    pub split_seed: Option<u64>,

    pub strategies: Vec<u8>,
    pub trials: usize,
    pub master_seed: u64,
    pub theta: f64,
    /// Thresholds used by `sweep` when none are given on the command line.
    pub theta_sweep: Vec<f64>,

    pub mc_passes: usize,
    pub entropy_unit: EntropyUnit,

    pub conv_widths: [usize; 4],
    pub dense_units: usize,
    pub dropout_rate: f64,

    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub min_epochs: usize,
    pub validation_fraction: f64,

    pub random_fraction: f64,
    pub baseline_from_initial: bool,
    /// Efficiency of full training; measured from strategy 6 when absent.
    pub xi_full: Option<f64>,

    pub precision: Precision,
    /// Worker cap; 0 means one per available core.
    pub parallelism: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            dataset: DatasetKind::Synthetic,
            cifar10_dir: None,
            synthetic_classes: 10,
            synthetic_image_size: 32,
            synthetic_train_per_class: 200,
            synthetic_test_per_class: 100,
            synthetic_blobs_per_class: 4,
            synthetic_noise: 0.1,
            synthetic_mixing: 0.0,
            synthetic_seed: 0,
            n_splits: 10,
            split_seed: None,
            strategies: StrategySpec::IDS.to_vec(),
            trials: 10,
            master_seed: 0,
            theta: AcquisitionThreshold::DEFAULT,
            theta_sweep: Vec::new(),
            mc_passes: 64,
            entropy_unit: EntropyUnit::Nats,
            conv_widths: [32, 32, 64, 64],
            dense_units: 512,
            dropout_rate: 0.5,
            learning_rate: train.learning_rate,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_epsilon: train.adam_epsilon,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            early_stop_patience: train.early_stop_patience,
            min_epochs: train.min_epochs,
            validation_fraction: train.validation_fraction,
            random_fraction: DEFAULT_RANDOM_FRACTION,
            baseline_from_initial: false,
            xi_full: None,
            precision: Precision::F64,
            parallelism: 0,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().trim().to_string()]))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: cannot read config: {e}", path.display())]))?;
        toml::from_str(&text).map_err(|e| {
            let mut msg = e.message().trim().to_string();
            if let Some(span) = e.span() {
                let line = text[..span.start].matches('\n').count() + 1;
                msg = format!("{}:{line}: {msg}", path.display());
            }
            Error::Config(vec![msg])
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            min_epochs: self.min_epochs,
            validation_fraction: self.validation_fraction,
            seed: 0,
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            passes: self.mc_passes,
            seed: 0,
            unit: self.entropy_unit,
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.synthetic_classes,
            image_shape: [3, self.synthetic_image_size, self.synthetic_image_size],
            blobs_per_class: self.synthetic_blobs_per_class,
            noise: self.synthetic_noise,
            mixing: self.synthetic_mixing,
            seed: self.synthetic_seed,
        }
    }

    fn input_and_classes(&self) -> ([usize; 3], usize) {
        match self.dataset {
            DatasetKind::Cifar10 => ([3, 32, 32], 10),
            DatasetKind::Synthetic => (
                [3, self.synthetic_image_size, self.synthetic_image_size],
                self.synthetic_classes,
            ),
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let (input, classes) = self.input_and_classes();
        Architecture::conv_net(input, self.conv_widths, self.dense_units, classes, self.dropout_rate)
    }

    pub fn strategy_specs(&self) -> Result<Vec<StrategySpec>> {
        self.strategies
            .iter()
            .map(|&id| StrategySpec::with_fraction(id, self.random_fraction))
            .collect()
    }

    /// Output directory, honouring the `EPAL_OUTPUT_DIR` override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match self.dataset {
            DatasetKind::Cifar10 => {
                let dir = self
                    .cifar10_dir
                    .as_ref()
                    .ok_or_else(|| Error::Config(vec!["cifar10_dir: required for dataset = \"cifar10\"".into()]))?;
                load_cifar10_dir(dir)
            }
            DatasetKind::Synthetic => self
                .synthetic_spec()
                .dataset(self.synthetic_train_per_class, self.synthetic_test_per_class),
        }
    }

    /// One diagnostic per violated constraint, each naming its field.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: String| out.push(format!("{field}: {msg}"));

        if self.trials < 1 {
            bad("trials", "must be at least 1".into());
        }
        if self.strategies.is_empty() {
            bad("strategies", "must list at least one strategy".into());
        }
        for &id in &self.strategies {
            if !StrategySpec::IDS.contains(&id) {
                bad("strategies", format!("unknown strategy id {id} (expected 1..=7)"));
            }
        }
        let mut ids = self.strategies.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            bad("strategies", "ids must not repeat".into());
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            bad("theta", format!("must be a finite value >= 0, got {}", self.theta));
        }
        for &t in &self.theta_sweep {
            if !(t >= 0.0 && t.is_finite()) {
                bad("theta_sweep", format!("values must be finite and >= 0, got {t}"));
            }
        }
        if self.mc_passes < 1 {
            bad("mc_passes", "must be at least 1".into());
        }
        if self.conv_widths.contains(&0) {
            bad("conv_widths", "widths must be positive".into());
        }
        if self.dense_units < 1 {
            bad("dense_units", "must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            bad("dropout_rate", format!("must be in [0, 1), got {}", self.dropout_rate));
        }
        for (field, msg) in self.train_config().problems() {
            bad(field, msg);
        }
        if !(self.random_fraction > 0.0 && self.random_fraction <= 1.0) {
            bad("random_fraction", format!("must be in (0, 1], got {}", self.random_fraction));
        }
        if let Some(x) = self.xi_full {
            if !(x > 0.0 && x.is_finite()) {
                bad("xi_full", format!("must be positive, got {x}"));
            }
        }
        if self.n_splits < 2 {
            bad("n_splits", format!("need the initial split and at least one episode, got {}", self.n_splits));
        }
        match self.dataset {
            DatasetKind::Cifar10 => {
                if self.cifar10_dir.is_none() {
                    bad("cifar10_dir", "required for dataset = \"cifar10\"".into());
                }
                if self.n_splits >= 2 && 50_000 % self.n_splits != 0 {
                    bad("n_splits", format!("must divide the 50000 training images, got {}", self.n_splits));
                }
            }
            DatasetKind::Synthetic => {
                for (field, msg) in self.synthetic_spec().problems() {
                    let field = match field {
                        "image_shape" => "synthetic_image_size".to_string(),
                        f => format!("synthetic_{f}"),
                    };
                    bad(&field, msg);
                }
                if !self.synthetic_image_size.is_multiple_of(4) {
                    bad("synthetic_image_size", "must be a multiple of 4 (two 2x2 poolings)".into());
                }
                if self.synthetic_train_per_class < 1 {
                    bad("synthetic_train_per_class", "must be at least 1".into());
                }
                if self.synthetic_test_per_class < 1 {
                    bad("synthetic_test_per_class", "must be at least 1".into());
                }
                let pool = self.synthetic_classes * self.synthetic_train_per_class;
                if self.n_splits >= 2 && !pool.is_multiple_of(self.n_splits) {
                    bad("n_splits", format!("must divide the {pool}-image training pool"));
                }
            }
        }
        out
    }

    pub fn validated(self) -> Result<Self> {
        let problems = self.validate();
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(problems))
        }
    }
}

pub const OUTPUT_DIR_ENV: &str = "EPAL_OUTPUT_DIR";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(RunConfig::default().validate().is_empty());
    }

    #[test]
    fn empty_file_means_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            strategies: vec![1, 3],
            xi_full: Some(0.8),
            split_seed: Some(4),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn diagnostics_name_fields() {
        let cfg = RunConfig {
            trials: 0,
            strategies: vec![1, 9],
            theta: -0.1,
            learning_rate: 0.0,
            synthetic_mixing: 0.7,
            ..RunConfig::default()
        };
        let diags = cfg.validate();
        for field in ["trials", "strategies", "theta", "learning_rate", "synthetic_mixing"] {
            assert!(
                diags.iter().any(|d| d.starts_with(&format!("{field}:"))),
                "no diagnostic for {field}: {diags:?}"
            );
        }
        assert_eq!(diags.len(), 5);
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        let err = RunConfig::from_toml("trails = 3").unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
        assert!(matches!(RunConfig::from_toml("trials = \"ten\""), Err(Error::Config(_))));
    }

    #[test]
    fn cifar_needs_directory() {
        let cfg = RunConfig {
            dataset: DatasetKind::Cifar10,
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate(), vec!["cifar10_dir: required for dataset = \"cifar10\"".to_string()]);
    }
}
