//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file only lists what it changes.
//! Unknown keys are rejected so that a typo never silently falls back to a
//! default. [`RunConfig::to_text`] emits every key, which makes any written
//! run manifest a complete, reloadable config.

use std::path::{Path, PathBuf};

use crate::data::BenchmarkParams;
use crate::dsu::{Reduction, ScoreMethod};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{Activation, AutoencoderConfig, FeatureTap};
use crate::rar::TrainConfig;
use crate::similarity::SimilarityKind;

/// Resolved configuration of one command invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Seeds both the benchmark and the ensemble.
    pub seed: u64,
    /// Seed list of `ablate`.
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test_normal: usize,
    pub n_test_anomalous: usize,
    pub height: usize,
    pub width: usize,
    pub hidden_dims: Vec<usize>,
    pub bottleneck_dim: usize,
    pub activation: Activation,
    pub feature_tap: FeatureTap,
    pub n_learners: usize,
    pub lambda: f64,
    pub similarity: SimilarityKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub method: ScoreMethod,
    pub reduction: Reduction,
    /// Root of all command outputs.
    pub out: PathBuf,
    /// Dataset directory; empty means `<out>/data`.
    pub data_dir: Option<PathBuf>,
    /// Test image ids rendered by `heatmap`; empty means the first normal
    /// and the first anomalous image.
    pub heatmap_ids: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchmarkParams::default();
        let arch = AutoencoderConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            n_train: bench.n_train,
            n_test_normal: bench.n_test_normal,
            n_test_anomalous: bench.n_test_anomalous,
            height: bench.height,
            width: bench.width,
            hidden_dims: arch.hidden_dims,
            bottleneck_dim: arch.bottleneck_dim,
            activation: arch.activation,
            feature_tap: arch.feature_tap,
            n_learners: train.n_learners,
            lambda: train.lambda,
            similarity: train.similarity,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            method: ScoreMethod::Dsu,
            reduction: Reduction::Mean,
            out: PathBuf::from("run"),
            data_dir: None,
            heatmap_ids: Vec::new(),
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "seeds",
    "n_train",
    "n_test_normal",
    "n_test_anomalous",
    "height",
    "width",
    "hidden_dims",
    "bottleneck_dim",
    "activation",
    "feature_tap",
    "n_learners",
    "lambda",
    "similarity",
    "epochs",
    "batch_size",
    "learning_rate",
    "method",
    "reduction",
    "out",
    "data_dir",
    "heatmap_ids",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Defaults overridden by the keys of a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            Error::Parse { offset, msg } => Error::Parse {
                offset,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in io::parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "n_train" => self.n_train = parse_num(key, value)?,
            "n_test_normal" => self.n_test_normal = parse_num(key, value)?,
            "n_test_anomalous" => self.n_test_anomalous = parse_num(key, value)?,
            "height" => self.height = parse_num(key, value)?,
            "width" => self.width = parse_num(key, value)?,
            "hidden_dims" => self.hidden_dims = parse_list(key, value)?,
            "bottleneck_dim" => self.bottleneck_dim = parse_num(key, value)?,
            "activation" => self.activation = value.parse()?,
            "feature_tap" => self.feature_tap = value.parse()?,
            "n_learners" => self.n_learners = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "similarity" => self.similarity = value.parse()?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "method" => self.method = value.parse()?,
            "reduction" => self.reduction = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "heatmap_ids" => {
                self.heatmap_ids = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::Config("out must not be empty".into()));
        }
        if self.n_train == 0 || self.n_test_normal == 0 || self.n_test_anomalous == 0 {
            return Err(Error::Config("benchmark counts must be >= 1".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "image size {}x{} below the 8x8 minimum",
                self.height, self.width
            )));
        }
        self.arch().validate()?;
        self.train(self.seed).validate()?;
        if self.n_learners < self.method.min_learners() {
            return Err(Error::Config(format!(
                "method `{}` needs at least {} learners, n_learners = {}",
                self.method,
                self.method.min_learners(),
                self.n_learners
            )));
        }
        Ok(())
    }

    /// All keys, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let values = [
            self.seed.to_string(),
            join(&self.seeds),
            self.n_train.to_string(),
            self.n_test_normal.to_string(),
            self.n_test_anomalous.to_string(),
            self.height.to_string(),
            self.width.to_string(),
            join(&self.hidden_dims),
            self.bottleneck_dim.to_string(),
            self.activation.to_string(),
            self.feature_tap.to_string(),
            self.n_learners.to_string(),
            self.lambda.to_string(),
            self.similarity.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.learning_rate.to_string(),
            self.method.to_string(),
            self.reduction.to_string(),
            self.out.display().to_string(),
            self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            self.heatmap_ids.join(","),
        ];
        io::format_key_values(KEYS.iter().copied().zip(values))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn ensemble_dir(&self) -> PathBuf {
        self.out.join("ensemble")
    }

    pub fn benchmark(&self, seed: u64) -> BenchmarkParams {
        BenchmarkParams {
            seed,
            n_train: self.n_train,
            n_test_normal: self.n_test_normal,
            n_test_anomalous: self.n_test_anomalous,
            height: self.height,
            width: self.width,
        }
    }

    /// Architecture for `height × width` inputs; `init_seed` is set per
    /// learner during training.
    pub fn arch(&self) -> AutoencoderConfig {
        self.arch_for(self.height * self.width)
    }

    /// Architecture for inputs of `input_dim` pixels, e.g. a loaded corpus
    /// whose size differs from `height × width`.
    pub fn arch_for(&self, input_dim: usize) -> AutoencoderConfig {
        AutoencoderConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            bottleneck_dim: self.bottleneck_dim,
            activation: self.activation,
            feature_tap: self.feature_tap,
            init_seed: 0,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            n_learners: self.n_learners,
            lambda: self.lambda,
            similarity: self.similarity,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            master_seed: seed,
        }
    }
}
