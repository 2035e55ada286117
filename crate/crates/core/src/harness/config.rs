//! Versioned TOML experiment configuration.
//!
//! ```toml
//! version = 1
//! name = "dpp-vs-random"
//! output_dir = "out/dpp-vs-random"
//!
//! [dataset]
//! kind = "mnist"          # mnist | mnist_rot | mnist_rot_synth | cifar10 | blobs
//! path = "mnist-desk"     # relative to $DIVNET_DATA_ROOT (default "data")
//! train_count = 5000      # optional seeded subsample
//! test_count = 1000
//!
//! [network]
//! hidden = [100, 100]
//!
//! [train]                 # every key optional
//! learning_rate = 0.1
//! error_threshold = 0.01
//!
//! [experiment]
//! repetitions = 5
//! base_seed = 1
//! fractions = [0.25, 0.5, 0.75, 1.0]
//! layers = [1]
//!
//! [[strategy]]
//! label = "divnet"
//! kind = "dpp"
//! reweight = true
//!
//! [beta_sweep]            # optional
//! betas = [0.0005, 0.002, 0.01]
//! fraction = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{
    load_amat, load_cifar10, load_idx, rotate, subsample, synth_blobs, BlobSpec, DataSplit, Dataset,
    CIFAR10_FEATURES, MNIST_CLASSES,
};
use crate::dpp::{Bandwidth, RescaleMode, DEFAULT_EPSILON};
use crate::mlp::TrainConfig;
use crate::numerics::derive_seed;
use crate::prune::{DppOptions, SamplerVariant, StrategyConfig, StrategyKind, DEFAULT_RIDGE};
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;
pub const DATA_ROOT_ENV: &str = "DIVNET_DATA_ROOT";
const DEFAULT_DATA_ROOT: &str = "data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, rename = "strategy")]
    pub strategies: Vec<StrategySection>,
    #[serde(default)]
    pub beta_sweep: Option<BetaSweepSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// IDX files in a directory, gzipped or not.
    Mnist,
    /// `.amat` text files (`train_file`, `test_file`).
    MnistRot,
    /// MNIST IDX files with every image randomly rotated.
    MnistRotSynth,
    /// CIFAR-10 binary batches in a directory.
    Cifar10,
    /// Gaussian blobs, no files.
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub train_file: Option<String>,
    #[serde(default)]
    pub test_file: Option<String>,
    #[serde(default)]
    pub train_count: Option<usize>,
    #[serde(default)]
    pub test_count: Option<usize>,
    #[serde(default)]
    pub blobs: Option<BlobsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsSection {
    pub classes: usize,
    pub features: usize,
    pub per_class: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_spread() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub error_threshold: f64,
    pub max_epochs: usize,
    /// Interleave pruning with training every this many epochs.
    pub prune_every: Option<usize>,
    /// Number of interleaved pruning rounds.
    pub prune_rounds: usize,
    /// Label of the strategy used for interleaved pruning.
    pub prune_strategy: Option<String>,
    /// Final kept fraction of each target layer after all rounds.
    pub prune_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            batch_size: t.batch_size,
            error_threshold: t.error_threshold,
            max_epochs: t.max_epochs,
            prune_every: None,
            prune_rounds: 1,
            prune_strategy: None,
            prune_fraction: 0.5,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            error_threshold: self.error_threshold,
            max_epochs: self.max_epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub repetitions: usize,
    pub base_seed: u64,
    pub fractions: Vec<f64>,
    /// Hidden layers pruned in every cell (1-based, front to back).
    pub layers: Vec<usize>,
    /// Fill the timing columns of metrics.csv (breaks byte-identical reruns).
    pub emit_timings: bool,
    /// Reuse trained networks stored under `<output_dir>/models`.
    pub cache_models: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            repetitions: 5,
            base_seed: 1,
            fractions: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            layers: vec![1],
            emit_timings: false,
            cache_models: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerName {
    Kdpp,
    Dpp,
    BestOfM,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeName {
    ClosedForm,
    Exact,
}

/// `"auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaValue {
    Fixed(f64),
    Named(BetaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaName {
    Auto,
}

impl BetaValue {
    pub fn bandwidth(self) -> Bandwidth {
        match self {
            BetaValue::Fixed(b) => Bandwidth::Fixed(b),
            BetaValue::Named(BetaName::Auto) => Bandwidth::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub label: String,
    pub kind: StrategyKind,
    #[serde(default)]
    pub reweight: bool,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerName,
    #[serde(default = "default_best_of")]
    pub best_of: usize,
    #[serde(default = "default_beta")]
    pub beta: BetaValue,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_gamma_mode")]
    pub gamma_mode: GammaModeName,
    #[serde(default)]
    pub instance_cap: Option<usize>,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Strategies sharing a group draw their masks from the same seeds, so
    /// e.g. plain and reweighted DPP pruning see identical kept sets.
    #[serde(default)]
    pub mask_group: Option<String>,
}

fn default_sampler() -> SamplerName {
    SamplerName::Kdpp
}
fn default_best_of() -> usize {
    10
}
fn default_beta() -> BetaValue {
    BetaValue::Named(BetaName::Auto)
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_gamma_mode() -> GammaModeName {
    GammaModeName::ClosedForm
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

impl StrategySection {
    pub fn new(label: &str, kind: StrategyKind, reweight: bool) -> Self {
        Self {
            label: label.to_string(),
            kind,
            reweight,
            sampler: default_sampler(),
            best_of: default_best_of(),
            beta: default_beta(),
            epsilon: default_epsilon(),
            gamma_mode: default_gamma_mode(),
            instance_cap: None,
            ridge: default_ridge(),
            mask_group: None,
        }
    }

    pub fn seed_key(&self) -> &str {
        self.mask_group.as_deref().unwrap_or(&self.label)
    }

    /// Runtime strategy for keeping `target_k` neurons with `seed`.
    pub fn to_config(&self, target_k: usize, seed: u64) -> StrategyConfig {
        StrategyConfig {
            kind: self.kind,
            target_k,
            reweight: self.reweight,
            dpp: DppOptions {
                beta: self.beta.bandwidth(),
                epsilon: self.epsilon,
                gamma_mode: match self.gamma_mode {
                    GammaModeName::ClosedForm => RescaleMode::ClosedForm,
                    GammaModeName::Exact => RescaleMode::Exact,
                },
                sampler: match self.sampler {
                    SamplerName::Kdpp => SamplerVariant::Kdpp,
                    SamplerName::Dpp => SamplerVariant::Dpp,
                    SamplerName::BestOfM => SamplerVariant::BestOfM(self.best_of),
                    SamplerName::Greedy => SamplerVariant::Greedy,
                },
                instance_cap: self.instance_cap,
            },
            ridge: self.ridge,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSweepSection {
    pub betas: Vec<f64>,
    /// Kept fraction for the DivNet train-error arm.
    #[serde(default = "default_sweep_fraction")]
    pub fraction: f64,
    /// Non-parametric DPP draws per network and β.
    #[serde(default = "default_size_draws")]
    pub size_draws: usize,
}

fn default_sweep_fraction() -> f64 {
    0.5
}
fn default_size_draws() -> usize {
    100
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return bad("network.hidden must list at least one non-zero width".into());
        }
        let e = &self.experiment;
        if e.repetitions == 0 {
            return bad("experiment.repetitions must be >= 1".into());
        }
        if e.fractions.is_empty() || e.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("experiment.fractions must be nonempty and lie in (0, 1]".into());
        }
        if !e.fractions.windows(2).all(|w| w[0] < w[1]) {
            return bad("experiment.fractions must be strictly increasing".into());
        }
        if e.layers.is_empty() || e.layers.iter().any(|&l| l == 0 || l > self.network.hidden.len()) {
            return bad(format!(
                "experiment.layers must name hidden layers 1..={}",
                self.network.hidden.len()
            ));
        }
        let mut layers = e.layers.clone();
        layers.sort_unstable();
        layers.dedup();
        if layers.len() != e.layers.len() {
            return bad("experiment.layers must not repeat".into());
        }
        let mut labels: Vec<&str> = self.strategies.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.strategies.len() {
            return bad("strategy labels must be unique".into());
        }
        for s in &self.strategies {
            if s.label.is_empty() || s.label.contains([',', '"', '\n']) {
                return bad(format!("strategy label {:?} must be nonempty and CSV-safe", s.label));
            }
            if let BetaValue::Fixed(b) = s.beta {
                if !(b > 0.0 && b.is_finite()) {
                    return bad(format!("strategy {}: beta must be > 0", s.label));
                }
            }
            if !(s.epsilon >= 0.0) || !(s.ridge >= 0.0) {
                return bad(format!("strategy {}: epsilon and ridge must be >= 0", s.label));
            }
            if s.sampler == SamplerName::BestOfM && s.best_of == 0 {
                return bad(format!("strategy {}: best_of must be >= 1", s.label));
            }
            if s.instance_cap == Some(0) {
                return bad(format!("strategy {}: instance_cap must be >= 1", s.label));
            }
        }
        self.train
            .to_config(0)
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        if let Some(every) = self.train.prune_every {
            if every == 0 || self.train.prune_rounds == 0 {
                return bad("train.prune_every and train.prune_rounds must be >= 1".into());
            }
            if !(self.train.prune_fraction > 0.0 && self.train.prune_fraction < 1.0) {
                return bad("train.prune_fraction must lie in (0, 1)".into());
            }
            match &self.train.prune_strategy {
                Some(l) if self.strategy(l).is_some() => {}
                _ => return bad("train.prune_strategy must name a configured strategy".into()),
            }
        }
        if let Some(b) = &self.beta_sweep {
            if b.betas.is_empty() || b.betas.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return bad("beta_sweep.betas must be nonempty and > 0".into());
            }
            if !(b.fraction > 0.0 && b.fraction < 1.0) {
                return bad("beta_sweep.fraction must lie in (0, 1)".into());
            }
        }
        self.dataset.check()
    }

    pub fn strategy(&self, label: &str) -> Option<&StrategySection> {
        self.strategies.iter().find(|s| s.label == label)
    }

    /// Full layer sizes for `features` inputs and `classes` outputs.
    pub fn layer_sizes(&self, features: usize, classes: usize) -> Vec<usize> {
        let mut sizes = vec![features];
        sizes.extend(&self.network.hidden);
        sizes.push(classes);
        sizes
    }
}

/// Directory that relative dataset paths are resolved against.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT))
}

const IDX_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn find_maybe_gz(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [dir.join(format!("{stem}.gz")), dir.join(stem)] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found (.gz or plain)"),
    ))
}

impl DatasetSection {
    fn check(&self) -> Result<()> {
        let needs_path = !matches!(self.kind, DatasetKind::Blobs);
        if needs_path && self.path.is_none() {
            return Err(Error::Config(format!("dataset.path is required for {:?}", self.kind)));
        }
        if self.kind == DatasetKind::MnistRot && (self.train_file.is_none() || self.test_file.is_none()) {
            return Err(Error::Config("mnist_rot needs dataset.train_file and dataset.test_file".into()));
        }
        if self.kind == DatasetKind::Blobs && self.blobs.is_none() {
            return Err(Error::Config("blobs needs a [dataset.blobs] table".into()));
        }
        Ok(())
    }

    fn resolved_path(&self, root: &Path) -> PathBuf {
        let p = self.path.clone().unwrap_or_default();
        if p.is_absolute() {
            p
        } else {
            root.join(p)
        }
    }

    /// Loads train and test sets, applying the configured subsample sizes
    /// with seeds derived from `seed`.
    pub fn load(&self, root: &Path, seed: u64) -> Result<DataSplit> {
        self.check()?;
        let dir = self.resolved_path(root);
        let (mut train, mut test) = match self.kind {
            DatasetKind::Mnist | DatasetKind::MnistRotSynth => {
                let p: Vec<PathBuf> = IDX_NAMES
                    .iter()
                    .map(|s| find_maybe_gz(&dir, s))
                    .collect::<Result<_>>()?;
                (load_idx(&p[0], &p[1])?, load_idx(&p[2], &p[3])?)
            }
            DatasetKind::MnistRot => {
                let f = |name: &Option<String>| dir.join(name.as_deref().unwrap_or_default());
                let mut tr = load_amat(f(&self.train_file), 784)?;
                let mut te = load_amat(f(&self.test_file), 784)?;
                tr.name = "mnist_rot".into();
                te.name = "mnist_rot".into();
                (tr, te)
            }
            DatasetKind::Cifar10 => {
                let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
                (load_cifar10(&batches)?, load_cifar10(&[dir.join("test_batch.bin")])?)
            }
            DatasetKind::Blobs => {
                let b = self.blobs.as_ref().expect("checked");
                let split = synth_blobs(&BlobSpec {
                    class_count: b.classes,
                    features: b.features,
                    per_class: b.per_class,
                    spread: b.spread,
                    seed: derive_seed(seed, "blobs"),
                })?;
                (split.train, split.test)
            }
        };
        if let Some(n) = self.train_count {
            train = subsample(&train, n, derive_seed(seed, "train-subsample"))?;
        }
        if let Some(n) = self.test_count {
            test = subsample(&test, n, derive_seed(seed, "test-subsample"))?;
        }
        if self.kind == DatasetKind::MnistRotSynth {
            train = rotate(&train, derive_seed(seed, "rotate-train"))?;
            test = rotate(&test, derive_seed(seed, "rotate-test"))?;
        }
        check_kind(self.kind, &train)?;
        DataSplit::new(train, test)
    }
}

fn check_kind(kind: DatasetKind, d: &Dataset) -> Result<()> {
    let expected = match kind {
        DatasetKind::Mnist | DatasetKind::MnistRot | DatasetKind::MnistRotSynth => Some((784, MNIST_CLASSES)),
        DatasetKind::Cifar10 => Some((CIFAR10_FEATURES, 10)),
        DatasetKind::Blobs => None,
    };
    match expected {
        Some((f, c)) if d.features() != f || d.class_count != c => Err(Error::Config(format!(
            "dataset has {} features and {} classes, expected {f} and {c}",
            d.features(),
            d.class_count
        ))),
        _ => Ok(()),
    }
}
