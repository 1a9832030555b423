//! Experiment configuration files (TOML, or JSON by extension).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{LyapunovConfig, MemoryCapacityConfig};
use crate::patches::{
    load_cifar100_bin, load_cifar10_bin, load_mnist_dir, CorruptionType, ImageBatch,
};
use crate::topology::ReservoirSpec;
use crate::training::{ModelConfig, TrainConfig};

pub const DATA_DIR_ENV: &str = "VIR_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment seed. Overrides every nested `seed` field on load.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

fn default_seed() -> u64 {
    42
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            output_dir: None,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            diagnostics: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Cifar10,
    Cifar100,
}

impl DatasetKind {
    fn dir_name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Dataset directory; falls back to `$VIR_DATA_DIR/<kind>` and then `$VIR_DATA_DIR`.
    pub path: Option<PathBuf>,
    /// Keep only the first `n` training images.
    pub train_limit: Option<usize>,
    /// Keep only the first `n` test images.
    pub test_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    /// Reservoir swept; a 100-neuron scalar-input reservoir when unset.
    pub reservoir: Option<ReservoirSpec>,
    pub rhos: Vec<f64>,
    pub input_scalings: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            reservoir: None,
            rhos: vec![0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 1.75, 2.0],
            input_scalings: vec![1.0],
        }
    }
}

/// Reservoir used by sweeps when none is given: Table-1 weights at `N = 100`,
/// the jump scaled with `N`, one input channel.
pub fn sweep_reservoir(seed: u64) -> ReservoirSpec {
    ReservoirSpec {
        n: 100,
        jump_size: 14,
        input_dim: 1,
        seed,
        ..ReservoirSpec::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diagnostic {
    SmallWorld {
        /// Graph source; the model's first reservoir when unset.
        #[serde(default)]
        reservoir: Option<ReservoirSpec>,
    },
    LyapunovSweep {
        #[serde(default)]
        grid: SweepGrid,
        #[serde(default)]
        settings: LyapunovConfig,
    },
    McSweep {
        #[serde(default)]
        grid: SweepGrid,
        #[serde(default)]
        settings: MemoryCapacityConfig,
    },
    Robustness {
        /// Test images evaluated per corrupted set.
        #[serde(default)]
        test_limit: Option<usize>,
        #[serde(default = "all_corruptions")]
        corruptions: Vec<CorruptionType>,
    },
}

fn all_corruptions() -> Vec<CorruptionType> {
    CorruptionType::ALL.to_vec()
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the file ends in `.json`, then applies the
    /// seed and validates. Every failure is an [`Error::Config`].
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json { Self::from_json(&text) } else { Self::from_toml(&text) }
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?;
        if let Some(s) = seed_override {
            cfg.seed = s;
        }
        cfg.resolve_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copies the experiment seed into every nested spec.
    pub fn resolve_seeds(&mut self) {
        self.model.reservoir.seed = self.seed;
        self.train.seed = self.seed;
        for d in &mut self.diagnostics {
            match d {
                Diagnostic::SmallWorld { reservoir: Some(r) } => r.seed = self.seed,
                Diagnostic::LyapunovSweep { grid, .. } | Diagnostic::McSweep { grid, .. } => {
                    if let Some(r) = &mut grid.reservoir {
                        r.seed = self.seed;
                    }
                }
                _ => {}
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.model.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        for (name, v) in [("train_limit", self.dataset.train_limit), ("test_limit", self.dataset.test_limit)] {
            if v == Some(0) {
                return Err(Error::Config(format!("dataset.{name} must be positive")));
            }
        }
        for (i, d) in self.diagnostics.iter().enumerate() {
            let at = |m: String| Error::Config(format!("diagnostics[{i}]: {m}"));
            match d {
                Diagnostic::SmallWorld { reservoir } => {
                    if let Some(r) = reservoir {
                        r.validate().map_err(|e| at(e.to_string()))?;
                    }
                }
                Diagnostic::LyapunovSweep { grid, settings } => {
                    check_grid(grid).map_err(at)?;
                    if settings.steps == 0 || !(settings.gamma0 > 0.0) {
                        return Err(at("steps and gamma0 must be positive".into()));
                    }
                }
                Diagnostic::McSweep { grid, settings } => {
                    check_grid(grid).map_err(at)?;
                    if grid.reservoir.as_ref().is_some_and(|r| r.input_dim != 1) {
                        return Err(at("memory capacity needs input_dim = 1".into()));
                    }
                    if settings.train_len == 0 || settings.test_len < 2 || settings.t_max == Some(0) {
                        return Err(at("train_len, test_len and t_max must be positive".into()));
                    }
                }
                Diagnostic::Robustness { test_limit, corruptions } => {
                    if *test_limit == Some(0) || corruptions.is_empty() {
                        return Err(at("robustness needs a positive test_limit and at least one corruption".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn robustness_settings(&self) -> (Option<usize>, Vec<CorruptionType>) {
        self.diagnostics
            .iter()
            .find_map(|d| match d {
                Diagnostic::Robustness { test_limit, corruptions } => Some((*test_limit, corruptions.clone())),
                _ => None,
            })
            .unwrap_or((None, all_corruptions()))
    }
}

fn check_grid(grid: &SweepGrid) -> std::result::Result<(), String> {
    if grid.rhos.is_empty() || grid.input_scalings.is_empty() {
        return Err("sweep grid needs at least one rho and one input scaling".into());
    }
    if grid.rhos.iter().chain(&grid.input_scalings).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err("sweep values must be positive".into());
    }
    if let Some(r) = &grid.reservoir {
        r.validate_structure().map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Directory holding the dataset files.
pub fn dataset_dir(cfg: &DatasetConfig) -> Result<PathBuf> {
    let dir = match (&cfg.path, std::env::var_os(DATA_DIR_ENV)) {
        (Some(p), _) => p.clone(),
        (None, Some(root)) => {
            let root = PathBuf::from(root);
            let sub = root.join(cfg.kind.dir_name());
            if sub.is_dir() {
                sub
            } else {
                root
            }
        }
        (None, None) => {
            return Err(Error::DatasetMissing(format!("no dataset.path in the config and {DATA_DIR_ENV} is unset")));
        }
    };
    if !dir.is_dir() {
        return Err(Error::DatasetMissing(format!("{} is not a directory", dir.display())));
    }
    Ok(dir)
}

fn existing(dir: &Path, names: &[String], nested: &str) -> Result<Vec<PathBuf>> {
    for base in [dir.to_path_buf(), dir.join(nested)] {
        let paths: Vec<PathBuf> = names.iter().map(|n| base.join(n)).collect();
        if paths.iter().all(|p| p.is_file()) {
            return Ok(paths);
        }
    }
    Err(Error::DatasetMissing(format!("{} not found under {}", names.join(", "), dir.display())))
}

/// Loads the train and test splits, applying the configured limits.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<(ImageBatch, ImageBatch)> {
    let dir = dataset_dir(cfg)?;
    let (train, test) = match cfg.kind {
        DatasetKind::Mnist => (load_mnist_dir(&dir, true)?, load_mnist_dir(&dir, false)?),
        DatasetKind::Cifar10 => {
            let names: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
            let train = existing(&dir, &names, "cifar-10-batches-bin")?;
            let test = existing(&dir, &["test_batch.bin".to_string()], "cifar-10-batches-bin")?;
            (load_cifar10_bin(&train)?, load_cifar10_bin(&test)?)
        }
        DatasetKind::Cifar100 => {
            let train = existing(&dir, &["train.bin".to_string()], "cifar-100-binary")?;
            let test = existing(&dir, &["test.bin".to_string()], "cifar-100-binary")?;
            (load_cifar100_bin(&train)?, load_cifar100_bin(&test)?)
        }
    };
    let limit = |b: ImageBatch, n: Option<usize>| match n {
        Some(n) if n < b.len() => b.take(n),
        _ => b,
    };
    Ok((limit(train, cfg.train_limit), limit(test, cfg.test_limit)))
}
