//! Flat key=value experiment configuration.
//!
//! The file format is one `key = value` pair per line with dotted section
//! prefixes (`data.`, `model.`, `pretrain.`, `adapt.`), `#` comments, and
//! blank lines. Every key has a default, so the empty file is a valid
//! experiment; unknown or duplicate keys are errors, because a silently
//! ignored typo in a sweep definition wastes hours of compute.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forecastnet::ModelConfig;
use crate::mosa::{AdaptMethod, ModularMask, DEFAULT_INIT_STD};
use crate::trainkit::{TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_PATIENCE};

/// Sample counts for the six dataset splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataSizes {
    pub source_train: usize,
    pub source_val: usize,
    pub source_test: usize,
    /// Pool the per-cell adaptation sets are subsampled from; must cover
    /// the largest requested N_target.
    pub target_adapt: usize,
    pub target_val: usize,
    pub target_test: usize,
}

impl Default for DataSizes {
    fn default() -> Self {
        DataSizes {
            source_train: 2000,
            source_val: 200,
            source_test: 500,
            target_adapt: 100,
            target_val: 40,
            target_test: 500,
        }
    }
}

/// Pretraining hyperparameters (always full fine-tuning).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr: 1e-3,
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: 50,
            patience: DEFAULT_PATIENCE,
        }
    }
}

/// The adaptation sweep: the cross product of methods, masks, ranks,
/// target budgets, and seeds (mask and rank axes collapse for methods
/// that ignore them).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptGrid {
    pub methods: Vec<AdaptMethod>,
    pub masks: Vec<ModularMask>,
    pub ranks: Vec<usize>,
    pub n_targets: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `None` means each method uses its published default learning rate.
    pub lr: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_std: f64,
}

impl Default for AdaptGrid {
    fn default() -> Self {
        AdaptGrid {
            methods: AdaptMethod::ALL.to_vec(),
            masks: vec![ModularMask::ALL],
            ranks: vec![3],
            n_targets: vec![10, 20, 30],
            seeds: vec![1, 2, 3, 4, 5],
            lr: None,
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: 300,
            patience: DEFAULT_PATIENCE,
            init_std: DEFAULT_INIT_STD,
        }
    }
}

/// Everything one experiment needs: world, model, training phases, sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSizes,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub adapt: AdaptGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "agent_shift".to_string(),
            seed: 7,
            out_dir: PathBuf::from("runs/exp"),
            data: DataSizes::default(),
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            adapt: AdaptGrid::default(),
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("key `{key}`: cannot parse `{value}` as {want}"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| bad(key, v, "a 64-bit seed"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| bad(key, v, "a number"))
}

fn parse_list<T, F: Fn(&str, &str) -> Result<T>>(key: &str, v: &str, f: F) -> Result<Vec<T>> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("key `{key}`: list must not be empty")));
    }
    items.into_iter().map(|s| f(key, s)).collect()
}

impl ExperimentConfig {
    /// Parses the key=value text, starting from defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = v.to_string(),
            "seed" => self.seed = parse_u64(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),

            "data.source_train" => self.data.source_train = parse_usize(key, v)?,
            "data.source_val" => self.data.source_val = parse_usize(key, v)?,
            "data.source_test" => self.data.source_test = parse_usize(key, v)?,
            "data.target_adapt" => self.data.target_adapt = parse_usize(key, v)?,
            "data.target_val" => self.data.target_val = parse_usize(key, v)?,
            "data.target_test" => self.data.target_test = parse_usize(key, v)?,

            // Grid shape and class count are pinned by the world's layouts
            // and deliberately not configurable here.
            "model.d_model" => self.model.d_model = parse_usize(key, v)?,
            "model.t_obs" => self.model.t_obs = parse_usize(key, v)?,
            "model.t_pred" => self.model.t_pred = parse_usize(key, v)?,
            "model.k_modes" => self.model.k_modes = parse_usize(key, v)?,
            "model.seed" => self.model.seed = parse_u64(key, v)?,

            "pretrain.lr" => self.pretrain.lr = parse_f64(key, v)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse_usize(key, v)?,
            "pretrain.max_epochs" => self.pretrain.max_epochs = parse_usize(key, v)?,
            "pretrain.patience" => self.pretrain.patience = parse_usize(key, v)?,

            "adapt.methods" => {
                self.adapt.methods = parse_list(key, v, |_, s| AdaptMethod::parse(s))?
            }
            "adapt.masks" => self.adapt.masks = parse_list(key, v, |_, s| ModularMask::parse(s))?,
            "adapt.ranks" => self.adapt.ranks = parse_list(key, v, parse_usize)?,
            "adapt.n_targets" => self.adapt.n_targets = parse_list(key, v, parse_usize)?,
            "adapt.seeds" => self.adapt.seeds = parse_list(key, v, parse_u64)?,
            "adapt.lr" => {
                self.adapt.lr = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_f64(key, v)?)
                }
            }
            "adapt.batch_size" => self.adapt.batch_size = parse_usize(key, v)?,
            "adapt.max_epochs" => self.adapt.max_epochs = parse_usize(key, v)?,
            "adapt.patience" => self.adapt.patience = parse_usize(key, v)?,
            "adapt.init_std" => self.adapt.init_std = parse_f64(key, v)?,

            other => {
                return Err(Error::Config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        let lists_ok = !self.adapt.methods.is_empty()
            && !self.adapt.masks.is_empty()
            && !self.adapt.ranks.is_empty()
            && !self.adapt.n_targets.is_empty()
            && !self.adapt.seeds.is_empty();
        if !lists_ok {
            return Err(Error::Config("adapt sweep lists must not be empty".into()));
        }
        if self.adapt.ranks.iter().any(|&r| r == 0) {
            return Err(Error::Config("adapt.ranks entries must be at least 1".into()));
        }
        if self.adapt.n_targets.iter().any(|&n| n == 0) {
            return Err(Error::Config("adapt.n_targets entries must be at least 1".into()));
        }
        if let Some(&n) = self
            .adapt
            .n_targets
            .iter()
            .find(|&&n| n > self.data.target_adapt)
        {
            return Err(Error::Config(format!(
                "adapt.n_targets entry {n} exceeds the target adapt pool ({})",
                self.data.target_adapt
            )));
        }
        self.pretrain_train_config().validate()?;
        // Probe one cell per method so sweep-level mistakes (bad lr,
        // patience > epochs) surface at parse time, not mid-run.
        for &m in &self.adapt.methods {
            self.adapt_train_config(m, ModularMask::ALL, self.adapt.ranks[0], 0)
                .validate()?;
        }
        Ok(())
    }

    /// Train config for the pretraining phase.
    pub fn pretrain_train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.pretrain.lr,
            batch_size: self.pretrain.batch_size,
            max_epochs: self.pretrain.max_epochs,
            patience: self.pretrain.patience,
            seed: self.seed,
            method: AdaptMethod::Ft,
            mask: ModularMask::ALL,
            rank: 1,
            init_std: self.adapt.init_std,
        }
    }

    /// Train config for one sweep cell.
    pub fn adapt_train_config(
        &self,
        method: AdaptMethod,
        mask: ModularMask,
        rank: usize,
        seed: u64,
    ) -> TrainConfig {
        TrainConfig {
            lr: self.adapt.lr.unwrap_or_else(|| method.default_lr()),
            batch_size: self.adapt.batch_size,
            max_epochs: self.adapt.max_epochs,
            patience: self.adapt.patience,
            seed,
            method,
            mask,
            rank,
            init_std: self.adapt.init_std,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.data.source_train, 2000);
        assert_eq!(cfg.adapt.n_targets, vec![10, 20, 30]);
    }

    #[test]
    fn parses_a_full_file() {
        let text = "\
# demo sweep
scenario = scene_shift
seed = 42
out_dir = /tmp/run1

data.source_train = 64
model.d_model = 32
pretrain.max_epochs = 5
pretrain.patience = 5
adapt.methods = MOSA, PA
adapt.masks = A, S+F
adapt.ranks = 1,3
adapt.n_targets = 10
adapt.seeds = 1,2
adapt.lr = 0.01
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.scenario, "scene_shift");
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/run1"));
        assert_eq!(cfg.data.source_train, 64);
        assert_eq!(cfg.model.d_model, 32);
        assert_eq!(cfg.adapt.methods, vec![AdaptMethod::Mosa, AdaptMethod::Pa]);
        assert_eq!(cfg.adapt.masks.len(), 2);
        assert!(cfg.adapt.masks[1].fusion && !cfg.adapt.masks[1].motion);
        assert_eq!(cfg.adapt.lr, Some(0.01));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_errors() {
        let err = ExperimentConfig::parse("adapt.metods = MOSA\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err}");
        assert!(err.to_string().contains("adapt.metods"));

        let err = ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_lines_and_values_are_errors() {
        assert!(ExperimentConfig::parse("just words\n").is_err());
        assert!(ExperimentConfig::parse("seed = banana\n").is_err());
        assert!(ExperimentConfig::parse("adapt.ranks = \n").is_err());
        assert!(ExperimentConfig::parse("adapt.ranks = 0\n").is_err());
        assert!(ExperimentConfig::parse("adapt.n_targets = 500\n").is_err());
        assert!(ExperimentConfig::parse("pretrain.lr = -1\n").is_err());
    }

    #[test]
    fn adapt_lr_auto_uses_method_defaults() {
        let cfg = ExperimentConfig::parse("adapt.lr = auto\n").unwrap();
        let tc = cfg.adapt_train_config(AdaptMethod::Mosa, ModularMask::ALL, 3, 9);
        assert_eq!(tc.lr, 5e-3);
        let tc = cfg.adapt_train_config(AdaptMethod::Ft, ModularMask::ALL, 3, 9);
        assert_eq!(tc.lr, 5e-5);
        assert_eq!(tc.seed, 9);
    }
}
