//! Experiment configuration: a flat key-value file, overridable by
//! command-line flags of the same name.
//!
//! File format: one `key = value` pair per line; `#` starts a comment.
//! Unknown keys are rejected so typos surface immediately.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clue_core::schemes::SchemeTag;
use clue_core::training::OptimizerKind;

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "CLUE_DATA_DIR";

/// Loss variant of the latent objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LossVariant {
    /// Pure predictive entropy (λx = λy = 0).
    Uncertainty,
    /// Entropy plus weighted distances.
    Distance,
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossVariant::Uncertainty => write!(f, "uncertainty"),
            LossVariant::Distance => write!(f, "distance"),
        }
    }
}

impl FromStr for LossVariant {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uncertainty" => Ok(LossVariant::Uncertainty),
            "distance" => Ok(LossVariant::Distance),
            other => bail!("unknown loss `{other}` (expected uncertainty or distance)"),
        }
    }
}

/// Where the dataset comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    /// Built-in procedural digits, materialized as IDX files and re-loaded
    /// through the IDX reader.
    Synthetic,
    /// Pre-existing IDX files at the configured paths.
    Idx,
}

impl std::fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSource::Synthetic => write!(f, "synthetic"),
            DatasetSource::Idx => write!(f, "idx"),
        }
    }
}

impl FromStr for DatasetSource {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "synthetic" => Ok(DatasetSource::Synthetic),
            "idx" => Ok(DatasetSource::Idx),
            other => bail!("unknown dataset source `{other}` (expected synthetic or idx)"),
        }
    }
}

/// Resolved harness configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub data_dir: PathBuf,
    pub train_count: usize,
    pub test_count: usize,

    pub d_z: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub mc_samples: usize,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub optimizer: String,

    pub vae_checkpoint: Option<PathBuf>,
    pub bnn_checkpoint: Option<PathBuf>,

    pub delta: f64,
    pub delta_grid: Vec<f64>,
    pub loss: LossVariant,
    pub losses: Vec<LossVariant>,
    pub scheme: SchemeTag,
    pub schemes: Vec<SchemeTag>,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub n: usize,
    pub uncertain_count: usize,
    pub h_threshold: f64,
    pub step_size: f64,
    pub max_steps: usize,
    pub convergence_tol: f64,
    pub anchor_entropy: f64,

    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data_dir = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        Self {
            dataset: DatasetSource::Synthetic,
            data_dir,
            train_count: 10_000,
            test_count: 2_000,
            d_z: 8,
            n_classes: 10,
            dropout_rate: 0.25,
            mc_samples: 100,
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            kl_weight: 1.0,
            optimizer: "adam-like".into(),
            vae_checkpoint: None,
            bnn_checkpoint: None,
            delta: 3.5,
            delta_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
            loss: LossVariant::Distance,
            losses: vec![LossVariant::Uncertainty, LossVariant::Distance],
            scheme: SchemeTag::S1,
            schemes: vec![SchemeTag::S1, SchemeTag::S2],
            lambda_x: 0.03,
            lambda_y: 0.0,
            n: 100,
            uncertain_count: 8,
            h_threshold: 0.5,
            step_size: 0.1,
            max_steps: 500,
            convergence_tol: 1e-4,
            anchor_entropy: clue_core::schemes::DEFAULT_ANCHOR_ENTROPY,
            seed: 0,
            out: PathBuf::from("runs"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a flat key-value file and applies it over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one key-value pair. Every documented key is settable here,
    /// whether it came from the file or a flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| anyhow!("key `{key}`: bad value `{value}`: {e}"))
        }
        fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
        where
            T::Err: std::fmt::Display,
        {
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse(key, s))
                .collect()
        }

        match key {
            "dataset" => self.dataset = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "train_count" => self.train_count = parse(key, value)?,
            "test_count" => self.test_count = parse(key, value)?,
            "d_z" => self.d_z = parse(key, value)?,
            "n_classes" => self.n_classes = parse(key, value)?,
            "dropout_rate" => self.dropout_rate = parse(key, value)?,
            "mc_samples" => self.mc_samples = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "kl_weight" => self.kl_weight = parse(key, value)?,
            "optimizer" => self.optimizer = value.to_string(),
            "vae_checkpoint" => self.vae_checkpoint = Some(PathBuf::from(value)),
            "bnn_checkpoint" => self.bnn_checkpoint = Some(PathBuf::from(value)),
            "delta" => self.delta = parse(key, value)?,
            "delta_grid" => self.delta_grid = parse_list(key, value)?,
            "loss" => self.loss = parse(key, value)?,
            "losses" => self.losses = parse_list(key, value)?,
            "scheme" => {
                self.scheme = value
                    .parse()
                    .map_err(|e: String| anyhow!("key `scheme`: {e}"))?
            }
            "schemes" => {
                self.schemes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e: String| anyhow!("key `schemes`: {e}")))
                    .collect::<Result<_>>()?
            }
            "lambda_x" => self.lambda_x = parse(key, value)?,
            "lambda_y" => self.lambda_y = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "uncertain_count" => self.uncertain_count = parse(key, value)?,
            "h_threshold" => self.h_threshold = parse(key, value)?,
            "step_size" => self.step_size = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "convergence_tol" => self.convergence_tol = parse(key, value)?,
            "anchor_entropy" => self.anchor_entropy = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = parse(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            bail!("n must be >= 1");
        }
        if self.delta_grid.windows(2).any(|w| w[0] >= w[1]) {
            bail!("delta_grid must be strictly increasing");
        }
        if self.delta_grid.is_empty() || self.losses.is_empty() || self.schemes.is_empty() {
            bail!("delta_grid, losses, and schemes must be nonempty");
        }
        if self.uncertain_count == 0 {
            bail!("uncertain_count must be >= 1");
        }
        Ok(())
    }

    pub fn optimizer_kind(&self) -> Result<OptimizerKind> {
        match self.optimizer.as_str() {
            "adam-like" => Ok(OptimizerKind::default()),
            "sgd-momentum" => Ok(OptimizerKind::SgdMomentum { momentum: 0.9 }),
            other => bail!("unknown optimizer `{other}` (expected adam-like or sgd-momentum)"),
        }
    }

    pub fn vae_checkpoint_path(&self) -> PathBuf {
        self.vae_checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("vae.ckpt"))
    }

    pub fn bnn_checkpoint_path(&self) -> PathBuf {
        self.bnn_checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("bnn.ckpt"))
    }

    pub fn train_images_path(&self) -> PathBuf {
        self.data_dir.join("train-images.idx")
    }

    pub fn train_labels_path(&self) -> PathBuf {
        self.data_dir.join("train-labels.idx")
    }

    pub fn test_images_path(&self) -> PathBuf {
        self.data_dir.join("test-images.idx")
    }

    pub fn test_labels_path(&self) -> PathBuf {
        self.data_dir.join("test-labels.idx")
    }

    /// λ weights implied by a loss variant.
    pub fn lambdas_for(&self, loss: LossVariant) -> (f64, f64) {
        match loss {
            LossVariant::Uncertainty => (0.0, 0.0),
            LossVariant::Distance => (self.lambda_x, self.lambda_y),
        }
    }

    /// The resolved configuration as a flat key-value dump, suitable both
    /// as documentation of a run and as a reloadable config file. Output
    /// paths are excluded so identical experiments dump identical text.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("dataset", self.dataset.to_string());
        put("train_count", self.train_count.to_string());
        put("test_count", self.test_count.to_string());
        put("d_z", self.d_z.to_string());
        put("n_classes", self.n_classes.to_string());
        put("dropout_rate", self.dropout_rate.to_string());
        put("mc_samples", self.mc_samples.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("kl_weight", self.kl_weight.to_string());
        put("optimizer", self.optimizer.clone());
        put(
            "delta_grid",
            self.delta_grid
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("delta", self.delta.to_string());
        put("loss", self.loss.to_string());
        put(
            "losses",
            self.losses
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("scheme", self.scheme.to_string());
        put(
            "schemes",
            self.schemes
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("lambda_x", self.lambda_x.to_string());
        put("lambda_y", self.lambda_y.to_string());
        put("n", self.n.to_string());
        put("uncertain_count", self.uncertain_count.to_string());
        put("h_threshold", self.h_threshold.to_string());
        put("step_size", self.step_size.to_string());
        put("max_steps", self.max_steps.to_string());
        put("convergence_tol", self.convergence_tol.to_string());
        put("anchor_entropy", self.anchor_entropy.to_string());
        put("seed", self.seed.to_string());
        s
    }

    /// Key-value view of the dump, for consumers that need single values.
    pub fn dump_map(&self) -> BTreeMap<String, String> {
        self.dump()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# comment\nn = 25\ndelta_grid = 0.5, 1.5\nlosses = distance\nschemes = s1,s3\nseed = 9\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.n, 25);
        assert_eq!(cfg.delta_grid, vec![0.5, 1.5]);
        assert_eq!(cfg.losses, vec![LossVariant::Distance]);
        assert_eq!(cfg.schemes, vec![SchemeTag::S1, SchemeTag::S3]);
        assert_eq!(cfg.seed, 9);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("n", "not-a-number").is_err());
        assert!(cfg.set("loss", "nonsense").is_err());
    }

    #[test]
    fn dump_round_trips_through_set() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("n", "17").unwrap();
        cfg.set("losses", "uncertainty").unwrap();
        let dump = cfg.dump();
        let mut again = ExperimentConfig::default();
        for line in dump.lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            again.set(k, v).unwrap();
        }
        assert_eq!(again.n, 17);
        assert_eq!(again.losses, vec![LossVariant::Uncertainty]);
        assert_eq!(again.dump(), dump);
    }

    #[test]
    fn non_increasing_grid_is_invalid() {
        let mut cfg = ExperimentConfig::default();
        cfg.delta_grid = vec![1.0, 1.0];
        assert!(cfg.validate().is_err());
    }
}
