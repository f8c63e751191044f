//! Shared harness plumbing: dataset acquisition, checkpoint loading, and
//! per-cell search configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clue_core::container::Container;
use clue_core::data::{self, synthetic, Dataset, Split};
use clue_core::models::{BnnArchitecture, GenerativeModel, UncertaintyModel, VaeArchitecture};
use clue_core::schemes::SchemeTag;
use clue_core::search::SearchConfig;
use clue_core::util::{derive_seed, derive_seed2};

use crate::config::{ExperimentConfig, LossVariant};

// Stream labels for deterministic seed derivation.
pub const STREAM_DATA_TRAIN: u64 = 10;
pub const STREAM_DATA_TEST: u64 = 11;
pub const STREAM_UNCERTAIN: u64 = 12;
pub const STREAM_ANCHORS: u64 = 13;
pub const STREAM_CELL: u64 = 14;

/// Trained models plus the datasets they were built from.
pub struct Stack {
    pub train: Dataset,
    pub test: Dataset,
    pub vae: GenerativeModel,
    pub bnn: UncertaintyModel,
}

impl Stack {
    pub fn models(&self) -> clue_core::search::Models<'_> {
        clue_core::search::Models {
            vae: &self.vae,
            bnn: &self.bnn,
        }
    }
}

/// Obtains the train/test datasets per the configured source.
///
/// The synthetic source materializes IDX files under `data_dir` and loads
/// them back through the IDX reader, so the production loader is exercised
/// on every run.
pub fn load_or_generate_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        crate::config::DatasetSource::Synthetic => {
            std::fs::create_dir_all(&cfg.data_dir)
                .with_context(|| format!("creating {}", cfg.data_dir.display()))?;
            let train = synthetic::generate(
                cfg.train_count,
                derive_seed(cfg.seed, STREAM_DATA_TRAIN),
                Split::Train,
            );
            let test = synthetic::generate(
                cfg.test_count,
                derive_seed(cfg.seed, STREAM_DATA_TEST),
                Split::Test,
            );
            data::write_idx(&train, cfg.train_images_path(), cfg.train_labels_path())?;
            data::write_idx(&test, cfg.test_images_path(), cfg.test_labels_path())?;
            let train = data::load_idx(
                cfg.train_images_path(),
                cfg.train_labels_path(),
                Split::Train,
            )?;
            let test =
                data::load_idx(cfg.test_images_path(), cfg.test_labels_path(), Split::Test)?;
            train.validate(cfg.n_classes)?;
            test.validate(cfg.n_classes)?;
            Ok((train, test))
        }
        crate::config::DatasetSource::Idx => {
            let train = data::load_idx(
                cfg.train_images_path(),
                cfg.train_labels_path(),
                Split::Train,
            )?
            .take(cfg.train_count);
            let test = data::load_idx(cfg.test_images_path(), cfg.test_labels_path(), Split::Test)?
                .take(cfg.test_count);
            train.validate(cfg.n_classes)?;
            test.validate(cfg.n_classes)?;
            Ok((train, test))
        }
    }
}

pub fn vae_architecture(cfg: &ExperimentConfig, d_input: usize) -> VaeArchitecture {
    VaeArchitecture {
        d_input,
        d_z: cfg.d_z,
        ..VaeArchitecture::default()
    }
}

pub fn bnn_architecture(cfg: &ExperimentConfig, d_input: usize) -> BnnArchitecture {
    BnnArchitecture {
        d_input,
        n_classes: cfg.n_classes,
        dropout_rate: cfg.dropout_rate,
        mc_samples: cfg.mc_samples,
        ..BnnArchitecture::default()
    }
}

/// Loads datasets and both checkpoints. Fails with a pointer to `train`
/// when a checkpoint is missing.
pub fn load_stack(cfg: &ExperimentConfig) -> Result<Stack> {
    let (train, test) = load_or_generate_data(cfg)?;
    let vae_path = cfg.vae_checkpoint_path();
    let bnn_path = cfg.bnn_checkpoint_path();
    let vae = load_vae(&vae_path)?;
    let bnn = load_bnn(&bnn_path)?;
    if vae.d_input() != train.d_input() || bnn.d_input() != train.d_input() {
        bail!(
            "checkpoint input dimension does not match the dataset ({} vs {})",
            vae.d_input(),
            train.d_input()
        );
    }
    Ok(Stack {
        train,
        test,
        vae,
        bnn,
    })
}

pub fn load_vae(path: &Path) -> Result<GenerativeModel> {
    if !path.exists() {
        bail!(
            "missing VAE checkpoint {} (run `clue train` first)",
            path.display()
        );
    }
    Ok(GenerativeModel::from_container(&Container::load(path)?)?)
}

pub fn load_bnn(path: &Path) -> Result<UncertaintyModel> {
    if !path.exists() {
        bail!(
            "missing classifier checkpoint {} (run `clue train` first)",
            path.display()
        );
    }
    Ok(UncertaintyModel::from_container(&Container::load(path)?)?)
}

/// Search configuration for one grid cell.
///
/// The seed depends only on the input's uncertainty rank, so cells that
/// differ in δ, loss, or scheme share their initialization draws: the
/// nested-ball and loss-separation comparisons are paired.
pub fn cell_search_config(
    cfg: &ExperimentConfig,
    delta: f64,
    loss: LossVariant,
    scheme: SchemeTag,
    rank: usize,
) -> SearchConfig {
    let (lambda_x, lambda_y) = cfg.lambdas_for(loss);
    SearchConfig {
        delta,
        lambda_x,
        lambda_y,
        n: cfg.n,
        scheme,
        step_size: cfg.step_size,
        max_steps: cfg.max_steps,
        convergence_tol: cfg.convergence_tol,
        h_threshold: cfg.h_threshold,
        constrained: true,
        seed: derive_seed2(cfg.seed, STREAM_CELL, rank as u64),
    }
}

/// Writes the resolved configuration dump next to a command's outputs.
pub fn write_run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("run_config.txt"), cfg.dump())?;
    Ok(())
}
