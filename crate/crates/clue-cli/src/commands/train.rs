//! `clue train`: train the VAE and classifier, write checkpoints and
//! training curves.

use anyhow::{bail, Context, Result};
use clue_core::container::Container;
use clue_core::training::{self, TrainConfig};

use crate::config::ExperimentConfig;
use crate::stack;

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = stack::load_or_generate_data(cfg)?;
    let tcfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        optimizer: cfg.optimizer_kind()?,
        kl_weight: cfg.kl_weight,
        dropout_rate: cfg.dropout_rate,
    };

    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))?;

    eprintln!(
        "training VAE (d_z={}, {} examples, {} epochs)",
        cfg.d_z,
        train.len(),
        cfg.epochs
    );
    let vae = training::train_vae(
        &train,
        &test,
        stack::vae_architecture(cfg, train.d_input()),
        &tcfg,
    )?;
    eprintln!(
        "training classifier ({} classes, dropout {})",
        cfg.n_classes, cfg.dropout_rate
    );
    let bnn = training::train_bnn(
        &train,
        &test,
        stack::bnn_architecture(cfg, train.d_input()),
        &tcfg,
    )?;

    let vae_path = cfg.vae_checkpoint_path();
    let bnn_path = cfg.bnn_checkpoint_path();
    if let Some(parent) = vae_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    if let Some(parent) = bnn_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let vae_container = vae.model.to_container();
    let bnn_container = bnn.model.to_container();
    vae_container.save(&vae_path)?;
    bnn_container.save(&bnn_path)?;

    // Checkpoints must reload byte-identically.
    for (path, written) in [(&vae_path, &vae_container), (&bnn_path, &bnn_container)] {
        let reloaded = Container::load(path)?;
        if reloaded.to_bytes() != written.to_bytes() {
            bail!("checkpoint {} did not round-trip bit-exactly", path.display());
        }
    }

    let mut vae_curve = csv::Writer::from_path(cfg.out.join("vae_curve.csv"))?;
    vae_curve.write_record(["epoch", "loss", "kl"])?;
    for e in &vae.curve {
        vae_curve.write_record(&[e.epoch.to_string(), e.loss.to_string(), e.metric.to_string()])?;
    }
    vae_curve.flush()?;

    let mut bnn_curve = csv::Writer::from_path(cfg.out.join("bnn_curve.csv"))?;
    bnn_curve.write_record(["epoch", "loss", "heldout_accuracy"])?;
    for e in &bnn.curve {
        bnn_curve.write_record(&[e.epoch.to_string(), e.loss.to_string(), e.metric.to_string()])?;
    }
    bnn_curve.flush()?;

    stack::write_run_config(cfg, &cfg.out)?;

    println!("vae_checkpoint = {}", vae_path.display());
    println!("bnn_checkpoint = {}", bnn_path.display());
    println!("bnn_heldout_accuracy = {:.4}", bnn.heldout_accuracy);
    println!("vae_train_recon_l1 = {:.6}", vae.train_recon_l1);
    println!("vae_heldout_recon_l1 = {:.6}", vae.heldout_recon_l1);
    Ok(())
}
