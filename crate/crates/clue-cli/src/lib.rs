//! Experiment harness for the δ-constrained latent explanation engine:
//! model training, single-input explanation runs, the full
//! δ × loss × scheme grid, the translation-robustness experiment, and
//! output validation.
//!
//! The binary (`clue`) is a thin wrapper over these library entry points,
//! so integration tests can drive the same code paths in-process.

use std::path::Path;

use anyhow::{Context, Result};

pub mod chart;
pub mod commands;
pub mod config;
pub mod gallery;
pub mod stack;

/// Writes an SVG document, creating parent directories as needed.
pub fn write_svg(path: impl AsRef<Path>, svg: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
