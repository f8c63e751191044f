//! Engine for generating diverse, radius-constrained counterfactual latent
//! uncertainty explanations (δ-CLUEs) and analyzing the resulting sets.
//!
//! The pipeline: train a small MLP VAE and an MC-dropout classifier
//! ([`models`], [`training`]), pick the most uncertain test inputs ([`data`]),
//! then run projected gradient descent on an uncertainty-plus-distance loss
//! inside a δ-ball around the encoded input ([`search`]), starting from
//! diverse initialization schemes ([`schemes`]). [`analysis`] summarizes the
//! label diversity, per-class costs, and distance-metric robustness of the
//! explanation sets. Everything is driven through a tape-based reverse-mode
//! autodiff substrate ([`autodiff`]) over dense `f64` tensors.

pub mod analysis;
pub mod autodiff;
pub mod container;
pub mod data;
pub mod models;
pub mod schemes;
pub mod search;
pub mod training;
pub mod util;
