//! The deep generative model (MLP VAE) and the Bayesian classifier
//! (MC-dropout MLP) with its predictive-entropy uncertainty estimate.
//!
//! Both models are plain dense stacks over `f64`. The VAE exposes the
//! deterministic means μ_φ (encode) and μ_θ (decode); the classifier exposes
//! two prediction modes:
//!
//! * `McMean`: average of `mc_samples` stochastic forward passes, each
//!   multiplying hidden activations by a fresh Bernoulli keep-mask (no
//!   rescaling). This is the estimator used to judge and report
//!   uncertainties.
//! * `ExpectedDropout`: a single deterministic pass scaling hidden
//!   activations by `1 − dropout_rate`. Differentiable and noise-free, so it
//!   is the pass used inside gradient descent.
//!
//! Trained models are immutable and can be shared across concurrent
//! searches.

use rand::Rng;

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::container::{Container, ContainerError};
use crate::util::{entropy_nats, rng_from_seed};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected} {what}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Checkpoint(#[from] ContainerError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// One dense layer with weights `[fan_in × fan_out]` and bias `[fan_out]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

impl DenseLayer {
    fn init(rng: &mut impl Rng, fan_in: usize, fan_out: usize, std: f64) -> Self {
        let dist = rand_distr::Normal::new(0.0, std).expect("finite std");
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.sample(dist)).collect();
        Self {
            w: Tensor::matrix(fan_in, fan_out, w).expect("consistent dims"),
            b: Tensor::zeros(vec![fan_out]),
        }
    }

    fn fan_in(&self) -> usize {
        self.w.shape()[0]
    }

    fn fan_out(&self) -> usize {
        self.w.shape()[1]
    }

    /// out = x·W + b for a single row, no recording.
    fn forward_row(&self, x: &[f64], out: &mut Vec<f64>) {
        let (k, n) = (self.fan_in(), self.fan_out());
        debug_assert_eq!(x.len(), k);
        out.clear();
        out.extend_from_slice(self.b.data());
        let w = self.w.data();
        for (l, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                let w_row = &w[l * n..(l + 1) * n];
                for (o, &wv) in out.iter_mut().zip(w_row) {
                    *o += xv * wv;
                }
            }
        }
    }

    fn on_tape(&self, tape: &mut Tape, x: NodeId) -> crate::autodiff::Result<NodeId> {
        let w = tape.leaf(self.w.clone());
        let b = tape.leaf(self.b.clone());
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }
}

/// Architecture of the VAE: encoder D → hidden → (μ, log σ²), decoder
/// d_z → hidden → D with sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeArchitecture {
    pub d_input: usize,
    pub d_z: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
}

impl Default for VaeArchitecture {
    fn default() -> Self {
        Self {
            d_input: 784,
            d_z: 8,
            enc_hidden: vec![256, 128],
            dec_hidden: vec![128, 256],
        }
    }
}

/// VAE encoder/decoder pair providing μ_φ(z|x) and μ_θ(x|z).
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub arch: VaeArchitecture,
    pub enc_hidden: Vec<DenseLayer>,
    pub enc_mu: DenseLayer,
    pub enc_logvar: DenseLayer,
    pub dec_hidden: Vec<DenseLayer>,
    pub dec_out: DenseLayer,
}

impl GenerativeModel {
    pub fn init(arch: VaeArchitecture, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut enc_hidden = Vec::new();
        let mut prev = arch.d_input;
        for &h in &arch.enc_hidden {
            enc_hidden.push(DenseLayer::init(&mut rng, prev, h, (2.0 / prev as f64).sqrt()));
            prev = h;
        }
        let enc_mu = DenseLayer::init(&mut rng, prev, arch.d_z, (1.0 / prev as f64).sqrt());
        let enc_logvar = DenseLayer::init(&mut rng, prev, arch.d_z, (1.0 / prev as f64).sqrt());
        let mut dec_hidden = Vec::new();
        prev = arch.d_z;
        for &h in &arch.dec_hidden {
            dec_hidden.push(DenseLayer::init(&mut rng, prev, h, (2.0 / prev as f64).sqrt()));
            prev = h;
        }
        let dec_out = DenseLayer::init(&mut rng, prev, arch.d_input, (1.0 / prev as f64).sqrt());
        Self {
            arch,
            enc_hidden,
            enc_mu,
            enc_logvar,
            dec_out,
            dec_hidden,
        }
    }

    pub fn d_input(&self) -> usize {
        self.arch.d_input
    }

    pub fn d_z(&self) -> usize {
        self.arch.d_z
    }

    /// μ_φ(z|x): deterministic latent mean of the encoder.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.arch.d_input {
            return Err(ModelError::Dimension {
                what: "input pixels",
                expected: self.arch.d_input,
                actual: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.enc_hidden {
            layer.forward_row(&cur, &mut next);
            for v in next.iter_mut() {
                *v = v.max(0.0);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let mut mu = Vec::new();
        self.enc_mu.forward_row(&cur, &mut mu);
        Ok(mu)
    }

    /// Encoder mean and log-variance heads, for training.
    pub fn encode_full(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.arch.d_input {
            return Err(ModelError::Dimension {
                what: "input pixels",
                expected: self.arch.d_input,
                actual: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.enc_hidden {
            layer.forward_row(&cur, &mut next);
            for v in next.iter_mut() {
                *v = v.max(0.0);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let mut mu = Vec::new();
        self.enc_mu.forward_row(&cur, &mut mu);
        let mut logvar = Vec::new();
        self.enc_logvar.forward_row(&cur, &mut logvar);
        Ok((mu, logvar))
    }

    /// μ_θ(x|z): deterministic decoded mean, sigmoid-squashed into (0,1).
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.arch.d_z {
            return Err(ModelError::Dimension {
                what: "latent coordinates",
                expected: self.arch.d_z,
                actual: z.len(),
            });
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Contract("decode requires finite z".into()));
        }
        let mut cur = z.to_vec();
        let mut next = Vec::new();
        for layer in &self.dec_hidden {
            layer.forward_row(&cur, &mut next);
            for v in next.iter_mut() {
                *v = v.max(0.0);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        self.dec_out.forward_row(&cur, &mut next);
        for v in next.iter_mut() {
            *v = sigmoid(*v);
        }
        Ok(next)
    }

    /// Decoder recorded on a tape (sigmoid output), differentiable w.r.t. z.
    pub fn decode_on_tape(&self, tape: &mut Tape, z: NodeId) -> crate::autodiff::Result<NodeId> {
        let logits = self.decode_logits_on_tape(tape, z)?;
        tape.sigmoid(logits)
    }

    /// Decoder pre-sigmoid logits on a tape (stable Bernoulli likelihoods).
    pub fn decode_logits_on_tape(
        &self,
        tape: &mut Tape,
        z: NodeId,
    ) -> crate::autodiff::Result<NodeId> {
        let mut cur = z;
        for layer in &self.dec_hidden {
            cur = layer.on_tape(tape, cur)?;
            cur = tape.relu(cur)?;
        }
        self.dec_out.on_tape(tape, cur)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.set_meta("kind", "vae");
        c.set_meta("d_input", self.arch.d_input);
        c.set_meta("d_z", self.arch.d_z);
        c.set_meta("enc_hidden", join_sizes(&self.arch.enc_hidden));
        c.set_meta("dec_hidden", join_sizes(&self.arch.dec_hidden));
        for (i, l) in self.enc_hidden.iter().enumerate() {
            c.push(&format!("enc_h{i}_w"), l.w.clone());
            c.push(&format!("enc_h{i}_b"), l.b.clone());
        }
        c.push("enc_mu_w", self.enc_mu.w.clone());
        c.push("enc_mu_b", self.enc_mu.b.clone());
        c.push("enc_logvar_w", self.enc_logvar.w.clone());
        c.push("enc_logvar_b", self.enc_logvar.b.clone());
        for (i, l) in self.dec_hidden.iter().enumerate() {
            c.push(&format!("dec_h{i}_w"), l.w.clone());
            c.push(&format!("dec_h{i}_b"), l.b.clone());
        }
        c.push("dec_out_w", self.dec_out.w.clone());
        c.push("dec_out_b", self.dec_out.b.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta_str("kind")? != "vae" {
            return Err(ModelError::Contract(
                "checkpoint kind is not `vae`".into(),
            ));
        }
        let arch = VaeArchitecture {
            d_input: c.meta_parse("d_input")?,
            d_z: c.meta_parse("d_z")?,
            enc_hidden: split_sizes(c.meta_str("enc_hidden")?),
            dec_hidden: split_sizes(c.meta_str("dec_hidden")?),
        };
        let layer = |wn: &str, bn: &str| -> Result<DenseLayer> {
            Ok(DenseLayer {
                w: c.require(wn)?.clone(),
                b: c.require(bn)?.clone(),
            })
        };
        let mut enc_hidden = Vec::new();
        for i in 0..arch.enc_hidden.len() {
            enc_hidden.push(layer(&format!("enc_h{i}_w"), &format!("enc_h{i}_b"))?);
        }
        let mut dec_hidden = Vec::new();
        for i in 0..arch.dec_hidden.len() {
            dec_hidden.push(layer(&format!("dec_h{i}_w"), &format!("dec_h{i}_b"))?);
        }
        Ok(Self {
            enc_mu: layer("enc_mu_w", "enc_mu_b")?,
            enc_logvar: layer("enc_logvar_w", "enc_logvar_b")?,
            dec_out: layer("dec_out_w", "dec_out_b")?,
            enc_hidden,
            dec_hidden,
            arch,
        })
    }
}

/// Architecture of the MC-dropout classifier: D → hidden (dropout after
/// each) → K logits.
#[derive(Debug, Clone, PartialEq)]
pub struct BnnArchitecture {
    pub d_input: usize,
    pub n_classes: usize,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub mc_samples: usize,
}

impl Default for BnnArchitecture {
    fn default() -> Self {
        Self {
            d_input: 784,
            n_classes: 10,
            hidden: vec![256, 128],
            dropout_rate: 0.25,
            mc_samples: 100,
        }
    }
}

/// How [`UncertaintyModel::predict`] evaluates the network.
#[derive(Debug, Clone, Copy)]
pub enum PredictMode {
    /// Mean over `mc_samples` Bernoulli-masked passes, under the given seed.
    McMean { seed: u64 },
    /// One deterministic pass with activations scaled by the keep
    /// probability.
    ExpectedDropout,
}

/// Predictive distribution over class labels with its entropy.
#[derive(Debug, Clone)]
pub struct PredictiveOutput {
    pub probs: Vec<f64>,
    pub entropy: f64,
    pub label: usize,
}

impl PredictiveOutput {
    fn from_probs(probs: Vec<f64>) -> Self {
        let entropy = entropy_nats(&probs);
        let label = argmax(&probs);
        Self {
            probs,
            entropy,
            label,
        }
    }
}

/// MC-dropout classifier: predictive distribution p(y|x) and entropy H.
#[derive(Debug, Clone)]
pub struct UncertaintyModel {
    pub arch: BnnArchitecture,
    pub hidden: Vec<DenseLayer>,
    pub out: DenseLayer,
}

impl UncertaintyModel {
    pub fn init(arch: BnnArchitecture, seed: u64) -> Result<Self> {
        validate_arch(&arch)?;
        let mut rng = rng_from_seed(seed);
        let mut hidden = Vec::new();
        let mut prev = arch.d_input;
        for &h in &arch.hidden {
            hidden.push(DenseLayer::init(&mut rng, prev, h, (2.0 / prev as f64).sqrt()));
            prev = h;
        }
        let out = DenseLayer::init(&mut rng, prev, arch.n_classes, (1.0 / prev as f64).sqrt());
        Ok(Self { arch, hidden, out })
    }

    pub fn d_input(&self) -> usize {
        self.arch.d_input
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    /// Maximum possible predictive entropy, ln K.
    pub fn max_entropy(&self) -> f64 {
        (self.arch.n_classes as f64).ln()
    }

    /// Predictive distribution, entropy and argmax label for one input.
    pub fn predict(&self, x: &[f64], mode: PredictMode) -> Result<PredictiveOutput> {
        if x.len() != self.arch.d_input {
            return Err(ModelError::Dimension {
                what: "input pixels",
                expected: self.arch.d_input,
                actual: x.len(),
            });
        }
        match mode {
            PredictMode::ExpectedDropout => {
                let logits = self.logits_expected(x);
                Ok(PredictiveOutput::from_probs(softmax(&logits)))
            }
            PredictMode::McMean { seed } => {
                let s = self.arch.mc_samples;
                if s < 1 {
                    return Err(ModelError::Contract(
                        "mc_samples must be at least 1".into(),
                    ));
                }
                let mut rng = rng_from_seed(seed);
                let mut mean = vec![0.0; self.arch.n_classes];
                let mut scratch = Scratch::default();
                for _ in 0..s {
                    let logits = self.logits_masked(x, &mut rng, &mut scratch);
                    let p = softmax(&logits);
                    for (m, v) in mean.iter_mut().zip(&p) {
                        *m += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= s as f64;
                }
                Ok(PredictiveOutput::from_probs(mean))
            }
        }
    }

    /// Logits of the deterministic expected-dropout pass.
    pub fn logits_expected(&self, x: &[f64]) -> Vec<f64> {
        let keep = 1.0 - self.arch.dropout_rate;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.hidden {
            layer.forward_row(&cur, &mut next);
            for v in next.iter_mut() {
                *v = v.max(0.0) * keep;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        self.out.forward_row(&cur, &mut next);
        next
    }

    /// One stochastic pass: Bernoulli keep-masks on hidden activations,
    /// unscaled.
    fn logits_masked(&self, x: &[f64], rng: &mut impl Rng, scratch: &mut Scratch) -> Vec<f64> {
        let keep = 1.0 - self.arch.dropout_rate;
        let cur = &mut scratch.a;
        let next = &mut scratch.b;
        cur.clear();
        cur.extend_from_slice(x);
        for layer in &self.hidden {
            layer.forward_row(cur, next);
            for v in next.iter_mut() {
                let kept = rng.gen::<f64>() < keep;
                *v = if kept { v.max(0.0) } else { 0.0 };
            }
            std::mem::swap(cur, next);
        }
        let mut logits = Vec::new();
        self.out.forward_row(cur, &mut logits);
        logits
    }

    /// Expected-dropout logits recorded on a tape, differentiable w.r.t. the
    /// input node.
    pub fn logits_on_tape(&self, tape: &mut Tape, x: NodeId) -> crate::autodiff::Result<NodeId> {
        let keep = 1.0 - self.arch.dropout_rate;
        let mut cur = x;
        for layer in &self.hidden {
            cur = layer.on_tape(tape, cur)?;
            cur = tape.relu(cur)?;
            cur = tape.scale(cur, keep)?;
        }
        self.out.on_tape(tape, cur)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.set_meta("kind", "bnn");
        c.set_meta("d_input", self.arch.d_input);
        c.set_meta("n_classes", self.arch.n_classes);
        c.set_meta("hidden", join_sizes(&self.arch.hidden));
        c.set_meta("dropout_rate", self.arch.dropout_rate);
        c.set_meta("mc_samples", self.arch.mc_samples);
        for (i, l) in self.hidden.iter().enumerate() {
            c.push(&format!("clf_h{i}_w"), l.w.clone());
            c.push(&format!("clf_h{i}_b"), l.b.clone());
        }
        c.push("clf_out_w", self.out.w.clone());
        c.push("clf_out_b", self.out.b.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta_str("kind")? != "bnn" {
            return Err(ModelError::Contract(
                "checkpoint kind is not `bnn`".into(),
            ));
        }
        let arch = BnnArchitecture {
            d_input: c.meta_parse("d_input")?,
            n_classes: c.meta_parse("n_classes")?,
            hidden: split_sizes(c.meta_str("hidden")?),
            dropout_rate: c.meta_parse("dropout_rate")?,
            mc_samples: c.meta_parse("mc_samples")?,
        };
        validate_arch(&arch)?;
        let layer = |wn: &str, bn: &str| -> Result<DenseLayer> {
            Ok(DenseLayer {
                w: c.require(wn)?.clone(),
                b: c.require(bn)?.clone(),
            })
        };
        let mut hidden = Vec::new();
        for i in 0..arch.hidden.len() {
            hidden.push(layer(&format!("clf_h{i}_w"), &format!("clf_h{i}_b"))?);
        }
        Ok(Self {
            out: layer("clf_out_w", "clf_out_b")?,
            hidden,
            arch,
        })
    }
}

fn validate_arch(arch: &BnnArchitecture) -> Result<()> {
    if arch.mc_samples < 1 {
        return Err(ModelError::Contract(
            "mc_samples must be at least 1".into(),
        ));
    }
    if !(arch.dropout_rate > 0.0 && arch.dropout_rate < 1.0) {
        return Err(ModelError::Contract(format!(
            "dropout_rate must lie in (0,1), got {}",
            arch.dropout_rate
        )));
    }
    Ok(())
}

#[derive(Default)]
struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Shannon entropy in nats of a probability vector, validating that it is
/// one: entries nonnegative, summing to 1 within 1e-6. Uses 0·ln 0 := 0.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    if probs.iter().any(|&p| p < 0.0) {
        return Err(ModelError::Contract(
            "probabilities must be nonnegative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(ModelError::Contract(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(entropy_nats(probs))
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax of a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= s;
    }
    out
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn split_sizes(s: &str) -> Vec<usize> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').filter_map(|p| p.parse().ok()).collect()
    }
}
