//! Training loops for the VAE (ELBO with Bernoulli likelihood) and the
//! MC-dropout classifier (cross-entropy with dropout active).
//!
//! Both loops are deterministic given (seed, data order, config): weight
//! init, batch shuffling, reparameterization noise, and dropout masks all
//! draw from one seeded stream, and every batch gradient is a fixed-order
//! reduction.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::data::Dataset;
use crate::models::{
    BnnArchitecture, DenseLayer, GenerativeModel, ModelError, PredictMode, UncertaintyModel,
    VaeArchitecture,
};
use crate::util::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("training diverged (non-finite loss) in epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, TrainingError>;

/// Optimizer family for the training loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    AdamLike { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::AdamLike {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Shared hyperparameters for both training loops.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Weight on the KL term of the ELBO (VAE only).
    pub kl_weight: f64,
    /// Dropout rate applied after each classifier hidden layer (BNN only).
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: OptimizerKind::default(),
            kl_weight: 1.0,
            dropout_rate: 0.25,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainingError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(TrainingError::Config(
                "learning_rate must be positive".into(),
            ));
        }
        if self.kl_weight < 0.0 {
            return Err(TrainingError::Config("kl_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// One row of a training curve.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example loss this epoch (−ELBO for the VAE, cross-entropy
    /// for the classifier).
    pub loss: f64,
    /// Mean per-example KL term (VAE) or held-out accuracy (BNN).
    pub metric: f64,
}

#[derive(Debug)]
pub struct VaeOutcome {
    pub model: GenerativeModel,
    pub curve: Vec<EpochStats>,
    /// Mean per-pixel ℓ1 reconstruction error on the training data.
    pub train_recon_l1: f64,
    /// Same on held-out data.
    pub heldout_recon_l1: f64,
}

#[derive(Debug)]
pub struct BnnOutcome {
    pub model: UncertaintyModel,
    pub curve: Vec<EpochStats>,
    pub heldout_accuracy: f64,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, sizes: &[usize]) -> Self {
        Self {
            kind,
            lr,
            t: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), vel) in params.iter_mut().zip(grads).zip(self.m.iter_mut()) {
                    let data = p.data_mut();
                    for i in 0..data.len() {
                        vel[i] = momentum * vel[i] + g[i];
                        data[i] -= self.lr * vel[i];
                    }
                }
            }
            OptimizerKind::AdamLike { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    let data = p.data_mut();
                    for i in 0..data.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        data[i] -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Gathers a batch as a `[B × D]` row-major tensor.
fn batch_tensor(ds: &Dataset, idx: &[usize]) -> Tensor {
    let d = ds.d_input();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&ds.inputs[i]);
    }
    Tensor::matrix(idx.len(), d, data).expect("batch dims consistent")
}

fn one_hot_batch(ds: &Dataset, idx: &[usize], k: usize) -> Tensor {
    let mut data = vec![0.0; idx.len() * k];
    for (row, &i) in idx.iter().enumerate() {
        data[row * k + ds.labels[i]] = 1.0;
    }
    Tensor::matrix(idx.len(), k, data).expect("one-hot dims consistent")
}

fn dense_trainable(
    tape: &mut Tape,
    layer: &DenseLayer,
    x: NodeId,
    params: &mut Vec<NodeId>,
) -> crate::autodiff::Result<NodeId> {
    let w = tape.leaf(layer.w.clone().with_grad());
    let b = tape.leaf(layer.b.clone().with_grad());
    params.push(w);
    params.push(b);
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

fn diverged(epoch: usize) -> impl Fn(AutodiffError) -> TrainingError {
    move |e| TrainingError::Diverged {
        epoch,
        detail: e.to_string(),
    }
}

/// Trains the VAE by minimizing the negative ELBO: Bernoulli reconstruction
/// cross-entropy per pixel plus `kl_weight` times the analytic Gaussian KL
/// to the standard-normal prior, both averaged per example.
pub fn train_vae(
    train: &Dataset,
    heldout: &Dataset,
    arch: VaeArchitecture,
    cfg: &TrainConfig,
) -> Result<VaeOutcome> {
    cfg.validate()?;
    if train.d_input() != arch.d_input {
        return Err(TrainingError::Config(format!(
            "dataset has D={} but architecture expects {}",
            train.d_input(),
            arch.d_input
        )));
    }
    let mut model = GenerativeModel::init(arch.clone(), derive_seed(cfg.seed, 0));
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 1));
    let d_z = arch.d_z;

    let param_sizes = vae_param_sizes(&model);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &param_sizes);

    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let normal = rand_distr::StandardNormal;

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_kl = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks_exact(cfg.batch_size) {
            let b = chunk.len();
            let x_data = batch_tensor(train, chunk);
            let ones_minus_x: Vec<f64> = x_data.data().iter().map(|&v| 1.0 - v).collect();
            let eps: Vec<f64> = (0..b * d_z).map(|_| rng.sample(normal)).collect();

            let mut tape = Tape::new();
            let mut params = Vec::with_capacity(param_sizes.len());
            let run = (|| -> crate::autodiff::Result<(f64, f64)> {
                let x = tape.leaf(x_data.clone());
                let one_minus_x = tape.leaf(
                    Tensor::matrix(b, train.d_input(), ones_minus_x.clone()).expect("dims"),
                );
                let eps = tape.leaf(Tensor::matrix(b, d_z, eps.clone()).expect("dims"));

                let mut cur = x;
                for l in &model.enc_hidden {
                    cur = dense_trainable(&mut tape, l, cur, &mut params)?;
                    cur = tape.relu(cur)?;
                }
                let mu = dense_trainable(&mut tape, &model.enc_mu, cur, &mut params)?;
                let logvar = dense_trainable(&mut tape, &model.enc_logvar, cur, &mut params)?;

                // z = μ + exp(½ log σ²)·ε
                let half_lv = tape.scale(logvar, 0.5)?;
                let std = tape.exp(half_lv)?;
                let noise = tape.mul(std, eps)?;
                let mut cur = tape.add(mu, noise)?;

                for l in &model.dec_hidden {
                    cur = dense_trainable(&mut tape, l, cur, &mut params)?;
                    cur = tape.relu(cur)?;
                }
                let logits = dense_trainable(&mut tape, &model.dec_out, cur, &mut params)?;

                // Bernoulli NLL with logits d: x·softplus(−d) + (1−x)·softplus(d).
                let neg_logits = tape.scale(logits, -1.0)?;
                let sp_neg = tape.softplus(neg_logits)?;
                let sp_pos = tape.softplus(logits)?;
                let t1 = tape.mul(x, sp_neg)?;
                let t2 = tape.mul(one_minus_x, sp_pos)?;
                let nll = tape.add(t1, t2)?;
                let nll_sum = tape.sum(nll)?;
                let recon = tape.scale(nll_sum, 1.0 / b as f64)?;

                // KL(q‖N(0,I)) = −½ Σ (1 + logσ² − μ² − σ²)
                let mu2 = tape.square(mu)?;
                let var = tape.exp(logvar)?;
                let s_lv = tape.sum(logvar)?;
                let s_mu2 = tape.sum(mu2)?;
                let s_var = tape.sum(var)?;
                let a = tape.sub(s_lv, s_mu2)?;
                let a = tape.sub(a, s_var)?;
                let count = tape.leaf(Tensor::scalar((b * d_z) as f64));
                let a = tape.add(a, count)?;
                let kl = tape.scale(a, -0.5 / b as f64)?;

                let weighted_kl = tape.scale(kl, cfg.kl_weight)?;
                let loss = tape.add(recon, weighted_kl)?;
                let loss_v = tape.scalar(loss);
                let kl_v = tape.scalar(kl);
                tape.backward(loss)?;
                Ok((loss_v, kl_v))
            })();
            let (loss_v, kl_v) = run.map_err(diverged(epoch))?;
            if !loss_v.is_finite() {
                return Err(TrainingError::Diverged {
                    epoch,
                    detail: format!("batch loss {loss_v}"),
                });
            }
            let grads: Vec<Vec<f64>> = params
                .iter()
                .map(|&p| tape.take_grad(p).expect("trainable param has grad"))
                .collect();
            drop(tape);
            let mut refs = vae_params_mut(&mut model);
            opt.step(&mut refs, &grads);

            epoch_loss += loss_v;
            epoch_kl += kl_v;
            batches += 1;
        }
        if batches == 0 {
            return Err(TrainingError::Config(format!(
                "batch_size {} exceeds dataset size {}",
                cfg.batch_size,
                train.len()
            )));
        }
        curve.push(EpochStats {
            epoch,
            loss: epoch_loss / batches as f64,
            metric: epoch_kl / batches as f64,
        });
    }

    let train_recon_l1 = reconstruction_l1(&model, train)?;
    let heldout_recon_l1 = reconstruction_l1(&model, heldout)?;
    Ok(VaeOutcome {
        model,
        curve,
        train_recon_l1,
        heldout_recon_l1,
    })
}

/// Trains the classifier by minimizing cross-entropy with dropout masks
/// active (Bernoulli keep-masks, no rescaling, matching the MC estimator).
pub fn train_bnn(
    train: &Dataset,
    heldout: &Dataset,
    mut arch: BnnArchitecture,
    cfg: &TrainConfig,
) -> Result<BnnOutcome> {
    cfg.validate()?;
    arch.dropout_rate = cfg.dropout_rate;
    if train.d_input() != arch.d_input {
        return Err(TrainingError::Config(format!(
            "dataset has D={} but architecture expects {}",
            train.d_input(),
            arch.d_input
        )));
    }
    let k = arch.n_classes;
    let mut model = UncertaintyModel::init(arch.clone(), derive_seed(cfg.seed, 2))?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 3));
    let keep = 1.0 - arch.dropout_rate;

    let param_sizes = bnn_param_sizes(&model);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &param_sizes);

    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks_exact(cfg.batch_size) {
            let b = chunk.len();
            let x_data = batch_tensor(train, chunk);
            let onehot = one_hot_batch(train, chunk, k);
            let masks: Vec<Tensor> = arch
                .hidden
                .iter()
                .map(|&h| {
                    let m: Vec<f64> = (0..b * h)
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 } else { 0.0 })
                        .collect();
                    Tensor::matrix(b, h, m).expect("mask dims")
                })
                .collect();

            let mut tape = Tape::new();
            let mut params = Vec::with_capacity(param_sizes.len());
            let run = (|| -> crate::autodiff::Result<f64> {
                let x = tape.leaf(x_data.clone());
                let y = tape.leaf(onehot.clone());
                let mut cur = x;
                for (l, mask) in model.hidden.iter().zip(&masks) {
                    cur = dense_trainable(&mut tape, l, cur, &mut params)?;
                    cur = tape.relu(cur)?;
                    let m = tape.leaf(mask.clone());
                    cur = tape.mul(cur, m)?;
                }
                let logits = dense_trainable(&mut tape, &model.out, cur, &mut params)?;
                let lp = tape.log_softmax(logits)?;
                let picked = tape.mul(lp, y)?;
                let total = tape.sum(picked)?;
                let loss = tape.scale(total, -1.0 / b as f64)?;
                let loss_v = tape.scalar(loss);
                tape.backward(loss)?;
                Ok(loss_v)
            })();
            let loss_v = run.map_err(diverged(epoch))?;
            if !loss_v.is_finite() {
                return Err(TrainingError::Diverged {
                    epoch,
                    detail: format!("batch loss {loss_v}"),
                });
            }
            let grads: Vec<Vec<f64>> = params
                .iter()
                .map(|&p| tape.take_grad(p).expect("trainable param has grad"))
                .collect();
            drop(tape);
            let mut refs = bnn_params_mut(&mut model);
            opt.step(&mut refs, &grads);

            epoch_loss += loss_v;
            batches += 1;
        }
        if batches == 0 {
            return Err(TrainingError::Config(format!(
                "batch_size {} exceeds dataset size {}",
                cfg.batch_size,
                train.len()
            )));
        }
        let heldout_acc = accuracy(&model, heldout);
        curve.push(EpochStats {
            epoch,
            loss: epoch_loss / batches as f64,
            metric: heldout_acc,
        });
    }

    let heldout_accuracy = accuracy(&model, heldout);
    Ok(BnnOutcome {
        model,
        curve,
        heldout_accuracy,
    })
}

/// Fraction of examples whose expected-dropout argmax matches the label.
pub fn accuracy(model: &UncertaintyModel, ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let correct: usize = ds
        .inputs
        .par_iter()
        .zip(&ds.labels)
        .map(|(x, &y)| {
            let logits = model.logits_expected(x);
            usize::from(crate::models::argmax(&logits) == y)
        })
        .sum();
    correct as f64 / ds.len() as f64
}

/// Mean per-pixel ℓ1 error of decode(encode(x)) against x.
pub fn reconstruction_l1(model: &GenerativeModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let per_example: Vec<f64> = ds
        .inputs
        .par_iter()
        .map(|x| -> Result<f64> {
            let z = model.encode(x)?;
            let rec = model.decode(&z)?;
            Ok(crate::util::l1_distance(&rec, x) / x.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_example.iter().sum::<f64>() / ds.len() as f64)
}

/// Mean MC-dropout entropy over a dataset, split by prediction correctness.
/// Returns (mean over misclassified, mean over correctly classified).
pub fn entropy_by_correctness(
    model: &UncertaintyModel,
    ds: &Dataset,
    seed: u64,
) -> Result<(f64, f64)> {
    let outs: Vec<(bool, f64)> = ds
        .inputs
        .par_iter()
        .zip(&ds.labels)
        .enumerate()
        .map(|(i, (x, &y))| -> Result<(bool, f64)> {
            let out = model.predict(
                x,
                PredictMode::McMean {
                    seed: derive_seed(seed, i as u64),
                },
            )?;
            Ok((out.label == y, out.entropy))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut wrong_sum, mut wrong_n, mut right_sum, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    for (correct, h) in outs {
        if correct {
            right_sum += h;
            right_n += 1;
        } else {
            wrong_sum += h;
            wrong_n += 1;
        }
    }
    Ok((
        if wrong_n > 0 {
            wrong_sum / wrong_n as f64
        } else {
            0.0
        },
        if right_n > 0 {
            right_sum / right_n as f64
        } else {
            0.0
        },
    ))
}

fn vae_param_sizes(m: &GenerativeModel) -> Vec<usize> {
    let mut sizes = Vec::new();
    for l in &m.enc_hidden {
        sizes.push(l.w.len());
        sizes.push(l.b.len());
    }
    sizes.push(m.enc_mu.w.len());
    sizes.push(m.enc_mu.b.len());
    sizes.push(m.enc_logvar.w.len());
    sizes.push(m.enc_logvar.b.len());
    for l in &m.dec_hidden {
        sizes.push(l.w.len());
        sizes.push(l.b.len());
    }
    sizes.push(m.dec_out.w.len());
    sizes.push(m.dec_out.b.len());
    sizes
}

fn vae_params_mut(m: &mut GenerativeModel) -> Vec<&mut Tensor> {
    let mut refs: Vec<&mut Tensor> = Vec::new();
    for l in &mut m.enc_hidden {
        refs.push(&mut l.w);
        refs.push(&mut l.b);
    }
    refs.push(&mut m.enc_mu.w);
    refs.push(&mut m.enc_mu.b);
    refs.push(&mut m.enc_logvar.w);
    refs.push(&mut m.enc_logvar.b);
    for l in &mut m.dec_hidden {
        refs.push(&mut l.w);
        refs.push(&mut l.b);
    }
    refs.push(&mut m.dec_out.w);
    refs.push(&mut m.dec_out.b);
    refs
}

fn bnn_param_sizes(m: &UncertaintyModel) -> Vec<usize> {
    let mut sizes = Vec::new();
    for l in &m.hidden {
        sizes.push(l.w.len());
        sizes.push(l.b.len());
    }
    sizes.push(m.out.w.len());
    sizes.push(m.out.b.len());
    sizes
}

fn bnn_params_mut(m: &mut UncertaintyModel) -> Vec<&mut Tensor> {
    let mut refs: Vec<&mut Tensor> = Vec::new();
    for l in &mut m.hidden {
        refs.push(&mut l.w);
        refs.push(&mut l.b);
    }
    refs.push(&mut m.out.w);
    refs.push(&mut m.out.b);
    refs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, Split};

    fn small_arch_vae() -> VaeArchitecture {
        VaeArchitecture {
            d_input: 784,
            d_z: 4,
            enc_hidden: vec![48],
            dec_hidden: vec![48],
        }
    }

    fn small_arch_bnn() -> BnnArchitecture {
        BnnArchitecture {
            d_input: 784,
            n_classes: 10,
            hidden: vec![48],
            dropout_rate: 0.25,
            mc_samples: 32,
        }
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 64,
            seed: 0,
            ..Default::default()
        }
    }

    #[test]
    fn elbo_improves_over_first_three_epochs() {
        let train = synthetic::generate(768, 1, Split::Train);
        let heldout = synthetic::generate(128, 2, Split::Test);
        let out = train_vae(&train, &heldout, small_arch_vae(), &small_cfg(3)).unwrap();
        assert!(out.curve[1].loss < out.curve[0].loss);
        assert!(out.curve[2].loss < out.curve[1].loss);
        // Analytic Gaussian KL stays nonnegative.
        assert!(out.curve.iter().all(|e| e.metric >= -1e-9));
    }

    #[test]
    fn zero_kl_weight_reconstructs_better_than_unit_weight() {
        let train = synthetic::generate(768, 3, Split::Train);
        let heldout = synthetic::generate(128, 4, Split::Test);
        let mut cfg = small_cfg(3);
        cfg.kl_weight = 0.0;
        let ae = train_vae(&train, &heldout, small_arch_vae(), &cfg).unwrap();
        cfg.kl_weight = 1.0;
        let vae = train_vae(&train, &heldout, small_arch_vae(), &cfg).unwrap();
        assert!(
            ae.train_recon_l1 < vae.train_recon_l1,
            "{} vs {}",
            ae.train_recon_l1,
            vae.train_recon_l1
        );
    }

    #[test]
    fn identical_seeds_give_identical_weights() {
        let train = synthetic::generate(256, 5, Split::Train);
        let heldout = synthetic::generate(64, 6, Split::Test);
        let a = train_vae(&train, &heldout, small_arch_vae(), &small_cfg(2)).unwrap();
        let b = train_vae(&train, &heldout, small_arch_vae(), &small_cfg(2)).unwrap();
        assert_eq!(
            a.model.to_container().to_bytes(),
            b.model.to_container().to_bytes()
        );

        let a = train_bnn(&train, &heldout, small_arch_bnn(), &small_cfg(2)).unwrap();
        let b = train_bnn(&train, &heldout, small_arch_bnn(), &small_cfg(2)).unwrap();
        assert_eq!(
            a.model.to_container().to_bytes(),
            b.model.to_container().to_bytes()
        );
        assert_eq!(a.heldout_accuracy, b.heldout_accuracy);
    }

    #[test]
    fn classifier_learns_the_synthetic_digits() {
        let train = synthetic::generate(2048, 7, Split::Train);
        let heldout = synthetic::generate(256, 8, Split::Test);
        let arch = BnnArchitecture {
            hidden: vec![64],
            ..small_arch_bnn()
        };
        let out = train_bnn(&train, &heldout, arch, &small_cfg(8)).unwrap();
        assert!(
            out.heldout_accuracy > 0.75,
            "accuracy {}",
            out.heldout_accuracy
        );
    }

    #[test]
    fn shuffled_labels_train_to_chance_accuracy() {
        let mut train = synthetic::generate(768, 9, Split::Train);
        // Destroy the input-label relation deterministically.
        let mut rng = rng_from_seed(99);
        train.labels.shuffle(&mut rng);
        let heldout = synthetic::generate(256, 10, Split::Test);
        let out = train_bnn(&train, &heldout, small_arch_bnn(), &small_cfg(3)).unwrap();
        assert!(
            (0.02..0.3).contains(&out.heldout_accuracy),
            "accuracy {}",
            out.heldout_accuracy
        );
    }

    #[test]
    fn divergent_learning_rate_reports_the_epoch() {
        let train = synthetic::generate(256, 11, Split::Train);
        let heldout = synthetic::generate(64, 12, Split::Test);
        let mut cfg = small_cfg(2);
        cfg.learning_rate = 1e18;
        cfg.optimizer = OptimizerKind::SgdMomentum { momentum: 0.9 };
        let err = train_vae(&train, &heldout, small_arch_vae(), &cfg).unwrap_err();
        assert!(matches!(err, TrainingError::Diverged { .. }), "{err}");
    }

    #[test]
    fn misclassified_points_carry_more_entropy() {
        let train = synthetic::generate(1536, 13, Split::Train);
        let heldout = synthetic::generate(384, 14, Split::Test);
        let out = train_bnn(&train, &heldout, small_arch_bnn(), &small_cfg(4)).unwrap();
        let (wrong, right) = entropy_by_correctness(&out.model, &heldout, 55).unwrap();
        assert!(wrong > right, "misclassified {wrong} vs correct {right}");
    }
}
