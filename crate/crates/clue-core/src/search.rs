//! The core explanation search: assemble the latent loss
//! L(z) = H(y | μ_θ(x|z)) + λx·‖μ_θ(x|z) − x0‖₁ + λy·d_y, run (projected)
//! gradient descent inside the δ-ball around z0 = μ_φ(z|x0), and accept
//! results whose final MC entropy clears the threshold.
//!
//! During descent the uncertainty term uses the deterministic
//! expected-dropout pass, so the loss is smooth and reproducible; each
//! finished candidate is then re-judged with the full MC estimator.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::container::Container;
use crate::models::{GenerativeModel, ModelError, PredictMode, PredictiveOutput, UncertaintyModel};
use crate::schemes::{self, SchemeContext, SchemeError, SchemeTag};
use crate::util::{derive_seed2, l1_distance, l2_distance, l2_norm};

/// Feasibility slack on ρ(z, z0) ≤ δ checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// A result is on-shell when ρ ≥ δ·(1 − SHELL_TOL).
pub const SHELL_TOL: f64 = 1e-6;

const STREAM_INIT: u64 = 1;
const STREAM_MC: u64 = 2;
const STREAM_ORIGIN: u64 = 3;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("infeasible start point: rho {rho} exceeds delta {delta}")]
    InfeasibleStart { rho: f64, delta: f64 },
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SearchError>;

/// Immutable model pair shared by every descent.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub vae: &'a GenerativeModel,
    pub bnn: &'a UncertaintyModel,
}

/// Settings of one explanation search.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Latent search radius δ.
    pub delta: f64,
    /// Weight λx on the ℓ1 input distance.
    pub lambda_x: f64,
    /// Weight λy on the cross-entropy prediction distance.
    pub lambda_y: f64,
    /// Number of explanations requested.
    pub n: usize,
    pub scheme: SchemeTag,
    pub step_size: f64,
    pub max_steps: usize,
    /// Stop when |L_t − L_{t−1}| drops below this.
    pub convergence_tol: f64,
    /// Acceptance threshold on the final MC entropy, in nats.
    pub h_threshold: f64,
    /// Project onto the δ-ball after every update.
    pub constrained: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            delta: 2.0,
            lambda_x: 0.0,
            lambda_y: 0.0,
            n: 100,
            scheme: SchemeTag::S1,
            step_size: 0.1,
            max_steps: 500,
            convergence_tol: 1e-4,
            h_threshold: 0.5,
            constrained: true,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 0.0 {
            return Err(SearchError::Config("delta must be >= 0".into()));
        }
        if self.n < 1 {
            return Err(SearchError::Config("n must be >= 1".into()));
        }
        if self.max_steps < 1 {
            return Err(SearchError::Config("max_steps must be >= 1".into()));
        }
        if self.step_size <= 0.0 {
            return Err(SearchError::Config("step_size must be > 0".into()));
        }
        if self.lambda_x < 0.0 || self.lambda_y < 0.0 {
            return Err(SearchError::Config("lambda weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Loss value split into its components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Expected-dropout predictive entropy H at the decoded point.
    pub entropy: f64,
    /// ℓ1 distance of the decoded point from x0.
    pub input_distance: f64,
    /// Cross-entropy from the origin's predictive distribution to the
    /// decoded point's.
    pub prediction_distance: f64,
}

/// One explanation: final latent point, decoded input, MC predictive
/// output, distances, and run provenance.
#[derive(Debug, Clone)]
pub struct ClueResult {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// Full MC predictive output at x (the estimator results are judged by).
    pub predictive: PredictiveOutput,
    /// d_x(x, x0), ℓ1.
    pub input_distance: f64,
    /// d_y at the final point (expected-dropout pass, as inside the loss).
    pub prediction_distance: f64,
    /// ρ(z, z0), ℓ2.
    pub latent_distance: f64,
    /// Final descent loss L.
    pub loss: f64,
    /// MC entropy + λx·d_x; the scalar used to rank explanations.
    pub cost: f64,
    pub accepted: bool,
    pub converged: bool,
    /// Gradient updates applied.
    pub steps: usize,
    pub init_index: usize,
    pub on_shell: bool,
}

/// A descent that failed; recorded in place of its result slot.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub init_index: usize,
    pub error: String,
}

/// The explained input with its encoding and MC predictive output.
#[derive(Debug, Clone)]
pub struct Origin {
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
    pub predictive: PredictiveOutput,
}

/// All explanations found for one uncertain input.
#[derive(Debug, Clone)]
pub struct ClueSet {
    pub origin: Origin,
    pub config: SearchConfig,
    /// Ordered by init_index. Rejected results are retained with
    /// `accepted = false`.
    pub results: Vec<ClueResult>,
    pub failures: Vec<RunFailure>,
}

impl ClueSet {
    /// Number of accepted explanations (m ≤ n).
    pub fn accepted_count(&self) -> usize {
        self.results.iter().filter(|r| r.accepted).count()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &ClueResult> {
        self.results.iter().filter(|r| r.accepted)
    }
}

/// Projects z onto the closed δ-ball around z0: points inside are returned
/// unchanged (bitwise), points outside land on the shell at ρ = δ.
///
/// The scaled point is nudged down by single ulps until its recomputed
/// radius is ≤ δ, which makes a second application return its input
/// unchanged: the operator is exactly idempotent.
pub fn project(z: &[f64], z0: &[f64], delta: f64) -> Vec<f64> {
    debug_assert_eq!(z.len(), z0.len());
    debug_assert!(delta >= 0.0);
    let offset: Vec<f64> = z.iter().zip(z0).map(|(a, b)| a - b).collect();
    let rho = l2_norm(&offset);
    if rho <= delta {
        return z.to_vec();
    }
    if delta == 0.0 || rho == 0.0 {
        return z0.to_vec();
    }
    let mut scale = delta / rho;
    loop {
        let w: Vec<f64> = z0
            .iter()
            .zip(&offset)
            .map(|(b, d)| b + scale * d)
            .collect();
        if l2_distance(&w, z0) <= delta {
            return w;
        }
        scale *= 1.0 - 4.0 * f64::EPSILON;
    }
}

/// ρ(z, z0) ≤ δ up to the feasibility slack.
pub fn is_feasible(z: &[f64], z0: &[f64], delta: f64) -> bool {
    l2_distance(z, z0) <= delta + FEASIBILITY_TOL
}

struct OriginContext {
    x0_row: Tensor,
    /// Expected-dropout predictive distribution at x0 (d_y target).
    p0_row: Tensor,
    z0: Vec<f64>,
}

impl OriginContext {
    fn build(x0: &[f64], models: Models) -> Result<Self> {
        let z0 = models.vae.encode(x0)?;
        let p0 = models.bnn.predict(x0, PredictMode::ExpectedDropout)?;
        Ok(Self {
            x0_row: Tensor::row(x0),
            p0_row: Tensor::row(&p0.probs),
            z0,
        })
    }
}

/// Builds L(z) on a tape. Returns the loss node and the component nodes.
fn loss_on_tape(
    tape: &mut Tape,
    z: NodeId,
    origin: &OriginContext,
    cfg: &SearchConfig,
    models: Models,
) -> crate::autodiff::Result<(NodeId, NodeId, NodeId, NodeId)> {
    let x = models.vae.decode_on_tape(tape, z)?;
    let logits = models.bnn.logits_on_tape(tape, x)?;
    let probs = tape.softmax_logsumexp(logits)?;
    let logp = tape.log_softmax(logits)?;
    let plogp = tape.mul(probs, logp)?;
    let neg_h = tape.sum(plogp)?;
    let entropy = tape.scale(neg_h, -1.0)?;

    let x0 = tape.leaf(origin.x0_row.clone());
    let diff = tape.sub(x, x0)?;
    let absdiff = tape.abs(diff)?;
    let d_x = tape.sum(absdiff)?;

    let p0 = tape.leaf(origin.p0_row.clone());
    let weighted_logp = tape.mul(logp, p0)?;
    let neg_dy = tape.sum(weighted_logp)?;
    let d_y = tape.scale(neg_dy, -1.0)?;

    let mut loss = entropy;
    if cfg.lambda_x > 0.0 {
        let term = tape.scale(d_x, cfg.lambda_x)?;
        loss = tape.add(loss, term)?;
    }
    if cfg.lambda_y > 0.0 {
        let term = tape.scale(d_y, cfg.lambda_y)?;
        loss = tape.add(loss, term)?;
    }
    Ok((loss, entropy, d_x, d_y))
}

fn eval_loss(
    z: &[f64],
    origin: &OriginContext,
    cfg: &SearchConfig,
    models: Models,
    with_grad: bool,
) -> crate::autodiff::Result<(f64, LossParts, Option<Vec<f64>>)> {
    let mut tape = Tape::new();
    let mut leaf = Tensor::row(z);
    leaf.requires_grad = with_grad;
    let zn = tape.leaf(leaf);
    let (loss, entropy, d_x, d_y) = loss_on_tape(&mut tape, zn, origin, cfg, models)?;
    let parts = LossParts {
        entropy: tape.scalar(entropy),
        input_distance: tape.scalar(d_x),
        prediction_distance: tape.scalar(d_y),
    };
    let l = tape.scalar(loss);
    let grad = if with_grad {
        tape.backward(loss)?;
        Some(tape.take_grad(zn).expect("z requires grad"))
    } else {
        None
    };
    Ok((l, parts, grad))
}

/// L(z) with its components, for one latent point. Diagnostic entry point;
/// the descent loop shares the same tape construction.
pub fn loss(
    z: &[f64],
    x0: &[f64],
    cfg: &SearchConfig,
    models: Models,
) -> Result<(f64, LossParts)> {
    let origin = OriginContext::build(x0, models)?;
    let (l, parts, _) = eval_loss(z, &origin, cfg, models, false).map_err(|e| {
        SearchError::NonFinite {
            step: 0,
            detail: e.to_string(),
        }
    })?;
    Ok((l, parts))
}

/// Per-step observer: (updates applied so far, current z, last loss).
pub type StepObserver<'a> = &'a mut dyn FnMut(usize, &[f64], f64);

/// Gradient descent from one start point. See [`search`] for the full
/// multi-start procedure.
pub fn descend(
    z_init: &[f64],
    x0: &[f64],
    cfg: &SearchConfig,
    models: Models,
) -> Result<ClueResult> {
    let origin = OriginContext::build(x0, models)?;
    descend_inner(z_init, &origin, cfg, models, 0, None)
}

/// Like [`descend`] but calling an observer after every applied update.
pub fn descend_observed(
    z_init: &[f64],
    x0: &[f64],
    cfg: &SearchConfig,
    models: Models,
    observer: StepObserver,
) -> Result<ClueResult> {
    let origin = OriginContext::build(x0, models)?;
    descend_inner(z_init, &origin, cfg, models, 0, Some(observer))
}

fn descend_inner(
    z_init: &[f64],
    origin: &OriginContext,
    cfg: &SearchConfig,
    models: Models,
    init_index: usize,
    mut observer: Option<StepObserver>,
) -> Result<ClueResult> {
    let z0 = &origin.z0;
    if cfg.constrained && !is_feasible(z_init, z0, cfg.delta) {
        return Err(SearchError::InfeasibleStart {
            rho: l2_distance(z_init, z0),
            delta: cfg.delta,
        });
    }

    let mut z = z_init.to_vec();
    let mut prev_loss: Option<f64> = None;
    let mut converged = false;
    let mut updates = 0usize;
    let mut finished: Option<(f64, LossParts)> = None;

    for step in 1..=cfg.max_steps {
        let (l, parts, grad) =
            eval_loss(&z, origin, cfg, models, true).map_err(|e| SearchError::NonFinite {
                step,
                detail: e.to_string(),
            })?;
        if let Some(p) = prev_loss {
            if (p - l).abs() < cfg.convergence_tol {
                converged = true;
                finished = Some((l, parts));
                break;
            }
        }
        let grad = grad.expect("gradient requested");
        for (zi, gi) in z.iter_mut().zip(&grad) {
            *zi -= cfg.step_size * gi;
        }
        if cfg.constrained {
            z = project(&z, z0, cfg.delta);
            debug_assert!(is_feasible(&z, z0, cfg.delta));
        }
        updates = step;
        prev_loss = Some(l);
        if let Some(obs) = observer.as_deref_mut() {
            obs(updates, &z, l);
        }
    }

    let (final_loss, final_parts) = match finished {
        Some(v) => v,
        // Max steps exhausted: one extra evaluation at the final point.
        None => {
            let (l, parts, _) = eval_loss(&z, origin, cfg, models, false).map_err(|e| {
                SearchError::NonFinite {
                    step: cfg.max_steps,
                    detail: e.to_string(),
                }
            })?;
            (l, parts)
        }
    };

    let x = models.vae.decode(&z)?;
    let predictive = models.bnn.predict(
        &x,
        PredictMode::McMean {
            seed: derive_seed2(cfg.seed, STREAM_MC, init_index as u64),
        },
    )?;
    let input_distance = l1_distance(&x, origin.x0_row.data());
    let latent_distance = l2_distance(&z, z0);
    let accepted = predictive.entropy < cfg.h_threshold;
    let cost = predictive.entropy + cfg.lambda_x * input_distance;
    let on_shell = latent_distance >= cfg.delta * (1.0 - SHELL_TOL);

    Ok(ClueResult {
        z,
        x,
        input_distance,
        prediction_distance: final_parts.prediction_distance,
        latent_distance,
        loss: final_loss,
        cost,
        accepted,
        converged,
        steps: updates,
        init_index,
        on_shell,
        predictive,
    })
}

/// Runs the full multi-start search for one uncertain input: encode x0,
/// generate n start points with the configured scheme, descend from each,
/// and return everything (rejected results retained and flagged).
///
/// `anchors` supplies the per-class anchor latents required by scheme S2.
pub fn search(
    x0: &[f64],
    cfg: &SearchConfig,
    models: Models,
    anchors: Option<&BTreeMap<usize, Vec<f64>>>,
) -> Result<ClueSet> {
    cfg.validate()?;
    let origin_ctx = OriginContext::build(x0, models)?;
    let origin_predictive = models.bnn.predict(
        x0,
        PredictMode::McMean {
            seed: derive_seed2(cfg.seed, STREAM_ORIGIN, 0),
        },
    )?;

    let mut scheme_ctx = SchemeContext::new(
        &origin_ctx.z0,
        cfg.delta,
        cfg.n,
        derive_seed2(cfg.seed, STREAM_INIT, 0),
        models.bnn.n_classes(),
    );
    scheme_ctx.anchors = anchors;
    scheme_ctx.models = Some((models.vae, models.bnn));
    let inits = schemes::generate(cfg.scheme, &scheme_ctx)?;

    let outcomes: Vec<std::result::Result<ClueResult, RunFailure>> = inits
        .par_iter()
        .enumerate()
        .map(|(i, z_init)| {
            descend_inner(z_init, &origin_ctx, cfg, models, i, None).map_err(|e| RunFailure {
                init_index: i,
                error: e.to_string(),
            })
        })
        .collect();

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }

    Ok(ClueSet {
        origin: Origin {
            x0: x0.to_vec(),
            z0: origin_ctx.z0,
            predictive: origin_predictive,
        },
        config: cfg.clone(),
        results,
        failures,
    })
}

/// The unconstrained single-start variant: plain gradient descent from z0.
pub fn original_clue(x0: &[f64], cfg: &SearchConfig, models: Models) -> Result<ClueResult> {
    let mut cfg = cfg.clone();
    cfg.constrained = false;
    cfg.n = 1;
    let origin = OriginContext::build(x0, models)?;
    let z0 = origin.z0.clone();
    descend_inner(&z0, &origin, &cfg, models, 0, None)
}

/// Column order of the explanation-set CSV.
pub const CSV_HEADER: [&str; 13] = [
    "init_index",
    "scheme",
    "delta",
    "entropy",
    "d_x",
    "d_y",
    "rho",
    "loss",
    "cost",
    "label",
    "accepted",
    "converged",
    "on_shell",
];

/// Writes one CSV row per result, in init_index order.
pub fn write_clue_set_csv(set: &ClueSet, w: &mut impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CSV_HEADER)?;
    for r in &set.results {
        csv.write_record(&[
            r.init_index.to_string(),
            set.config.scheme.to_string(),
            set.config.delta.to_string(),
            r.predictive.entropy.to_string(),
            r.input_distance.to_string(),
            r.prediction_distance.to_string(),
            r.latent_distance.to_string(),
            r.loss.to_string(),
            r.cost.to_string(),
            r.predictive.label.to_string(),
            r.accepted.to_string(),
            r.converged.to_string(),
            r.on_shell.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// One parsed row of an explanation-set CSV.
#[derive(Debug, Clone)]
pub struct ClueCsvRow {
    pub init_index: usize,
    pub scheme: String,
    pub delta: f64,
    pub entropy: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub rho: f64,
    pub loss: f64,
    pub cost: f64,
    pub label: usize,
    pub accepted: bool,
    pub converged: bool,
    pub on_shell: bool,
}

pub fn read_clue_set_csv(path: impl AsRef<Path>) -> Result<Vec<ClueCsvRow>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        let field = |i: usize| -> &str { r.get(i).unwrap_or_default() };
        let parse_f = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| SearchError::Config(format!("bad float `{}`", field(i))))
        };
        rows.push(ClueCsvRow {
            init_index: field(0)
                .parse()
                .map_err(|_| SearchError::Config("bad init_index".into()))?,
            scheme: field(1).to_string(),
            delta: parse_f(2)?,
            entropy: parse_f(3)?,
            d_x: parse_f(4)?,
            d_y: parse_f(5)?,
            rho: parse_f(6)?,
            loss: parse_f(7)?,
            cost: parse_f(8)?,
            label: field(9)
                .parse()
                .map_err(|_| SearchError::Config("bad label".into()))?,
            accepted: field(10) == "true",
            converged: field(11) == "true",
            on_shell: field(12) == "true",
        });
    }
    Ok(rows)
}

/// Sidecar container holding the origin and per-result latent/input
/// vectors.
pub fn clue_set_vectors(set: &ClueSet) -> Container {
    let mut c = Container::new();
    c.set_meta("kind", "clue-set");
    c.set_meta("delta", set.config.delta);
    c.set_meta("scheme", set.config.scheme);
    c.set_meta("n", set.config.n);
    c.set_meta("seed", set.config.seed);
    c.set_meta("lambda_x", set.config.lambda_x);
    c.set_meta("lambda_y", set.config.lambda_y);
    c.set_meta("h_threshold", set.config.h_threshold);
    c.set_meta("constrained", set.config.constrained);
    c.push("x0", Tensor::vector(&set.origin.x0));
    c.push("z0", Tensor::vector(&set.origin.z0));
    for r in &set.results {
        c.push(&format!("z_{:03}", r.init_index), Tensor::vector(&r.z));
        c.push(&format!("x_{:03}", r.init_index), Tensor::vector(&r.x));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, GradCheckConfig};
    use crate::models::{BnnArchitecture, VaeArchitecture};

    fn tiny_models() -> (GenerativeModel, UncertaintyModel) {
        let vae = GenerativeModel::init(
            VaeArchitecture {
                d_input: 20,
                d_z: 4,
                enc_hidden: vec![16],
                dec_hidden: vec![16],
            },
            31,
        );
        let bnn = UncertaintyModel::init(
            BnnArchitecture {
                d_input: 20,
                n_classes: 6,
                hidden: vec![16],
                dropout_rate: 0.25,
                mc_samples: 16,
            },
            32,
        )
        .unwrap();
        (vae, bnn)
    }

    fn sample_x0() -> Vec<f64> {
        (0..20).map(|i| 0.5 + 0.4 * ((i as f64) * 0.7).sin()).collect()
    }

    #[test]
    fn project_known_points() {
        let p = project(&[3.0, 4.0], &[0.0, 0.0], 2.5);
        assert!((p[0] - 1.5).abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12);

        let p = project(&[4.0, 5.0], &[1.0, 1.0], 2.5);
        assert!((p[0] - 2.5).abs() < 1e-12 && (p[1] - 3.0).abs() < 1e-12);

        // Inside the ball: unchanged bitwise.
        let z = vec![0.3, -0.4];
        let p = project(&z, &[0.0, 0.0], 2.5);
        assert_eq!(p, z);

        // z == z0 with δ = 0.
        let p = project(&[1.0, 1.0], &[1.0, 1.0], 0.0);
        assert_eq!(p, vec![1.0, 1.0]);
    }

    #[test]
    fn projected_points_land_on_the_shell() {
        let z0 = vec![0.5, -1.0, 2.0, 0.1];
        let z = vec![5.0, 3.0, -2.0, 0.7];
        let delta = 1.25;
        let p = project(&z, &z0, delta);
        let rho = l2_distance(&p, &z0);
        assert!((rho - delta).abs() < 1e-12 * delta.max(1.0), "rho {rho}");
    }

    #[test]
    fn projection_is_exactly_idempotent() {
        let z0 = vec![0.2; 8];
        for seed in 0..50u64 {
            let mut rng = crate::util::rng_from_seed(seed);
            use rand::Rng;
            let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let delta = rng.gen_range(0.0..3.0);
            let once = project(&z, &z0, delta);
            let twice = project(&once, &z0, delta);
            assert_eq!(once, twice, "seed {seed}");
        }
    }

    #[test]
    fn loss_reduces_to_entropy_when_weights_are_zero() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig::default();
        let (l, parts) = loss(&[0.1, 0.2, -0.3, 0.4], &x0, &cfg, models).unwrap();
        assert_eq!(l, parts.entropy);
        assert!(parts.input_distance > 0.0);
    }

    #[test]
    fn loss_at_z0_reports_reconstruction_residual() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let z0 = vae.encode(&x0).unwrap();
        let cfg = SearchConfig::default();
        let (_, parts) = loss(&z0, &x0, &cfg, models).unwrap();
        let recon = vae.decode(&z0).unwrap();
        let expect = l1_distance(&recon, &x0);
        assert!((parts.input_distance - expect).abs() < 1e-12);
        assert!(expect > 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let origin = OriginContext::build(&x0, models).unwrap();
        let cfg = SearchConfig {
            lambda_x: 0.03,
            lambda_y: 0.5,
            ..Default::default()
        };
        let report = gradient_check(
            |tape, z| {
                let (l, _, _, _) = loss_on_tape(tape, z, &origin, &cfg, models)?;
                Ok(l)
            },
            &Tensor::row(&[0.3, -0.6, 0.9, 0.05]),
            &GradCheckConfig {
                tolerance: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed, "max rel {}", report.max_rel_error);
    }

    #[test]
    fn constrained_descent_stays_feasible_at_every_step() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let z0 = vae.encode(&x0).unwrap();
        let cfg = SearchConfig {
            delta: 0.5,
            max_steps: 60,
            ..Default::default()
        };
        let mut max_rho = 0.0f64;
        let mut steps_seen = 0usize;
        let mut observer = |_step: usize, z: &[f64], _l: f64| {
            max_rho = max_rho.max(l2_distance(z, &z0));
            steps_seen += 1;
        };
        let init = project(&[1.0, 1.0, 1.0, 1.0], &z0, 0.5);
        let r = descend_observed(&init, &x0, &cfg, models, &mut observer).unwrap();
        assert!(steps_seen > 0);
        assert!(max_rho <= cfg.delta + FEASIBILITY_TOL, "max rho {max_rho}");
        assert!(r.latent_distance <= cfg.delta + FEASIBILITY_TOL);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig {
            delta: 0.1,
            ..Default::default()
        };
        let err = descend(&[50.0, 0.0, 0.0, 0.0], &x0, &cfg, models).unwrap_err();
        assert!(matches!(err, SearchError::InfeasibleStart { .. }));
    }

    #[test]
    fn huge_ball_reproduces_the_unconstrained_trajectory_exactly() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let z0 = vae.encode(&x0).unwrap();
        let base = SearchConfig {
            max_steps: 80,
            ..Default::default()
        };

        let constrained = descend(
            &z0,
            &x0,
            &SearchConfig {
                delta: 1e6,
                constrained: true,
                ..base.clone()
            },
            models,
        )
        .unwrap();
        let unconstrained = descend(
            &z0,
            &x0,
            &SearchConfig {
                constrained: false,
                ..base
            },
            models,
        )
        .unwrap();
        assert_eq!(constrained.z, unconstrained.z);
        assert_eq!(constrained.loss.to_bits(), unconstrained.loss.to_bits());
        assert_eq!(constrained.steps, unconstrained.steps);
    }

    #[test]
    fn non_finite_loss_carries_the_step_index() {
        let (vae, mut bnn) = tiny_models();
        // Absurd output weights overflow the matmul during the first step.
        for v in bnn.out.w.data_mut().iter_mut() {
            *v = 1e308;
        }
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig::default();
        let err = descend(&[0.0, 0.0, 0.0, 0.0], &x0, &cfg, models).unwrap_err();
        match err {
            SearchError::NonFinite { step, .. } => assert_eq!(step, 1),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn search_returns_ordered_deterministic_results() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig {
            n: 12,
            delta: 1.0,
            max_steps: 40,
            ..Default::default()
        };
        let a = search(&x0, &cfg, models, None).unwrap();
        assert_eq!(a.results.len(), 12);
        assert!(a.failures.is_empty());
        assert!(a.accepted_count() <= 12);
        for (i, r) in a.results.iter().enumerate() {
            assert_eq!(r.init_index, i);
            assert!(r.latent_distance <= cfg.delta + FEASIBILITY_TOL);
            // Acceptance is re-checkable from stored fields.
            assert_eq!(r.accepted, r.predictive.entropy < cfg.h_threshold);
            assert!((r.cost - (r.predictive.entropy + cfg.lambda_x * r.input_distance)).abs() < 1e-12);
        }
        let b = search(&x0, &cfg, models, None).unwrap();
        for (ra, rb) in a.results.iter().zip(&b.results) {
            assert_eq!(ra.z, rb.z);
            assert_eq!(ra.loss.to_bits(), rb.loss.to_bits());
            assert_eq!(ra.predictive.entropy.to_bits(), rb.predictive.entropy.to_bits());
        }
    }

    #[test]
    fn degenerate_ball_keeps_the_single_init_at_center() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let z0 = vae.encode(&x0).unwrap();
        let cfg = SearchConfig {
            n: 1,
            delta: 0.0,
            max_steps: 30,
            ..Default::default()
        };
        let set = search(&x0, &cfg, models, None).unwrap();
        assert_eq!(set.results.len(), 1);
        assert_eq!(set.results[0].z, z0);
        assert_eq!(set.origin.z0, z0);
    }

    #[test]
    fn original_clue_equals_unconstrained_single_start_search() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig {
            max_steps: 60,
            ..Default::default()
        };
        let direct = original_clue(&x0, &cfg, models).unwrap();

        let z0 = vae.encode(&x0).unwrap();
        let manual = descend(
            &z0,
            &x0,
            &SearchConfig {
                constrained: false,
                n: 1,
                ..cfg
            },
            models,
        )
        .unwrap();
        assert_eq!(direct.z, manual.z);
        assert_eq!(direct.loss.to_bits(), manual.loss.to_bits());
    }

    #[test]
    fn run_failures_are_recorded_without_aborting_siblings() {
        let (vae, mut bnn) = tiny_models();
        for v in bnn.out.w.data_mut().iter_mut() {
            *v = 1e308;
        }
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig {
            n: 5,
            delta: 1.0,
            ..Default::default()
        };
        let set = search(&x0, &cfg, models, None).unwrap();
        assert_eq!(set.failures.len(), 5);
        assert!(set.results.is_empty());
        for (i, f) in set.failures.iter().enumerate() {
            assert_eq!(f.init_index, i);
            assert!(f.error.contains("non-finite"), "{}", f.error);
        }
    }

    #[test]
    fn csv_round_trip_preserves_fields() {
        let (vae, bnn) = tiny_models();
        let models = Models {
            vae: &vae,
            bnn: &bnn,
        };
        let x0 = sample_x0();
        let cfg = SearchConfig {
            n: 4,
            delta: 1.0,
            max_steps: 30,
            ..Default::default()
        };
        let set = search(&x0, &cfg, models, None).unwrap();
        let mut buf = Vec::new();
        write_clue_set_csv(&set, &mut buf).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csv");
        std::fs::write(&path, &buf).unwrap();
        let rows = read_clue_set_csv(&path).unwrap();
        assert_eq!(rows.len(), set.results.len());
        for (row, r) in rows.iter().zip(&set.results) {
            assert_eq!(row.init_index, r.init_index);
            assert_eq!(row.entropy, r.predictive.entropy);
            assert_eq!(row.d_x, r.input_distance);
            assert_eq!(row.rho, r.latent_distance);
            assert_eq!(row.accepted, r.accepted);
            assert_eq!(row.label, r.predictive.label);
        }

        // Sidecar vectors round-trip through the container format.
        let vectors = clue_set_vectors(&set);
        let bytes = vectors.to_bytes();
        let back = Container::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(
            back.require("z_000").unwrap().data(),
            set.results[0].z.as_slice()
        );
    }
}
