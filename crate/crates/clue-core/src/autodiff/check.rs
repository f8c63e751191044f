//! Finite-difference verification of backward gradients.

use super::{AutodiffError, NodeId, Result, Tape, Tensor};

/// Settings for [`gradient_check`].
pub struct GradCheckConfig<'a> {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error per coordinate.
    pub tolerance: f64,
    /// Coordinates to check; `None` checks all of them.
    pub coords: Option<&'a [usize]>,
    /// Marks coordinates where `f` is not differentiable (e.g. a zero
    /// coordinate under an ℓ1 term); those are excluded from the check and
    /// flagged in the report.
    pub kink: Option<&'a dyn Fn(usize, f64) -> bool>,
}

impl Default for GradCheckConfig<'_> {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            coords: None,
            kink: None,
        }
    }
}

/// Outcome for one checked coordinate.
#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub excluded_kink: bool,
}

/// Per-coordinate comparison of backward gradients against central finite
/// differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Coordinates that exceeded the tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &CoordCheck> {
        let tol = self.tolerance;
        self.checks
            .iter()
            .filter(move |c| !c.excluded_kink && c.rel_error > tol)
    }
}

fn eval_scalar<F>(f: &F, at: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(at.clone());
    let out = f(&mut tape, x)?;
    if !tape.value(out).is_scalar() {
        return Err(AutodiffError::Contract(
            "gradient_check requires a scalar-valued function".into(),
        ));
    }
    Ok(tape.scalar(out))
}

/// Compares the backward gradient of `f` at `at` against central finite
/// differences, coordinate by coordinate.
///
/// Relative error uses a 1e-3 denominator floor so that true near-zero
/// gradients are judged on absolute finite-difference noise rather than
/// blowing up the ratio.
pub fn gradient_check<F>(f: F, at: &Tensor, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let mut leaf = at.clone();
    leaf.requires_grad = true;
    let x = tape.leaf(leaf);
    let out = f(&mut tape, x)?;
    if !tape.value(out).is_scalar() {
        return Err(AutodiffError::Contract(
            "gradient_check requires a scalar-valued function".into(),
        ));
    }
    tape.backward(out)?;
    let analytic = tape
        .take_grad(x)
        .unwrap_or_else(|| vec![0.0; at.len()]);

    let all_coords: Vec<usize> = (0..at.len()).collect();
    let coords = cfg.coords.unwrap_or(&all_coords);

    let mut checks = Vec::with_capacity(coords.len());
    let mut max_rel = 0.0_f64;
    for &i in coords {
        let xi = at.data()[i];
        if cfg.kink.map(|k| k(i, xi)).unwrap_or(false) {
            checks.push(CoordCheck {
                index: i,
                analytic: analytic[i],
                numeric: f64::NAN,
                rel_error: f64::NAN,
                excluded_kink: true,
            });
            continue;
        }
        let mut plus = at.clone();
        plus.data_mut()[i] = xi + cfg.step;
        let mut minus = at.clone();
        minus.data_mut()[i] = xi - cfg.step;
        let numeric = (eval_scalar(&f, &plus)? - eval_scalar(&f, &minus)?) / (2.0 * cfg.step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-3);
        let rel = (analytic[i] - numeric).abs() / denom;
        max_rel = max_rel.max(rel);
        checks.push(CoordCheck {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error: rel,
            excluded_kink: false,
        });
    }

    Ok(GradCheckReport {
        checks,
        max_rel_error: max_rel,
        tolerance: cfg.tolerance,
        passed: max_rel <= cfg.tolerance,
    })
}
