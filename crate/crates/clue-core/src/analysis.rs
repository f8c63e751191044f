//! Diversity and quality analysis of explanation sets: label-entropy
//! saturation curves, distinct-label counts, automatic mode clustering,
//! per-class cost statistics, inverse-square label distributions, and the
//! distance-metric translation-robustness experiment.
//!
//! Analyses are pure functions over immutable [`ClueSet`]s. They run over
//! the full result list by default; pass [`ResultFilter::AcceptedOnly`] to
//! restrict to accepted explanations.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::models::{GenerativeModel, ModelError};
use crate::search::ClueSet;
use crate::util::{entropy_nats, l1_distance, l2_distance, rng_from_seed};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Which results of a set an analysis sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResultFilter {
    #[default]
    All,
    AcceptedOnly,
}

fn filtered<'a>(set: &'a ClueSet, filter: ResultFilter) -> Vec<&'a crate::search::ClueResult> {
    set.results
        .iter()
        .filter(|r| filter == ResultFilter::All || r.accepted)
        .collect()
}

/// Label and mode diversity of one explanation set.
#[derive(Debug, Clone, Default)]
pub struct DiversityReport {
    pub label_counts: BTreeMap<usize, usize>,
    /// Entropy of the final label distribution, nats.
    pub label_entropy: f64,
    pub distinct_labels: usize,
    /// (k, entropy of the labels of the first k results).
    pub entropy_curve: Vec<(usize, f64)>,
    /// class → number of modes found by clustering.
    pub mode_counts: BTreeMap<usize, usize>,
    /// (k, entropy over (class, mode) pairs of the first k results).
    pub mode_entropy_curve: Vec<(usize, f64)>,
}

fn prefix_entropy_curve<K: Ord + Clone>(keys: &[K]) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    let mut curve = Vec::with_capacity(keys.len());
    for (i, key) in keys.iter().enumerate() {
        *counts.entry(key.clone()).or_insert(0) += 1;
        let k = i + 1;
        let probs: Vec<f64> = counts.values().map(|&c| c as f64 / k as f64).collect();
        curve.push((k, entropy_nats(&probs)));
    }
    curve
}

/// Label-entropy prefix curve and label counts (mode fields left empty;
/// see [`diversity_report`] for the clustered version).
pub fn label_entropy_curve(set: &ClueSet, filter: ResultFilter) -> DiversityReport {
    let results = filtered(set, filter);
    let labels: Vec<usize> = results.iter().map(|r| r.predictive.label).collect();
    let mut label_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in &labels {
        *label_counts.entry(l).or_insert(0) += 1;
    }
    let total = labels.len().max(1);
    let probs: Vec<f64> = label_counts
        .values()
        .map(|&c| c as f64 / total as f64)
        .collect();
    DiversityReport {
        label_entropy: entropy_nats(&probs),
        distinct_labels: label_counts.len(),
        entropy_curve: prefix_entropy_curve(&labels),
        label_counts,
        mode_counts: BTreeMap::new(),
        mode_entropy_curve: Vec::new(),
    }
}

/// Full diversity report including per-class mode clustering.
pub fn diversity_report(set: &ClueSet, filter: ResultFilter, seed: u64) -> DiversityReport {
    let mut report = label_entropy_curve(set, filter);
    let results = filtered(set, filter);

    // (class, mode) key per filtered result, in order.
    let mut keys: Vec<(usize, usize)> = results
        .iter()
        .map(|r| (r.predictive.label, 0usize))
        .collect();
    let classes: Vec<usize> = report.label_counts.keys().copied().collect();
    for class in classes {
        let assignment = cluster_modes(set, class, filter, seed);
        report.mode_counts.insert(class, assignment.k);
        for (pos, mode) in assignment
            .filtered_positions
            .iter()
            .zip(&assignment.mode_of)
        {
            keys[*pos].1 = *mode;
        }
    }
    report.mode_entropy_curve = prefix_entropy_curve(&keys);
    report
}

/// Mean distinct-label count per δ over groups of sets from the same
/// inputs.
///
/// Every δ group must cover the same explained inputs, in the same order.
pub fn distinct_labels_vs_delta(
    groups: &[(f64, Vec<&ClueSet>)],
    filter: ResultFilter,
) -> Result<Vec<(f64, f64)>> {
    if let Some((_, first)) = groups.first() {
        for (delta, sets) in groups {
            if sets.len() != first.len() {
                return Err(AnalysisError::Contract(format!(
                    "delta {delta} covers {} inputs, expected {}",
                    sets.len(),
                    first.len()
                )));
            }
            for (a, b) in sets.iter().zip(first) {
                if a.origin.x0 != b.origin.x0 {
                    return Err(AnalysisError::Contract(
                        "delta groups explain different inputs".into(),
                    ));
                }
            }
        }
    }
    Ok(groups
        .iter()
        .map(|(delta, sets)| {
            let mean = sets
                .iter()
                .map(|s| label_entropy_curve(s, filter).distinct_labels as f64)
                .sum::<f64>()
                / sets.len().max(1) as f64;
            (*delta, mean)
        })
        .collect())
}

/// Per-result mode assignment for one class.
#[derive(Debug, Clone)]
pub struct ModeAssignment {
    /// Positions (into the filtered result list) of this class's results.
    pub filtered_positions: Vec<usize>,
    /// Mode id per position, in the same order.
    pub mode_of: Vec<usize>,
    /// Number of modes (clusters) selected.
    pub k: usize,
}

/// Clusters the decoded inputs of one class with k-means, selecting k by
/// silhouette score over k ∈ {1..min(6, count)}. k = 1 scores zero, so
/// multiple modes are reported only when the silhouette finds real
/// structure.
pub fn cluster_modes(
    set: &ClueSet,
    class: usize,
    filter: ResultFilter,
    seed: u64,
) -> ModeAssignment {
    let results = filtered(set, filter);
    let positions: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.predictive.label == class)
        .map(|(i, _)| i)
        .collect();
    let points: Vec<&[f64]> = positions.iter().map(|&i| results[i].x.as_slice()).collect();
    if points.is_empty() {
        return ModeAssignment {
            filtered_positions: positions,
            mode_of: Vec::new(),
            k: 0,
        };
    }

    let k_max = 6.min(points.len());
    let mut best: (usize, f64, Vec<usize>) = (1, 0.0, vec![0; points.len()]);
    for k in 2..=k_max {
        let assign = kmeans(&points, k, seed);
        let score = mean_silhouette(&points, &assign, k);
        if score > best.1 {
            best = (k, score, assign);
        }
    }
    let (k, _, mode_of) = best;
    ModeAssignment {
        filtered_positions: positions,
        mode_of,
        k,
    }
}

fn kmeans(points: &[&[f64]], k: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let n = points.len();
    debug_assert!(k >= 1 && k <= n);
    let dim = points[0].len();
    let mut rng = rng_from_seed(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centroids.push(points[next].to_vec());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        // Recompute centroids; reseed empty clusters at the farthest point.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, &v) in sums[assign[i]].iter_mut().zip(*p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points[a], &centroids[assign[a]])
                            .total_cmp(&sq_dist(points[b], &centroids[assign[b]]))
                    })
                    .unwrap();
                centroids[c] = points[far].to_vec();
            } else {
                for (ci, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *ci = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_silhouette(points: &[&[f64]], assign: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut intra_sum = 0.0;
        let mut intra_n = 0usize;
        let mut inter: Vec<(f64, usize)> = vec![(0.0, 0); k];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sq_dist(points[i], points[j]).sqrt();
            if assign[j] == assign[i] {
                intra_sum += d;
                intra_n += 1;
            } else {
                inter[assign[j]].0 += d;
                inter[assign[j]].1 += 1;
            }
        }
        let a = if intra_n > 0 {
            intra_sum / intra_n as f64
        } else {
            0.0
        };
        let b = inter
            .iter()
            .filter(|(_, c)| *c > 0)
            .map(|(s, c)| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        let s = if !b.is_finite() {
            0.0
        } else {
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        };
        total += s;
    }
    total / n as f64
}

/// Min/avg/max triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinAvgMax {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

impl MinAvgMax {
    fn over(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        (n > 0).then(|| Self {
            min,
            avg: sum / n as f64,
            max,
        })
    }
}

/// Per-class statistics of one metric family.
#[derive(Debug, Clone)]
pub struct MetricStats {
    pub entropy: MinAvgMax,
    pub input_distance: MinAvgMax,
    pub cost: MinAvgMax,
    pub count: usize,
}

/// Per-class min/avg/max of entropy, input distance, and cost
/// H + λx·d_x.
#[derive(Debug, Clone)]
pub struct ClassStats {
    pub lambda_x: f64,
    pub per_class: BTreeMap<usize, MetricStats>,
}

pub fn class_stats(set: &ClueSet, lambda_x: f64, filter: ResultFilter) -> ClassStats {
    let results = filtered(set, filter);
    let mut classes: BTreeMap<usize, Vec<&crate::search::ClueResult>> = BTreeMap::new();
    for r in results {
        classes.entry(r.predictive.label).or_default().push(r);
    }
    let per_class = classes
        .into_iter()
        .map(|(class, rs)| {
            let stats = MetricStats {
                entropy: MinAvgMax::over(rs.iter().map(|r| r.predictive.entropy)).unwrap(),
                input_distance: MinAvgMax::over(rs.iter().map(|r| r.input_distance)).unwrap(),
                cost: MinAvgMax::over(
                    rs.iter()
                        .map(|r| r.predictive.entropy + lambda_x * r.input_distance),
                )
                .unwrap(),
                count: rs.len(),
            };
            (class, stats)
        })
        .collect();
    ClassStats {
        lambda_x,
        per_class,
    }
}

/// Normalized label distribution over classes, from inverse-square minimum
/// costs.
#[derive(Debug, Clone)]
pub struct LabelDistribution {
    pub probs: BTreeMap<usize, f64>,
}

impl LabelDistribution {
    /// Probability of a class (0 for absent classes).
    pub fn prob(&self, class: usize) -> f64 {
        self.probs.get(&class).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// weight_y = 1 / min_cost_y²; probabilities are the normalized weights.
///
/// Degenerate edge rule: if any class reaches exactly zero minimum cost,
/// probability 1 is split evenly over the zero-cost classes.
pub fn label_distribution(stats: &ClassStats) -> LabelDistribution {
    let zero_cost: Vec<usize> = stats
        .per_class
        .iter()
        .filter(|(_, s)| s.cost.min == 0.0)
        .map(|(&c, _)| c)
        .collect();
    if !zero_cost.is_empty() {
        let p = 1.0 / zero_cost.len() as f64;
        return LabelDistribution {
            probs: zero_cost.into_iter().map(|c| (c, p)).collect(),
        };
    }
    let weights: BTreeMap<usize, f64> = stats
        .per_class
        .iter()
        .map(|(&c, s)| (c, 1.0 / (s.cost.min * s.cost.min)))
        .collect();
    let total: f64 = weights.values().sum();
    LabelDistribution {
        probs: weights
            .into_iter()
            .map(|(c, w)| (c, w / total))
            .collect(),
    }
}

/// Distance metric for the translation-robustness experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustnessMetric {
    L1Input,
    L2Input,
    L1Latent,
    L2Latent,
}

impl RobustnessMetric {
    pub const ALL: [RobustnessMetric; 4] = [
        RobustnessMetric::L1Input,
        RobustnessMetric::L2Input,
        RobustnessMetric::L1Latent,
        RobustnessMetric::L2Latent,
    ];

    pub fn is_latent(self) -> bool {
        matches!(self, RobustnessMetric::L1Latent | RobustnessMetric::L2Latent)
    }
}

impl std::fmt::Display for RobustnessMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RobustnessMetric::L1Input => "l1-input",
            RobustnessMetric::L2Input => "l2-input",
            RobustnessMetric::L1Latent => "l1-latent",
            RobustnessMetric::L2Latent => "l2-latent",
        };
        write!(f, "{s}")
    }
}

/// Shifts a row-major image by (dx, dy) pixels with zero fill.
pub fn shift_image(
    x: &[f64],
    rows: usize,
    cols: usize,
    dx: i64,
    dy: i64,
) -> Result<Vec<f64>> {
    if x.len() != rows * cols {
        return Err(AnalysisError::Contract(format!(
            "image has {} pixels, expected {rows}x{cols}",
            x.len()
        )));
    }
    if dx.unsigned_abs() as usize >= cols || dy.unsigned_abs() as usize >= rows {
        return Err(AnalysisError::Contract(format!(
            "shift ({dx},{dy}) larger than the {cols}x{rows} image"
        )));
    }
    let mut out = vec![0.0; x.len()];
    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            let (sr, sc) = (r - dy, c - dx);
            if sr >= 0 && sr < rows as i64 && sc >= 0 && sc < cols as i64 {
                out[(r * cols as i64 + c) as usize] = x[(sr * cols as i64 + sc) as usize];
            }
        }
    }
    Ok(out)
}

fn l1_norm_slice(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Normalized distance curve under pixel translations: for each shift,
/// distance(shifted, original) / distance(empty, original). Latent metrics
/// encode both images first (and normalize by the encoded empty image).
pub fn translation_robustness(
    x: &[f64],
    rows: usize,
    cols: usize,
    metric: RobustnessMetric,
    shifts: &[(i64, i64)],
    vae: Option<&GenerativeModel>,
) -> Result<Vec<f64>> {
    let empty = vec![0.0; x.len()];
    let (base, encode): (Vec<f64>, Option<Vec<f64>>) = if metric.is_latent() {
        let vae = vae.ok_or_else(|| {
            AnalysisError::Contract(format!("metric {metric} requires the generative model"))
        })?;
        (vae.encode(x)?, Some(vae.encode(&empty)?))
    } else {
        (x.to_vec(), None)
    };
    let denom = match (metric, &encode) {
        (RobustnessMetric::L1Input, _) => l1_norm_slice(x),
        (RobustnessMetric::L2Input, _) => crate::util::l2_norm(x),
        (RobustnessMetric::L1Latent, Some(z_empty)) => l1_distance(z_empty, &base),
        (RobustnessMetric::L2Latent, Some(z_empty)) => l2_distance(z_empty, &base),
        _ => unreachable!(),
    };
    if denom == 0.0 {
        return Err(AnalysisError::Contract(
            "empty-to-original distance is zero; normalization undefined".into(),
        ));
    }
    shifts
        .iter()
        .map(|&(dx, dy)| {
            let shifted = shift_image(x, rows, cols, dx, dy)?;
            let num = match metric {
                RobustnessMetric::L1Input => l1_distance(&shifted, x),
                RobustnessMetric::L2Input => l2_distance(&shifted, x),
                RobustnessMetric::L1Latent | RobustnessMetric::L2Latent => {
                    let vae = vae.expect("checked above");
                    let z_shift = vae.encode(&shifted)?;
                    if metric == RobustnessMetric::L1Latent {
                        l1_distance(&z_shift, &base)
                    } else {
                        l2_distance(&z_shift, &base)
                    }
                }
            };
            Ok(num / denom)
        })
        .collect()
}

/// Writes an entropy curve as `k,label_entropy[,mode_entropy]`.
pub fn write_entropy_curve_csv(report: &DiversityReport, w: &mut impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let with_modes = !report.mode_entropy_curve.is_empty();
    if with_modes {
        csv.write_record(["k", "label_entropy", "mode_entropy"])?;
        for ((k, le), (_, me)) in report
            .entropy_curve
            .iter()
            .zip(&report.mode_entropy_curve)
        {
            csv.write_record(&[k.to_string(), le.to_string(), me.to_string()])?;
        }
    } else {
        csv.write_record(["k", "label_entropy"])?;
        for (k, le) in &report.entropy_curve {
            csv.write_record(&[k.to_string(), le.to_string()])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Writes per-class stats as one row per class.
pub fn write_class_stats_csv(stats: &ClassStats, w: &mut impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "class", "count", "h_min", "h_avg", "h_max", "dx_min", "dx_avg", "dx_max", "cost_min",
        "cost_avg", "cost_max",
    ])?;
    for (class, s) in &stats.per_class {
        csv.write_record(&[
            class.to_string(),
            s.count.to_string(),
            s.entropy.min.to_string(),
            s.entropy.avg.to_string(),
            s.entropy.max.to_string(),
            s.input_distance.min.to_string(),
            s.input_distance.avg.to_string(),
            s.input_distance.max.to_string(),
            s.cost.min.to_string(),
            s.cost.avg.to_string(),
            s.cost.max.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes a label distribution over all classes (absent classes get 0).
pub fn write_label_distribution_csv(
    dist: &LabelDistribution,
    n_classes: usize,
    w: &mut impl Write,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["class", "probability"])?;
    for class in 0..n_classes {
        csv.write_record(&[class.to_string(), dist.prob(class).to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes robustness curves: one row per shift, one column per metric.
pub fn write_robustness_csv(
    shifts: &[(i64, i64)],
    curves: &[(String, Vec<f64>)],
    w: &mut impl Write,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["dx".to_string(), "dy".to_string()];
    header.extend(curves.iter().map(|(name, _)| name.clone()));
    csv.write_record(&header)?;
    for (i, (dx, dy)) in shifts.iter().enumerate() {
        let mut row = vec![dx.to_string(), dy.to_string()];
        row.extend(curves.iter().map(|(_, c)| c[i].to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PredictiveOutput;
    use crate::search::{ClueResult, ClueSet, Origin, SearchConfig};

    /// Hand-built set with the given labels and per-result (entropy, d_x).
    fn fake_set(rows: &[(usize, f64, f64)]) -> ClueSet {
        let results = rows
            .iter()
            .enumerate()
            .map(|(i, &(label, entropy, d_x))| {
                let mut probs = vec![0.0; 10];
                probs[label] = 1.0;
                ClueResult {
                    z: vec![i as f64, 0.0],
                    x: vec![label as f64 / 10.0; 4],
                    predictive: PredictiveOutput {
                        probs,
                        entropy,
                        label,
                    },
                    input_distance: d_x,
                    prediction_distance: 0.1,
                    latent_distance: 1.0,
                    loss: entropy,
                    cost: entropy,
                    accepted: true,
                    converged: true,
                    steps: 5,
                    init_index: i,
                    on_shell: false,
                }
            })
            .collect();
        ClueSet {
            origin: Origin {
                x0: vec![0.5; 4],
                z0: vec![0.0, 0.0],
                predictive: PredictiveOutput {
                    probs: vec![0.1; 10],
                    entropy: 2.3,
                    label: 0,
                },
            },
            config: SearchConfig::default(),
            results,
            failures: Vec::new(),
        }
    }

    #[test]
    fn single_label_set_has_zero_entropy_everywhere() {
        let set = fake_set(&[(3, 0.1, 1.0), (3, 0.2, 2.0), (3, 0.3, 3.0)]);
        let report = label_entropy_curve(&set, ResultFilter::All);
        assert_eq!(report.distinct_labels, 1);
        assert!(report.entropy_curve.iter().all(|&(_, h)| h == 0.0));
        assert_eq!(report.label_entropy, 0.0);
    }

    #[test]
    fn frozen_label_mix_reproduces_direct_summation() {
        // 50 of label 7, 30 of label 9, 20 of label 2 at k = 100:
        // −(0.5 ln 0.5 + 0.3 ln 0.3 + 0.2 ln 0.2) = 1.0296530140645737.
        let mut rows = Vec::new();
        for i in 0..100 {
            let label = if i % 2 == 0 {
                7
            } else if i % 10 < 6 {
                9
            } else {
                2
            };
            rows.push((label, 0.1, 1.0));
        }
        let set = fake_set(&rows);
        let report = label_entropy_curve(&set, ResultFilter::All);
        assert_eq!(report.label_counts[&7], 50);
        assert_eq!(report.label_counts[&9], 30);
        assert_eq!(report.label_counts[&2], 20);
        let (k, h) = *report.entropy_curve.last().unwrap();
        assert_eq!(k, 100);
        assert!((h - 1.0296530140645737).abs() < 1e-12);
        assert!((h - 1.02965).abs() < 1e-5);
        assert!(report
            .entropy_curve
            .iter()
            .all(|&(_, h)| h <= 10.0_f64.ln() + 1e-12));
    }

    #[test]
    fn distinct_labels_table_checks_grid_consistency() {
        let a1 = fake_set(&[(1, 0.1, 1.0)]);
        let a2 = fake_set(&[(2, 0.1, 1.0)]);
        let b1 = fake_set(&[(1, 0.1, 1.0), (3, 0.1, 1.0)]);
        let b2 = fake_set(&[(2, 0.1, 1.0), (4, 0.1, 1.0)]);
        let groups = vec![
            (0.5, vec![&a1, &a2]),
            (1.0, vec![&b1, &b2]),
        ];
        let table = distinct_labels_vs_delta(&groups, ResultFilter::All).unwrap();
        assert_eq!(table[0], (0.5, 1.0));
        assert_eq!(table[1], (1.0, 2.0));

        let bad = vec![(0.5, vec![&a1, &a2]), (1.0, vec![&b1])];
        assert!(distinct_labels_vs_delta(&bad, ResultFilter::All).is_err());
    }

    #[test]
    fn identical_inputs_form_one_mode() {
        let set = fake_set(&[(5, 0.1, 1.0), (5, 0.1, 1.0), (5, 0.1, 1.0)]);
        let modes = cluster_modes(&set, 5, ResultFilter::All, 0);
        assert_eq!(modes.k, 1);
        assert!(modes.mode_of.iter().all(|&m| m == 0));
    }

    #[test]
    fn well_separated_blobs_form_two_modes() {
        // Two blobs in input space: centers 0.0 and 10.0, spread 0.1.
        let mut set = fake_set(&(0..20).map(|_| (5usize, 0.1, 1.0)).collect::<Vec<_>>());
        for (i, r) in set.results.iter_mut().enumerate() {
            let center = if i < 10 { 0.0 } else { 10.0 };
            let wiggle = (i as f64 * 0.7).sin() * 0.1;
            r.x = vec![center + wiggle; 4];
        }
        let modes = cluster_modes(&set, 5, ResultFilter::All, 0);
        assert_eq!(modes.k, 2);
        // Mode count never exceeds the class count.
        assert!(modes.k <= 20);
        // Deterministic across reruns.
        let again = cluster_modes(&set, 5, ResultFilter::All, 0);
        assert_eq!(modes.mode_of, again.mode_of);
    }

    #[test]
    fn class_stats_respect_min_avg_max_ordering() {
        let set = fake_set(&[
            (1, 0.5, 10.0),
            (1, 0.2, 30.0),
            (1, 0.8, 20.0),
            (4, 0.3, 5.0),
        ]);
        let stats = class_stats(&set, 0.03, ResultFilter::All);
        let c1 = &stats.per_class[&1];
        assert_eq!(c1.count, 3);
        assert_eq!(c1.entropy.min, 0.2);
        assert_eq!(c1.entropy.max, 0.8);
        assert!((c1.entropy.avg - 0.5).abs() < 1e-12);
        assert!(c1.cost.min >= c1.entropy.min);
        // Single result: min = avg = max.
        let c4 = &stats.per_class[&4];
        assert_eq!(c4.entropy.min, c4.entropy.max);
        assert_eq!(c4.entropy.min, c4.entropy.avg);
        // λx = 0 collapses cost onto entropy.
        let stats0 = class_stats(&set, 0.0, ResultFilter::All);
        for (_, s) in &stats0.per_class {
            assert_eq!(s.cost.min, s.entropy.min);
            assert_eq!(s.cost.avg, s.entropy.avg);
            assert_eq!(s.cost.max, s.entropy.max);
        }
    }

    #[test]
    fn label_distribution_matches_inverse_square_oracle() {
        // Min costs {2: 0.5, 7: 1.0, 9: 2.0} → weights 4, 1, 0.25 →
        // normalized {0.761905, 0.190476, 0.047619}.
        let set = fake_set(&[(2, 0.5, 0.0), (7, 1.0, 0.0), (9, 2.0, 0.0)]);
        let dist = label_distribution(&class_stats(&set, 0.0, ResultFilter::All));
        assert!((dist.prob(2) - 0.7619).abs() < 1e-4);
        assert!((dist.prob(7) - 0.1905).abs() < 1e-4);
        assert!((dist.prob(9) - 0.0476).abs() < 1e-4);
        assert!((dist.total() - 1.0).abs() < 1e-9);
        assert_eq!(dist.prob(0), 0.0);
    }

    #[test]
    fn label_distribution_edge_rules() {
        let one = fake_set(&[(3, 0.7, 0.0)]);
        let dist = label_distribution(&class_stats(&one, 0.0, ResultFilter::All));
        assert_eq!(dist.prob(3), 1.0);

        let equal = fake_set(&[(3, 0.7, 0.0), (8, 0.7, 0.0)]);
        let dist = label_distribution(&class_stats(&equal, 0.0, ResultFilter::All));
        assert!((dist.prob(3) - 0.5).abs() < 1e-12);
        assert!((dist.prob(8) - 0.5).abs() < 1e-12);

        // Zero min cost: probability 1 split over the zero-cost classes.
        let zero = fake_set(&[(1, 0.0, 0.0), (2, 0.0, 0.0), (5, 0.4, 0.0)]);
        let dist = label_distribution(&class_stats(&zero, 0.0, ResultFilter::All));
        assert_eq!(dist.prob(1), 0.5);
        assert_eq!(dist.prob(2), 0.5);
        assert_eq!(dist.prob(5), 0.0);
        assert!((dist.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_shift_distance_is_exactly_zero() {
        let ds = crate::data::synthetic::generate(3, 17, crate::data::Split::Test);
        let x = &ds.inputs[0];
        for metric in [RobustnessMetric::L1Input, RobustnessMetric::L2Input] {
            let curve =
                translation_robustness(x, 28, 28, metric, &[(0, 0)], None).unwrap();
            assert_eq!(curve[0], 0.0);
        }
    }

    #[test]
    fn fully_shifted_sparse_image_normalizes_to_exactly_one() {
        // All mass in one pixel; a one-pixel shift clears the image.
        let mut x = vec![0.0; 16];
        x[0] = 0.8;
        let curve =
            translation_robustness(&x, 4, 4, RobustnessMetric::L1Input, &[(-1, 0)], None)
                .unwrap();
        assert_eq!(curve[0], 1.0);
    }

    #[test]
    fn oversized_shift_is_a_contract_error() {
        let x = vec![0.5; 16];
        let err =
            translation_robustness(&x, 4, 4, RobustnessMetric::L1Input, &[(4, 0)], None)
                .unwrap_err();
        assert!(err.to_string().contains("larger than"), "{err}");
    }

    #[test]
    fn input_space_curves_are_monotone_and_bounded_on_digit_fixtures() {
        let ds = crate::data::synthetic::generate(5, 23, crate::data::Split::Test);
        let shifts: Vec<(i64, i64)> = (0..=10).map(|t| (t, t)).collect();
        for x in &ds.inputs {
            for metric in [RobustnessMetric::L1Input, RobustnessMetric::L2Input] {
                let curve = translation_robustness(x, 28, 28, metric, &shifts, None).unwrap();
                assert_eq!(curve[0], 0.0);
                for w in curve.windows(2) {
                    assert!(w[1] >= w[0] - 0.02, "{metric}: {} -> {}", w[0], w[1]);
                }
                assert!(curve.iter().all(|&v| v <= 1.0 + 1e-9), "{metric}");
            }
        }
    }
}
