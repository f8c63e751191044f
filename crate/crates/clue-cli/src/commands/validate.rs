//! `clue validate`: re-parse every CSV an experiment emitted and check the
//! internal consistency rules (bounds, orderings, probability sums, count
//! arithmetic).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

const TOL: f64 = 1e-9;

/// One parsed CSV: headers plus rows of header→value maps.
struct Table {
    headers: Vec<String>,
    rows: Vec<BTreeMap<String, String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("headers of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("parsing {}", path.display()))?;
        rows.push(
            headers
                .iter()
                .cloned()
                .zip(record.iter().map(str::to_string))
                .collect(),
        );
    }
    Ok(Table { headers, rows })
}

struct Checker {
    violations: Vec<String>,
}

impl Checker {
    fn fail(&mut self, path: &Path, msg: String) {
        self.violations.push(format!("{}: {msg}", path.display()));
    }

    fn num(&mut self, path: &Path, row: &BTreeMap<String, String>, key: &str) -> Option<f64> {
        match row.get(key).map(|v| v.parse::<f64>()) {
            Some(Ok(v)) => Some(v),
            Some(Err(_)) => {
                let raw = &row[key];
                // NaN is a legal "no data" marker for filtered aggregates.
                if raw.eq_ignore_ascii_case("nan") {
                    None
                } else {
                    self.fail(path, format!("column `{key}`: `{raw}` is not a number"));
                    None
                }
            }
            None => {
                self.fail(path, format!("missing column `{key}`"));
                None
            }
        }
    }
}

/// Validates every CSV under `dir` (recursively). Returns the list of
/// violations; empty means the artifact is internally consistent.
pub fn validate_dir(dir: &Path) -> Result<Vec<String>> {
    let mut checker = Checker {
        violations: Vec::new(),
    };
    let run_cfg = load_run_config(dir);

    let mut csvs: Vec<PathBuf> = Vec::new();
    collect_csvs(dir, &mut csvs)?;
    csvs.sort();
    if csvs.is_empty() {
        checker
            .violations
            .push(format!("{}: no CSV files found", dir.display()));
    }

    for path in &csvs {
        let table = match read_table(path) {
            Ok(t) => t,
            Err(e) => {
                checker.fail(path, format!("unparseable: {e}"));
                continue;
            }
        };
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        match name.as_ref() {
            "clue_set.csv" => check_clue_set(&mut checker, path, &table, run_cfg.as_ref()),
            "manifest.csv" => check_manifest(&mut checker, path, &table),
            "uncertainty_vs_delta.csv" => check_min_avg_max(&mut checker, path, &table),
            "distance_vs_delta.csv" => check_min_avg_max(&mut checker, path, &table),
            "shell_vs_delta.csv" => check_shell(&mut checker, path, &table),
            "distinct_labels.csv" => check_distinct(&mut checker, path, &table, run_cfg.as_ref()),
            "entropy_curves.csv" | "entropy_curve.csv" => {
                check_entropy_curve(&mut checker, path, &table, run_cfg.as_ref())
            }
            "label_distribution.csv" | "original_predictions.csv" => {
                check_distribution(&mut checker, path, &table, &[])
            }
            "label_distributions.csv" => {
                check_distribution(&mut checker, path, &table, &["loss", "scheme", "rank"])
            }
            "class_stats.csv" => check_class_stats(&mut checker, path, &table),
            "vae_curve.csv" => check_vae_curve(&mut checker, path, &table),
            "bnn_curve.csv" => check_bnn_curve(&mut checker, path, &table),
            n if n.starts_with("robustness") => check_robustness(&mut checker, path, &table),
            _ => {} // Parsed fine; no specific rules.
        }
    }
    Ok(checker.violations)
}

pub fn run(cfg: &ExperimentConfig) -> Result<bool> {
    let violations = validate_dir(&cfg.out)?;
    if violations.is_empty() {
        println!("ok: {} is internally consistent", cfg.out.display());
        Ok(true)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        println!("{} violation(s)", violations.len());
        Ok(false)
    }
}

fn load_run_config(dir: &Path) -> Option<ExperimentConfig> {
    let path = dir.join("run_config.txt");
    let text = std::fs::read_to_string(path).ok()?;
    let mut cfg = ExperimentConfig::default();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            // Ignore unknown keys so configs stay forward-compatible.
            let _ = cfg.set(k.trim(), v.trim());
        }
    }
    Some(cfg)
}

fn collect_csvs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        anyhow::bail!("{} is not a directory", dir.display());
    }
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_csvs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    Ok(())
}

fn check_clue_set(c: &mut Checker, path: &Path, t: &Table, cfg: Option<&ExperimentConfig>) {
    for row in &t.rows {
        let (Some(rho), Some(delta)) = (c.num(path, row, "rho"), c.num(path, row, "delta"))
        else {
            continue;
        };
        if rho > delta + TOL {
            c.fail(path, format!("rho {rho} exceeds delta {delta}"));
        }
        let (Some(entropy), Some(d_x), Some(cost)) = (
            c.num(path, row, "entropy"),
            c.num(path, row, "d_x"),
            c.num(path, row, "cost"),
        ) else {
            continue;
        };
        if let Some(cfg) = cfg {
            let (lambda_x, _) = cfg.lambdas_for(cfg.loss);
            if (cost - (entropy + lambda_x * d_x)).abs() > 1e-9 {
                c.fail(
                    path,
                    format!("cost {cost} != entropy {entropy} + {lambda_x}*d_x {d_x}"),
                );
            }
            let accepted = row.get("accepted").map(String::as_str) == Some("true");
            if accepted != (entropy < cfg.h_threshold) {
                c.fail(
                    path,
                    format!(
                        "accepted={accepted} inconsistent with entropy {entropy} vs threshold {}",
                        cfg.h_threshold
                    ),
                );
            }
        }
    }
}

fn check_manifest(c: &mut Checker, path: &Path, t: &Table) {
    for row in &t.rows {
        let status = row.get("status").cloned().unwrap_or_default();
        if status != "ok" {
            c.fail(path, format!("cell status `{status}`"));
            continue;
        }
        let (Some(n), Some(results), Some(failures)) = (
            c.num(path, row, "n"),
            c.num(path, row, "results"),
            c.num(path, row, "run_failures"),
        ) else {
            continue;
        };
        if results + failures > n + 0.5 {
            c.fail(
                path,
                format!("results {results} + failures {failures} exceed n {n}"),
            );
        }
        if let Some(accepted) = c.num(path, row, "accepted") {
            if accepted > results + 0.5 {
                c.fail(path, format!("accepted {accepted} exceeds results {results}"));
            }
        }
    }
}

fn check_min_avg_max(c: &mut Checker, path: &Path, t: &Table) {
    for row in &t.rows {
        let (Some(min), Some(avg), Some(max)) = (
            c.num(path, row, "min_mean"),
            c.num(path, row, "avg_mean"),
            c.num(path, row, "max_mean"),
        ) else {
            continue;
        };
        if !(min <= avg + TOL && avg <= max + TOL) {
            c.fail(path, format!("min {min} <= avg {avg} <= max {max} violated"));
        }
    }
}

fn check_shell(c: &mut Checker, path: &Path, t: &Table) {
    for row in &t.rows {
        for key in ["converged_frac", "on_shell_frac_converged"] {
            if let Some(v) = c.num(path, row, key) {
                if !(0.0..=1.0 + TOL).contains(&v) {
                    c.fail(path, format!("{key} {v} outside [0,1]"));
                }
            }
        }
        if let (Some(rho), Some(delta)) =
            (c.num(path, row, "mean_rho"), c.num(path, row, "delta"))
        {
            if rho > delta + TOL {
                c.fail(path, format!("mean_rho {rho} exceeds delta {delta}"));
            }
        }
    }
}

fn check_distinct(c: &mut Checker, path: &Path, t: &Table, cfg: Option<&ExperimentConfig>) {
    let k = cfg.map(|c| c.n_classes).unwrap_or(10) as f64;
    for row in &t.rows {
        if let Some(v) = c.num(path, row, "mean_distinct") {
            if !(1.0..=k + TOL).contains(&v) {
                c.fail(path, format!("mean_distinct {v} outside [1,{k}]"));
            }
        }
    }
}

fn check_entropy_curve(c: &mut Checker, path: &Path, t: &Table, cfg: Option<&ExperimentConfig>) {
    let ln_k = (cfg.map(|c| c.n_classes).unwrap_or(10) as f64).ln();
    for row in &t.rows {
        if let Some(h) = c.num(path, row, "label_entropy") {
            if !(-TOL..=ln_k + TOL).contains(&h) {
                c.fail(path, format!("label_entropy {h} outside [0, ln K]"));
            }
        }
        if let Some(k) = c.num(path, row, "k") {
            if k < 1.0 {
                c.fail(path, format!("prefix length {k} below 1"));
            }
        }
    }
}

fn check_distribution(c: &mut Checker, path: &Path, t: &Table, group_keys: &[&str]) {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for row in &t.rows {
        let Some(p) = c.num(path, row, "probability") else {
            continue;
        };
        if p < -TOL {
            c.fail(path, format!("negative probability {p}"));
        }
        let group = group_keys
            .iter()
            .map(|k| row.get(*k).cloned().unwrap_or_default())
            .collect::<Vec<_>>()
            .join("/");
        *sums.entry(group).or_insert(0.0) += p;
    }
    for (group, sum) in sums {
        if (sum - 1.0).abs() > 1e-9 {
            c.fail(path, format!("distribution [{group}] sums to {sum}, not 1"));
        }
    }
}

fn check_class_stats(c: &mut Checker, path: &Path, t: &Table) {
    for row in &t.rows {
        for metric in ["h", "dx", "cost"] {
            let (Some(min), Some(avg), Some(max)) = (
                c.num(path, row, &format!("{metric}_min")),
                c.num(path, row, &format!("{metric}_avg")),
                c.num(path, row, &format!("{metric}_max")),
            ) else {
                continue;
            };
            if !(min <= avg + TOL && avg <= max + TOL) {
                c.fail(
                    path,
                    format!("{metric}: min {min} <= avg {avg} <= max {max} violated"),
                );
            }
        }
    }
}

fn check_vae_curve(c: &mut Checker, path: &Path, t: &Table) {
    for row in &t.rows {
        if let Some(kl) = c.num(path, row, "kl") {
            if kl < -TOL {
                c.fail(path, format!("negative KL term {kl}"));
            }
        }
    }
}

fn check_bnn_curve(c: &mut Checker, path: &Path, t: &Table) {
    for row in &t.rows {
        if let Some(acc) = c.num(path, row, "heldout_accuracy") {
            if !(0.0..=1.0 + TOL).contains(&acc) {
                c.fail(path, format!("accuracy {acc} outside [0,1]"));
            }
        }
    }
}

fn check_robustness(c: &mut Checker, path: &Path, t: &Table) {
    let metric_cols: Vec<String> = t
        .headers
        .iter()
        .filter(|h| h.starts_with("l1-") || h.starts_with("l2-"))
        .cloned()
        .collect();
    for row in &t.rows {
        // The per-direction files carry dx/dy; the combined file carries a
        // scalar shift column.
        let zero_shift = match (row.get("shift"), row.get("dx"), row.get("dy")) {
            (Some(s), _, _) => s == "0",
            (None, Some(dx), Some(dy)) => dx == "0" && dy == "0",
            _ => false,
        };
        for col in &metric_cols {
            let Some(v) = c.num(path, row, col) else {
                continue;
            };
            if zero_shift && v != 0.0 {
                c.fail(path, format!("zero-shift {col} is {v}, expected 0"));
            }
            if col.ends_with("input") && v > 1.0 + TOL {
                c.fail(path, format!("input-space {col} is {v} > 1"));
            }
        }
    }
}
