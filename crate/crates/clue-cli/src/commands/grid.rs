//! `clue grid`: sweep every (δ, loss, scheme) cell over the uncertain
//! inputs and emit per-figure CSVs, charts, and a run manifest.
//!
//! Cell seeds depend only on the input rank, so series that differ in δ,
//! loss, or scheme are paired comparisons over shared initialization draws.
//! Mode clustering (the expensive analysis) runs on the largest-δ cells
//! only; label-entropy curves are emitted for every cell.

use std::collections::BTreeMap;

use anyhow::{Context, Result};
use clue_core::analysis::{
    self, diversity_report, label_entropy_curve, ResultFilter,
};
use clue_core::data::most_uncertain;
use clue_core::models::PredictiveOutput;
use clue_core::schemes::{AnchorIndex, SchemeTag};
use clue_core::search::{search, ClueSet};
use clue_core::util::derive_seed;

use crate::chart::{Chart, Series};
use crate::config::{ExperimentConfig, LossVariant};
use crate::stack::{self, Stack, STREAM_ANCHORS, STREAM_UNCERTAIN};
use crate::write_svg;

/// Identity of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub delta: f64,
    pub loss: LossVariant,
    pub scheme: SchemeTag,
    pub rank: usize,
    pub input_index: usize,
}

/// Everything a grid run produced, in deterministic cell order.
pub struct GridOutcome {
    pub cells: Vec<(CellKey, ClueSet)>,
    pub uncertain: Vec<(usize, PredictiveOutput)>,
    /// Cells whose whole search failed (also recorded in the manifest).
    pub failed_cells: Vec<(CellKey, String)>,
}

impl GridOutcome {
    /// Cells matching a (δ, loss, scheme) slice, ordered by rank.
    pub fn slice(
        &self,
        delta: f64,
        loss: LossVariant,
        scheme: SchemeTag,
    ) -> Vec<&ClueSet> {
        self.cells
            .iter()
            .filter(|(k, _)| k.delta == delta && k.loss == loss && k.scheme == scheme)
            .map(|(_, s)| s)
            .collect()
    }
}

pub fn run(cfg: &ExperimentConfig, stack: &Stack) -> Result<GridOutcome> {
    let models = stack.models();
    let out = &cfg.out;
    std::fs::create_dir_all(out.join("charts"))
        .with_context(|| format!("creating {}", out.display()))?;

    let uncertain = most_uncertain(
        &stack.test,
        &stack.bnn,
        cfg.uncertain_count,
        derive_seed(cfg.seed, STREAM_UNCERTAIN),
    )?;
    eprintln!(
        "explaining {} inputs: {:?}",
        uncertain.len(),
        uncertain.iter().map(|(i, _)| *i).collect::<Vec<_>>()
    );

    // Anchor latents per rank, if any scheme needs them.
    let anchors_by_rank: Option<Vec<BTreeMap<usize, Vec<f64>>>> =
        if cfg.schemes.contains(&SchemeTag::S2) {
            let index = AnchorIndex::build(
                &stack.train,
                &stack.vae,
                &stack.bnn,
                cfg.anchor_entropy,
                derive_seed(cfg.seed, STREAM_ANCHORS),
            )?;
            eprintln!("anchor candidates: {}", index.len());
            Some(
                uncertain
                    .iter()
                    .map(|(idx, _)| {
                        let z0 = stack.vae.encode(&stack.test.inputs[*idx])?;
                        Ok(index.anchors_for(&z0))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };

    let mut cells: Vec<(CellKey, ClueSet)> = Vec::new();
    let mut failed_cells: Vec<(CellKey, String)> = Vec::new();
    let total =
        cfg.schemes.len() * cfg.losses.len() * cfg.delta_grid.len() * uncertain.len();
    let mut done = 0usize;
    for &scheme in &cfg.schemes {
        for &loss in &cfg.losses {
            for &delta in &cfg.delta_grid {
                for (rank, (input_index, _)) in uncertain.iter().enumerate() {
                    let key = CellKey {
                        delta,
                        loss,
                        scheme,
                        rank,
                        input_index: *input_index,
                    };
                    let scfg = stack::cell_search_config(cfg, delta, loss, scheme, rank);
                    let anchors = anchors_by_rank.as_ref().map(|a| &a[rank]);
                    match search(&stack.test.inputs[*input_index], &scfg, models, anchors) {
                        Ok(set) => cells.push((key, set)),
                        Err(e) => failed_cells.push((key, e.to_string())),
                    }
                    done += 1;
                    if done % 16 == 0 || done == total {
                        eprintln!("cells: {done}/{total}");
                    }
                }
            }
        }
    }

    write_manifest(cfg, &cells, &failed_cells)?;
    write_figures(cfg, &cells)?;
    stack::write_run_config(cfg, out)?;

    println!("cells = {}", cells.len());
    println!("failed_cells = {}", failed_cells.len());
    println!("out = {}", out.display());

    Ok(GridOutcome {
        cells,
        uncertain,
        failed_cells,
    })
}

fn write_manifest(
    cfg: &ExperimentConfig,
    cells: &[(CellKey, ClueSet)],
    failed: &[(CellKey, String)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(cfg.out.join("manifest.csv"))?;
    w.write_record([
        "delta",
        "loss",
        "scheme",
        "rank",
        "input_index",
        "n",
        "results",
        "accepted",
        "run_failures",
        "converged",
        "status",
    ])?;
    for (k, set) in cells {
        w.write_record(&[
            k.delta.to_string(),
            k.loss.to_string(),
            k.scheme.to_string(),
            k.rank.to_string(),
            k.input_index.to_string(),
            set.config.n.to_string(),
            set.results.len().to_string(),
            set.accepted_count().to_string(),
            set.failures.len().to_string(),
            set.results.iter().filter(|r| r.converged).count().to_string(),
            "ok".to_string(),
        ])?;
    }
    for (k, err) in failed {
        w.write_record(&[
            k.delta.to_string(),
            k.loss.to_string(),
            k.scheme.to_string(),
            k.rank.to_string(),
            k.input_index.to_string(),
            cfg.n.to_string(),
            "0".to_string(),
            "0".to_string(),
            cfg.n.to_string(),
            "0".to_string(),
            format!("error: {err}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct SliceStats {
    min_h: f64,
    avg_h: f64,
    max_h: f64,
    min_dx: f64,
    avg_dx: f64,
    max_dx: f64,
    best_cost_dx: f64,
    distinct: f64,
}

/// Means over the sets of a slice, of the per-set min/avg/max statistics.
fn slice_stats(sets: &[&ClueSet], filter: ResultFilter) -> Option<SliceStats> {
    let mut acc: Option<SliceStats> = None;
    let mut used = 0usize;
    for set in sets {
        let rs: Vec<_> = set
            .results
            .iter()
            .filter(|r| filter == ResultFilter::All || r.accepted)
            .collect();
        if rs.is_empty() {
            continue;
        }
        used += 1;
        let hs: Vec<f64> = rs.iter().map(|r| r.predictive.entropy).collect();
        let dxs: Vec<f64> = rs.iter().map(|r| r.input_distance).collect();
        let best = rs
            .iter()
            .min_by(|a, b| a.cost.total_cmp(&b.cost))
            .expect("nonempty");
        let report = label_entropy_curve(set, filter);
        let fold = |v: &[f64]| {
            (
                v.iter().cloned().fold(f64::INFINITY, f64::min),
                v.iter().sum::<f64>() / v.len() as f64,
                v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        let (hmin, havg, hmax) = fold(&hs);
        let (dmin, davg, dmax) = fold(&dxs);
        let s = acc.get_or_insert(SliceStats {
            min_h: 0.0,
            avg_h: 0.0,
            max_h: 0.0,
            min_dx: 0.0,
            avg_dx: 0.0,
            max_dx: 0.0,
            best_cost_dx: 0.0,
            distinct: 0.0,
        });
        s.min_h += hmin;
        s.avg_h += havg;
        s.max_h += hmax;
        s.min_dx += dmin;
        s.avg_dx += davg;
        s.max_dx += dmax;
        s.best_cost_dx += best.input_distance;
        s.distinct += report.distinct_labels as f64;
    }
    acc.map(|mut s| {
        let n = used as f64;
        s.min_h /= n;
        s.avg_h /= n;
        s.max_h /= n;
        s.min_dx /= n;
        s.avg_dx /= n;
        s.max_dx /= n;
        s.best_cost_dx /= n;
        s.distinct /= n;
        s
    })
}

fn filter_name(filter: ResultFilter) -> &'static str {
    match filter {
        ResultFilter::All => "all",
        ResultFilter::AcceptedOnly => "accepted",
    }
}

fn write_figures(cfg: &ExperimentConfig, cells: &[(CellKey, ClueSet)]) -> Result<()> {
    let out = &cfg.out;
    let delta_max = *cfg.delta_grid.last().expect("validated nonempty");

    let slice = |delta: f64, loss: LossVariant, scheme: SchemeTag| -> Vec<&ClueSet> {
        cells
            .iter()
            .filter(|(k, _)| k.delta == delta && k.loss == loss && k.scheme == scheme)
            .map(|(_, s)| s)
            .collect()
    };

    // Figure tables keyed by (δ, loss, scheme) and filter.
    let mut unc = csv::Writer::from_path(out.join("uncertainty_vs_delta.csv"))?;
    unc.write_record(["delta", "loss", "scheme", "filter", "min_mean", "avg_mean", "max_mean"])?;
    let mut dist = csv::Writer::from_path(out.join("distance_vs_delta.csv"))?;
    dist.write_record([
        "delta",
        "loss",
        "scheme",
        "filter",
        "min_mean",
        "avg_mean",
        "max_mean",
        "best_cost_dx_mean",
    ])?;
    let mut shell = csv::Writer::from_path(out.join("shell_vs_delta.csv"))?;
    shell.write_record([
        "delta",
        "loss",
        "scheme",
        "converged_frac",
        "on_shell_frac_converged",
        "mean_rho",
    ])?;
    let mut distinct = csv::Writer::from_path(out.join("distinct_labels.csv"))?;
    distinct.write_record(["delta", "loss", "scheme", "filter", "mean_distinct"])?;

    for &scheme in &cfg.schemes {
        for &loss in &cfg.losses {
            for &delta in &cfg.delta_grid {
                let sets = slice(delta, loss, scheme);
                if sets.is_empty() {
                    continue;
                }
                for filter in [ResultFilter::All, ResultFilter::AcceptedOnly] {
                    if let Some(s) = slice_stats(&sets, filter) {
                        unc.write_record(&[
                            delta.to_string(),
                            loss.to_string(),
                            scheme.to_string(),
                            filter_name(filter).to_string(),
                            s.min_h.to_string(),
                            s.avg_h.to_string(),
                            s.max_h.to_string(),
                        ])?;
                        dist.write_record(&[
                            delta.to_string(),
                            loss.to_string(),
                            scheme.to_string(),
                            filter_name(filter).to_string(),
                            s.min_dx.to_string(),
                            s.avg_dx.to_string(),
                            s.max_dx.to_string(),
                            s.best_cost_dx.to_string(),
                        ])?;
                        distinct.write_record(&[
                            delta.to_string(),
                            loss.to_string(),
                            scheme.to_string(),
                            filter_name(filter).to_string(),
                            s.distinct.to_string(),
                        ])?;
                    }
                }
                let all: Vec<_> = sets.iter().flat_map(|s| &s.results).collect();
                let converged = all.iter().filter(|r| r.converged).count();
                let on_shell_conv = all.iter().filter(|r| r.converged && r.on_shell).count();
                let mean_rho =
                    all.iter().map(|r| r.latent_distance).sum::<f64>() / all.len().max(1) as f64;
                shell.write_record(&[
                    delta.to_string(),
                    loss.to_string(),
                    scheme.to_string(),
                    (converged as f64 / all.len().max(1) as f64).to_string(),
                    (if converged > 0 {
                        on_shell_conv as f64 / converged as f64
                    } else {
                        0.0
                    })
                    .to_string(),
                    mean_rho.to_string(),
                ])?;
            }
        }
    }
    unc.flush()?;
    dist.flush()?;
    shell.flush()?;
    distinct.flush()?;

    // Entropy prefix curves for every cell; mode curves at δ_max.
    let mut curves = csv::Writer::from_path(out.join("entropy_curves.csv"))?;
    curves.write_record([
        "delta",
        "loss",
        "scheme",
        "rank",
        "k",
        "label_entropy",
        "mode_entropy",
    ])?;
    for (k, set) in cells {
        let with_modes = k.delta == delta_max;
        let report = if with_modes {
            diversity_report(set, ResultFilter::All, set.config.seed)
        } else {
            label_entropy_curve(set, ResultFilter::All)
        };
        for (i, (kk, le)) in report.entropy_curve.iter().enumerate() {
            let me = report
                .mode_entropy_curve
                .get(i)
                .map(|(_, m)| m.to_string())
                .unwrap_or_default();
            curves.write_record(&[
                k.delta.to_string(),
                k.loss.to_string(),
                k.scheme.to_string(),
                k.rank.to_string(),
                kk.to_string(),
                le.to_string(),
                me,
            ])?;
        }
    }
    curves.flush()?;

    // Label distributions from minimum costs, at δ_max.
    let mut dists = csv::Writer::from_path(out.join("label_distributions.csv"))?;
    dists.write_record(["loss", "scheme", "rank", "class", "probability"])?;
    for (k, set) in cells.iter().filter(|(k, _)| k.delta == delta_max) {
        let stats = analysis::class_stats(set, set.config.lambda_x, ResultFilter::All);
        let ld = analysis::label_distribution(&stats);
        for class in 0..cfg.n_classes {
            dists.write_record(&[
                k.loss.to_string(),
                k.scheme.to_string(),
                k.rank.to_string(),
                class.to_string(),
                ld.prob(class).to_string(),
            ])?;
        }
    }
    dists.flush()?;

    write_charts(cfg, cells)?;
    Ok(())
}

fn write_charts(cfg: &ExperimentConfig, cells: &[(CellKey, ClueSet)]) -> Result<()> {
    let out = cfg.out.join("charts");
    let delta_max = *cfg.delta_grid.last().expect("validated nonempty");

    let slice = |delta: f64, loss: LossVariant, scheme: SchemeTag| -> Vec<&ClueSet> {
        cells
            .iter()
            .filter(|(k, _)| k.delta == delta && k.loss == loss && k.scheme == scheme)
            .map(|(_, s)| s)
            .collect()
    };

    let series_over_delta = |f: &dyn Fn(&SliceStats) -> f64| -> Vec<Series> {
        let mut out_series = Vec::new();
        for &scheme in &cfg.schemes {
            for &loss in &cfg.losses {
                let pts: Vec<(f64, f64)> = cfg
                    .delta_grid
                    .iter()
                    .filter_map(|&d| {
                        slice_stats(&slice(d, loss, scheme), ResultFilter::All)
                            .map(|s| (d, f(&s)))
                    })
                    .collect();
                if !pts.is_empty() {
                    out_series.push(Series::new(format!("{loss} {scheme}"), pts));
                }
            }
        }
        out_series
    };

    let mut chart = Chart::new("best uncertainty vs delta", "delta", "min entropy (nats)");
    for s in series_over_delta(&|s| s.min_h) {
        chart.push(s);
    }
    write_svg(out.join("min_uncertainty_vs_delta.svg"), &chart.render_svg())?;

    let mut chart = Chart::new("average uncertainty vs delta", "delta", "mean entropy (nats)");
    for s in series_over_delta(&|s| s.avg_h) {
        chart.push(s);
    }
    write_svg(out.join("avg_uncertainty_vs_delta.svg"), &chart.render_svg())?;

    let mut chart = Chart::new(
        "distance of best-cost explanation vs delta",
        "delta",
        "l1 input distance",
    );
    for s in series_over_delta(&|s| s.best_cost_dx) {
        chart.push(s);
    }
    write_svg(out.join("best_distance_vs_delta.svg"), &chart.render_svg())?;

    let mut chart = Chart::new("average distance vs delta", "delta", "l1 input distance");
    for s in series_over_delta(&|s| s.avg_dx) {
        chart.push(s);
    }
    write_svg(out.join("avg_distance_vs_delta.svg"), &chart.render_svg())?;

    let mut chart = Chart::new("distinct labels vs delta", "delta", "mean distinct labels");
    for s in series_over_delta(&|s| s.distinct) {
        chart.push(s);
    }
    write_svg(out.join("distinct_labels_vs_delta.svg"), &chart.render_svg())?;

    // Shell proportion and mean final radius.
    let mut shell_chart = Chart::new(
        "on-shell proportion vs delta (converged runs)",
        "delta",
        "proportion",
    );
    let mut rho_chart = Chart::new("mean final latent distance vs delta", "delta", "mean rho");
    for &scheme in &cfg.schemes {
        for &loss in &cfg.losses {
            let mut shell_pts = Vec::new();
            let mut rho_pts = Vec::new();
            for &d in &cfg.delta_grid {
                let sets = slice(d, loss, scheme);
                let all: Vec<_> = sets.iter().flat_map(|s| &s.results).collect();
                if all.is_empty() {
                    continue;
                }
                let converged: Vec<_> = all.iter().filter(|r| r.converged).collect();
                if !converged.is_empty() {
                    let frac = converged.iter().filter(|r| r.on_shell).count() as f64
                        / converged.len() as f64;
                    shell_pts.push((d, frac));
                }
                rho_pts.push((
                    d,
                    all.iter().map(|r| r.latent_distance).sum::<f64>() / all.len() as f64,
                ));
            }
            shell_chart.push(Series::new(format!("{loss} {scheme}"), shell_pts));
            rho_chart.push(Series::new(format!("{loss} {scheme}"), rho_pts));
        }
    }
    rho_chart.push(
        Series::new(
            "rho = delta",
            cfg.delta_grid.iter().map(|&d| (d, d)).collect(),
        )
        .dashed(),
    );
    write_svg(out.join("shell_proportion_vs_delta.svg"), &shell_chart.render_svg())?;
    write_svg(out.join("mean_rho_vs_delta.svg"), &rho_chart.render_svg())?;

    // Entropy saturation curves at δ_max for the first loss/scheme pair.
    let loss = cfg.losses[0];
    let scheme = cfg.schemes[0];
    let mut chart = Chart::new(
        "label-entropy saturation (largest delta)",
        "explanations",
        "entropy (nats)",
    );
    for (k, set) in cells
        .iter()
        .filter(|(k, _)| k.delta == delta_max && k.loss == loss && k.scheme == scheme)
    {
        let report = label_entropy_curve(set, ResultFilter::All);
        chart.push(Series::new(
            format!("input {}", k.rank),
            report
                .entropy_curve
                .iter()
                .map(|&(kk, h)| (kk as f64, h))
                .collect(),
        ));
    }
    write_svg(out.join("entropy_curves.svg"), &chart.render_svg())?;
    Ok(())
}
