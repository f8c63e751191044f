//! `clue explain`: run the search for one uncertain input and write the
//! full explanation set (CSV + vector sidecar + annotated gallery), the
//! per-class statistics, and the label distribution.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use clue_core::analysis::{
    self, diversity_report, label_distribution, write_class_stats_csv, write_entropy_curve_csv,
    write_label_distribution_csv, ResultFilter,
};
use clue_core::data::most_uncertain;
use clue_core::schemes::{AnchorIndex, SchemeTag};
use clue_core::search::{clue_set_vectors, search, write_clue_set_csv};
use clue_core::util::derive_seed;

use crate::config::ExperimentConfig;
use crate::gallery::render_gallery;
use crate::stack::{self, Stack, STREAM_ANCHORS, STREAM_UNCERTAIN};
use crate::{chart, write_svg};

pub struct ExplainArgs {
    /// Rank among the most uncertain test inputs.
    pub rank: usize,
    /// Explicit dataset index (overrides the rank).
    pub input_index: Option<usize>,
}

pub fn run(cfg: &ExperimentConfig, args: &ExplainArgs) -> Result<()> {
    let stack = stack::load_stack(cfg)?;
    let (models, test) = (stack.models(), &stack.test);

    let (input_index, rank) = match args.input_index {
        Some(idx) => {
            if idx >= test.len() {
                bail!("input index {idx} outside the test set (len {})", test.len());
            }
            (idx, None)
        }
        None => {
            let count = cfg.uncertain_count.max(args.rank + 1);
            let ranked = most_uncertain(
                test,
                &stack.bnn,
                count,
                derive_seed(cfg.seed, STREAM_UNCERTAIN),
            )?;
            (ranked[args.rank].0, Some(args.rank))
        }
    };
    let x0 = &test.inputs[input_index];

    let anchors = build_anchors_if_needed(cfg, &stack, x0, cfg.scheme)?;
    let scfg = stack::cell_search_config(cfg, cfg.delta, cfg.loss, cfg.scheme, rank.unwrap_or(0));
    eprintln!(
        "searching: input {input_index} (rank {:?}), delta {}, loss {}, scheme {}, n {}",
        rank, cfg.delta, cfg.loss, cfg.scheme, cfg.n
    );
    let set = search(x0, &scfg, models, anchors.as_ref())?;

    let out = &cfg.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut csv_buf = Vec::new();
    write_clue_set_csv(&set, &mut csv_buf)?;
    std::fs::write(out.join("clue_set.csv"), &csv_buf)?;
    clue_set_vectors(&set).save(out.join("clue_set_vectors.ckpt"))?;
    write_svg(out.join("gallery.svg"), &render_gallery(&set, test.rows, test.cols))?;

    // Original digit and its predictive distribution.
    let png = crate::gallery::png_data_uri(x0, test.rows, test.cols);
    let raw = png.strip_prefix("data:image/png;base64,").unwrap();
    use base64::Engine;
    std::fs::write(
        out.join("original.png"),
        base64::engine::general_purpose::STANDARD.decode(raw)?,
    )?;
    let mut w = csv::Writer::from_path(out.join("original_predictions.csv"))?;
    w.write_record(["class", "probability"])?;
    for (class, p) in set.origin.predictive.probs.iter().enumerate() {
        w.write_record(&[class.to_string(), p.to_string()])?;
    }
    w.flush()?;

    // Diversity, per-class stats, and the inverse-square label distribution.
    let report = diversity_report(&set, ResultFilter::All, scfg.seed);
    let mut buf = Vec::new();
    write_entropy_curve_csv(&report, &mut buf)?;
    std::fs::write(out.join("entropy_curve.csv"), &buf)?;

    let stats = analysis::class_stats(&set, scfg.lambda_x, ResultFilter::All);
    let mut buf = Vec::new();
    write_class_stats_csv(&stats, &mut buf)?;
    std::fs::write(out.join("class_stats.csv"), &buf)?;

    let dist = label_distribution(&stats);
    let mut buf = Vec::new();
    write_label_distribution_csv(&dist, cfg.n_classes, &mut buf)?;
    std::fs::write(out.join("label_distribution.csv"), &buf)?;
    let bars: Vec<(String, f64)> = (0..cfg.n_classes)
        .map(|c| (c.to_string(), dist.prob(c)))
        .collect();
    write_svg(
        out.join("label_distribution.svg"),
        &chart::render_bars("label distribution from explanation costs", "probability", &bars),
    )?;
    let orig_bars: Vec<(String, f64)> = set
        .origin
        .predictive
        .probs
        .iter()
        .enumerate()
        .map(|(c, &p)| (c.to_string(), p))
        .collect();
    write_svg(
        out.join("original_predictions.svg"),
        &chart::render_bars("original predictive distribution", "probability", &orig_bars),
    )?;

    stack::write_run_config(cfg, out)?;

    println!("input_index = {input_index}");
    println!("origin_entropy = {:.4}", set.origin.predictive.entropy);
    println!("results = {}", set.results.len());
    println!("accepted = {}", set.accepted_count());
    println!("failures = {}", set.failures.len());
    println!("distinct_labels = {}", report.distinct_labels);
    println!("out = {}", out.display());
    Ok(())
}

pub fn build_anchors_if_needed(
    cfg: &ExperimentConfig,
    stack: &Stack,
    x0: &[f64],
    scheme: SchemeTag,
) -> Result<Option<BTreeMap<usize, Vec<f64>>>> {
    if scheme != SchemeTag::S2 {
        return Ok(None);
    }
    let index = AnchorIndex::build(
        &stack.train,
        &stack.vae,
        &stack.bnn,
        cfg.anchor_entropy,
        derive_seed(cfg.seed, STREAM_ANCHORS),
    )?;
    let z0 = stack.vae.encode(x0)?;
    Ok(Some(index.anchors_for(&z0)))
}
