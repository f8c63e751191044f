//! `clue robustness`: normalized distance under pixel translations of one
//! digit, for all four metric tags, in three shift directions.

use anyhow::{bail, Context, Result};
use clue_core::analysis::{translation_robustness, write_robustness_csv, RobustnessMetric};

use crate::chart::{Chart, Series};
use crate::config::ExperimentConfig;
use crate::stack;
use crate::write_svg;

pub struct RobustnessArgs {
    pub input_index: usize,
}

const MAX_SHIFT: i64 = 10;

pub fn run(cfg: &ExperimentConfig, args: &RobustnessArgs) -> Result<()> {
    let stack = stack::load_stack(cfg)?;
    let test = &stack.test;
    if args.input_index >= test.len() {
        bail!(
            "input index {} outside the test set (len {})",
            args.input_index,
            test.len()
        );
    }
    let x = &test.inputs[args.input_index];
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))?;

    let directions: [(&str, i64, i64); 3] =
        [("horizontal", 1, 0), ("vertical", 0, 1), ("diagonal", 1, 1)];

    let mut all_rows: Vec<(String, i64, Vec<f64>)> = Vec::new();
    for (name, ux, uy) in directions {
        let shifts: Vec<(i64, i64)> = (0..=MAX_SHIFT).map(|t| (t * ux, t * uy)).collect();
        let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
        for metric in RobustnessMetric::ALL {
            let curve = translation_robustness(
                x,
                test.rows,
                test.cols,
                metric,
                &shifts,
                Some(&stack.vae),
            )?;
            curves.push((metric.to_string(), curve));
        }

        let mut buf = Vec::new();
        write_robustness_csv(&shifts, &curves, &mut buf)?;
        std::fs::write(cfg.out.join(format!("robustness_{name}.csv")), &buf)?;

        let mut chart = Chart::new(
            format!("translation robustness ({name})"),
            "shift (pixels)",
            "normalized distance",
        );
        for (metric, curve) in &curves {
            chart.push(Series::new(
                metric.clone(),
                curve
                    .iter()
                    .enumerate()
                    .map(|(t, &v)| (t as f64, v))
                    .collect(),
            ));
        }
        write_svg(
            cfg.out.join(format!("robustness_{name}.svg")),
            &chart.render_svg(),
        )?;

        for (t, _) in shifts.iter().enumerate() {
            all_rows.push((
                name.to_string(),
                t as i64,
                curves.iter().map(|(_, c)| c[t]).collect(),
            ));
        }
    }

    // Combined table across directions.
    let mut w = csv::Writer::from_path(cfg.out.join("robustness.csv"))?;
    let mut header = vec!["direction".to_string(), "shift".to_string()];
    header.extend(RobustnessMetric::ALL.iter().map(ToString::to_string));
    w.write_record(&header)?;
    for (direction, shift, values) in &all_rows {
        let mut row = vec![direction.clone(), shift.to_string()];
        row.extend(values.iter().map(ToString::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;

    stack::write_run_config(cfg, &cfg.out)?;
    println!("input_index = {}", args.input_index);
    println!("out = {}", cfg.out.display());
    Ok(())
}
