use clue_core::data::{most_uncertain, synthetic, Split};
use clue_core::models::{BnnArchitecture, VaeArchitecture};
use clue_core::schemes::{AnchorIndex, SchemeTag, DEFAULT_ANCHOR_ENTROPY};
use clue_core::search::{search, Models, SearchConfig};
use clue_core::training::{train_bnn, train_vae, TrainConfig};
use std::time::Instant;

fn main() {
    let t_all = Instant::now();
    let train = synthetic::generate(10_000, 7, Split::Train);
    let test = synthetic::generate(2_000, 8, Split::Test);
    let cfg = TrainConfig { epochs: 10, seed: 0, ..Default::default() };
    let t0 = Instant::now();
    let bnn = train_bnn(&train, &test, BnnArchitecture::default(), &cfg).unwrap();
    println!("bnn acc {:.4} ({:.0}s)", bnn.heldout_accuracy, t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let vae = train_vae(&train, &test, VaeArchitecture::default(), &cfg).unwrap();
    println!("vae recon {:.5}/{:.5} ({:.0}s)", vae.train_recon_l1, vae.heldout_recon_l1, t0.elapsed().as_secs_f64());
    let models = Models { vae: &vae.model, bnn: &bnn.model };

    let t0 = Instant::now();
    let uncertain = most_uncertain(&test, &bnn.model, 8, 42).unwrap();
    println!("top-8 entropies: {:?} ({:.0}s)", uncertain.iter().map(|(_, o)| (o.entropy * 100.0).round() / 100.0).collect::<Vec<_>>(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let anchor_index = AnchorIndex::build(&train, &vae.model, &bnn.model, DEFAULT_ANCHOR_ENTROPY, 43).unwrap();
    println!("anchor candidates: {} ({:.0}s)", anchor_index.len(), t0.elapsed().as_secs_f64());

    let n = 25usize;
    for &(loss_name, lambda_x) in &[("L_H", 0.0), ("L_H+d", 0.03)] {
        for &delta in &[0.5, 1.5, 2.5, 3.5] {
            let t0 = Instant::now();
            let mut min_h = Vec::new();
            let mut dx_best = Vec::new();
            let mut dx_mean = Vec::new();
            let mut shell = (0usize, 0usize); // (on_shell converged, converged)
            let mut distinct = Vec::new();
            let mut steps_total = 0usize;
            let mut mean_rho = Vec::new();
            for (idx, _) in &uncertain {
                let scfg = SearchConfig {
                    delta, lambda_x, lambda_y: 0.0, n, scheme: SchemeTag::S1,
                    seed: 100 + *idx as u64, ..Default::default()
                };
                let set = search(&test.inputs[*idx], &scfg, models, None).unwrap();
                assert!(set.failures.is_empty());
                let best = set.results.iter().min_by(|a, b| a.cost.total_cmp(&b.cost)).unwrap();
                min_h.push(set.results.iter().map(|r| r.predictive.entropy).fold(f64::INFINITY, f64::min));
                dx_best.push(best.input_distance);
                dx_mean.push(set.results.iter().map(|r| r.input_distance).sum::<f64>() / n as f64);
                for r in &set.results {
                    steps_total += r.steps;
                    if r.converged { shell.1 += 1; if r.on_shell { shell.0 += 1; } }
                }
                mean_rho.push(set.results.iter().map(|r| r.latent_distance).sum::<f64>() / n as f64);
                let mut labels: Vec<usize> = set.results.iter().map(|r| r.predictive.label).collect();
                labels.sort_unstable(); labels.dedup();
                distinct.push(labels.len());
            }
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!("{loss_name} δ={delta}: minH {:.3} dxbest {:.1} dxmean {:.1} shell {}/{} distinct {:.1} rho {:.2} steps/run {:.0} ({:.0}s)",
                avg(&min_h), avg(&dx_best), avg(&dx_mean),
                shell.0, shell.1,
                distinct.iter().sum::<usize>() as f64 / 8.0,
                avg(&mean_rho),
                steps_total as f64 / (8 * n) as f64,
                t0.elapsed().as_secs_f64());
        }
    }
    println!("total {:.0}s", t_all.elapsed().as_secs_f64());
}
