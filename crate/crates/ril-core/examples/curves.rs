//! Dump per-iteration diagnostics for one run per method at a chosen
//! noise rate. Calibration aid, not part of the test suite.

use ril_core::demo::generate_noisy_dataset;
use ril_core::gridworld;
use ril_core::mdp::{occupancy_exact, snapshot_policies, NormalizationMode};
use ril_core::sweep::dataset_seed;
use ril_core::trainer::{train, EvalContext, Method, TrainerConfig};
use ril_core::verify::average_nonexpert_density;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let delta: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let step: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let batch_d: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(256);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);

    let mdp = gridworld::benchmark();
    let snaps = snapshot_policies(&mdp, &gridworld::DEFAULT_TEMPERATURES).unwrap();
    let eval = EvalContext {
        rho_e: occupancy_exact(&mdp, &snaps[0], NormalizationMode::InfiniteHorizon).unwrap(),
        rho_n: average_nonexpert_density(&mdp, &snaps).unwrap(),
    };
    for method in [Method::RilCo, Method::RilP] {
        let dataset =
            generate_noisy_dataset(&mdp, &snaps, 2000, delta, dataset_seed(delta, seed)).unwrap();
        let mut cfg = TrainerConfig::desk(method);
        cfg.seed = seed;
        cfg.classifier_step = step;
        cfg.batch_d = batch_d;
        let (_, record) = train(&mdp, &dataset, &cfg, Some(&eval)).unwrap();
        println!("== {method} delta={delta} seed={seed} final={:.4}", record.final_mean_return);
        println!("iter,true_return,pseudo_size,precision,kappa,risk_total");
        for row in record.rows.iter().step_by(100) {
            println!(
                "{},{:.4},{},{},{:.3},{:.4}",
                row.iteration,
                row.true_return,
                row.pseudo_size,
                row.pseudo_precision.map(|p| format!("{p:.2}")).unwrap_or_default(),
                row.kappa.map(|(k, _)| k).unwrap_or(f64::NAN),
                row.report.as_ref().map(|r| r.total).unwrap_or(f64::NAN),
            );
        }
    }
}
