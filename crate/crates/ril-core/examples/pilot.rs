//! Exploratory run used to calibrate desk-scale defaults. Not part of the
//! test suite; run with `cargo run --release -p ril-core --example pilot`.

use ril_core::demo::generate_noisy_dataset;
use ril_core::gridworld;
use ril_core::mdp::{expected_return, occupancy_exact, snapshot_policies, NormalizationMode};
use ril_core::sweep::dataset_seed;
use ril_core::trainer::{train, EvalContext, Method, TrainerConfig};
use ril_core::verify::average_nonexpert_density;

fn main() {
    let mdp = gridworld::benchmark();
    let snaps = snapshot_policies(&mdp, &gridworld::DEFAULT_TEMPERATURES).unwrap();
    println!("snapshot returns:");
    let mut expert_return = 0.0;
    for (i, s) in snaps.iter().enumerate() {
        let r = expected_return(&mdp, s).unwrap();
        if i == 0 {
            expert_return = r;
        }
        println!("  #{i} temp={} return={r:.4}", gridworld::DEFAULT_TEMPERATURES[i]);
    }
    let mean_nonexpert: f64 = snaps[1..]
        .iter()
        .map(|s| expected_return(&mdp, s).unwrap())
        .sum::<f64>()
        / 5.0;
    println!("expert={expert_return:.4} mean_nonexpert={mean_nonexpert:.4} ratio={:.3}", mean_nonexpert / expert_return);

    let eval = EvalContext {
        rho_e: occupancy_exact(&mdp, &snaps[0], NormalizationMode::InfiniteHorizon).unwrap(),
        rho_n: average_nonexpert_density(&mdp, &snaps).unwrap(),
    };

    let args: Vec<String> = std::env::args().collect();
    let step: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let rl: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let temp: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let batch_d: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);
    let only: Option<String> = args.get(6).cloned();
    let wd: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let rl_mode = match args.get(8).map(String::as_str) {
        Some("reinforce") => ril_core::trainer::RlMode::Reinforce,
        _ => ril_core::trainer::RlMode::Exact,
    };
    println!("classifier_step={step} rl_step={rl} policy_temp={temp} iterations={iters} batch_d={batch_d} wd={wd} mode={rl_mode:?}");

    let variants: Vec<(&str, Method, bool)> = vec![
        ("ril-co", Method::RilCo, false),
        ("ril-co-logistic", Method::RilCo, true),
        ("ril-p", Method::RilP, false),
        ("gail-logistic", Method::GailLogistic, false),
        ("gail-ap", Method::GailAp, false),
        ("gail-unhinged", Method::GailUnhinged, false),
        ("bc", Method::Bc, false),
    ];
    for (name, method, logistic_override) in variants {
        if let Some(filter) = &only {
            if !filter.split(',').any(|f| f == name) {
                continue;
            }
        }
        for delta in [0.0, 0.2, 0.4] {
            let t0 = std::time::Instant::now();
            let mut finals = Vec::new();
            let mut kappas = Vec::new();
            let mut precisions = Vec::new();
            let seeds = 1..=5u64;
            let n_seeds = 5;
            for seed in seeds {
                let dataset =
                    generate_noisy_dataset(&mdp, &snaps, 2000, delta, dataset_seed(delta, seed))
                        .unwrap();
                let mut cfg = TrainerConfig::desk(method);
                cfg.seed = seed;
                cfg.iterations = iters;
                cfg.classifier_step = step;
                cfg.rl_step = rl;
                cfg.policy_temperature = temp;
                cfg.batch_d = batch_d;
                cfg.weight_decay = wd;
                cfg.rl_mode = rl_mode;
                if logistic_override {
                    cfg.loss = ril_core::loss::LossSpec::new(ril_core::loss::LossKind::Logistic);
                    cfg.allow_nonsymmetric = true;
                }
                let (_, record) = train(&mdp, &dataset, &cfg, Some(&eval)).unwrap();
                finals.push(record.final_mean_return);
                if let Some(row) = record.rows.last() {
                    if let Some((k, _)) = row.kappa {
                        kappas.push(k);
                    }
                    if let Some(p) = row.pseudo_precision {
                        precisions.push(p);
                    }
                }
            }
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            let stderr = if finals.len() > 1 {
                let var = finals.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                    / (finals.len() - 1) as f64;
                (var / finals.len() as f64).sqrt()
            } else {
                0.0
            };
            let frac = 100.0 * mean / expert_return;
            let kap = if kappas.is_empty() {
                "-".to_string()
            } else {
                format!("{:.2}", kappas.iter().sum::<f64>() / kappas.len() as f64)
            };
            let prec = if precisions.is_empty() {
                "-".to_string()
            } else {
                format!("{:.2}", precisions.iter().sum::<f64>() / precisions.len() as f64)
            };
            println!(
                "  {name:<16} delta={delta:.1} final={mean:.4}+-{stderr:.4} ({frac:>5.1}% of expert) kappa={kap} prec={prec} [{:?}/run]",
                t0.elapsed() / n_seeds
            );
        }
    }
}
