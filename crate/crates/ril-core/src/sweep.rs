//! Noise-rate sweeps: run a (method x noise-rate x seed) grid, aggregate
//! final returns per cell, and emit the combined CSV.
//!
//! Grid cells run in parallel; every cell derives its own dataset and
//! training seeds from the spec, so results are independent of thread
//! count and scheduling order.

use std::fmt::Write as _;

use crate::demo::generate_noisy_dataset;
use crate::error::{Error, Result};
use crate::mdp::{occupancy_exact, snapshot_policies, MdpSpec, NormalizationMode};
use crate::parallel::par_map;
use crate::trainer::{train, EvalContext, Method, TrainRecord, TrainerConfig};
use crate::verify::average_nonexpert_density;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetProfile {
    Desk,
    PaperFaithful,
}

impl BudgetProfile {
    pub fn token(&self) -> &'static str {
        match self {
            BudgetProfile::Desk => "desk",
            BudgetProfile::PaperFaithful => "paper-faithful",
        }
    }

    pub fn from_token(token: &str) -> Result<BudgetProfile> {
        match token {
            "desk" => Ok(BudgetProfile::Desk),
            "paper-faithful" => Ok(BudgetProfile::PaperFaithful),
            other => Err(Error::domain(format!("unknown budget profile `{other}`"))),
        }
    }

    pub fn default_n_expert(&self) -> usize {
        match self {
            BudgetProfile::Desk => 2000,
            BudgetProfile::PaperFaithful => 10_000,
        }
    }

    pub fn base_config(&self, method: Method) -> TrainerConfig {
        match self {
            BudgetProfile::Desk => TrainerConfig::desk(method),
            BudgetProfile::PaperFaithful => TrainerConfig::paper_faithful(method),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub noise_rates: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub profile: BudgetProfile,
    pub n_expert: usize,
    pub iterations: usize,
    pub temperatures: Vec<f64>,
}

impl SweepSpec {
    pub fn new(methods: Vec<Method>, profile: BudgetProfile) -> SweepSpec {
        SweepSpec {
            noise_rates: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            methods,
            seeds: vec![1, 2, 3, 4, 5],
            profile,
            n_expert: profile.default_n_expert(),
            iterations: profile.base_config(Method::RilCo).iterations,
            temperatures: crate::gridworld::DEFAULT_TEMPERATURES.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invariant("sweep needs at least one method"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invariant("sweep needs at least one seed"));
        }
        if self.noise_rates.is_empty() {
            return Err(Error::invariant("sweep needs at least one noise rate"));
        }
        for &d in &self.noise_rates {
            if !(0.0..0.5).contains(&d) {
                return Err(Error::invariant(format!(
                    "noise rates must lie in [0, 0.5), got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// One grid cell's outcome.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub delta: f64,
    pub seed: u64,
    /// Final mean return, or the error message of a failed run.
    pub outcome: std::result::Result<f64, String>,
    pub record: Option<TrainRecord>,
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub method: Method,
    pub delta: f64,
    pub mean_return: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub expert_return: f64,
}

/// Dataset seed for a grid cell; methods share the dataset of their
/// (noise rate, seed) pair, mirroring a shared benchmark corpus.
pub fn dataset_seed(delta: f64, seed: u64) -> u64 {
    let bits = delta.to_bits();
    let mut z = seed ^ bits.rotate_left(17) ^ 0x5ee9_d5;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Run the whole grid. Individual run failures are recorded in their cell
/// and do not abort the sweep.
pub fn run_sweep(mdp: &MdpSpec, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let snapshots = snapshot_policies(mdp, &spec.temperatures)?;
    let expert_return = crate::mdp::expected_return(mdp, &snapshots[0])?;
    let eval = EvalContext {
        rho_e: occupancy_exact(mdp, &snapshots[0], NormalizationMode::InfiniteHorizon)?,
        rho_n: average_nonexpert_density(mdp, &snapshots)?,
    };

    let mut grid = Vec::new();
    for &method in &spec.methods {
        for &delta in &spec.noise_rates {
            for &seed in &spec.seeds {
                grid.push((method, delta, seed));
            }
        }
    }
    let cells = par_map(grid.len(), |i| {
        let (method, delta, seed) = grid[i];
        let run = || -> Result<(f64, TrainRecord)> {
            let dataset =
                generate_noisy_dataset(mdp, &snapshots, spec.n_expert, delta, dataset_seed(delta, seed))?;
            let mut cfg = spec.profile.base_config(method);
            cfg.seed = seed;
            cfg.iterations = spec.iterations;
            let (_, record) = train(mdp, &dataset, &cfg, Some(&eval))?;
            Ok((record.final_mean_return, record))
        };
        match run() {
            Ok((final_return, record)) => CellResult {
                method,
                delta,
                seed,
                outcome: Ok(final_return),
                record: Some(record),
            },
            Err(e) => CellResult {
                method,
                delta,
                seed,
                outcome: Err(e.to_string()),
                record: None,
            },
        }
    });

    let mut aggregates = Vec::new();
    for &method in &spec.methods {
        for &delta in &spec.noise_rates {
            let finals: Vec<f64> = cells
                .iter()
                .filter(|c| c.method == method && c.delta == delta)
                .filter_map(|c| c.outcome.as_ref().ok().copied())
                .collect();
            if finals.is_empty() {
                continue;
            }
            let n = finals.len();
            let mean = finals.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var =
                    finals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            aggregates.push(Aggregate { method, delta, mean_return: mean, stderr, n_seeds: n });
        }
    }
    Ok(SweepResult { cells, aggregates, expert_return })
}

/// Combined CSV: one `run` row per grid cell (failed cells carry an empty
/// return), then one `aggregate` row per (method, noise rate).
pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::from("row,method,delta,seed,mean_return,stderr,n_seeds\n");
    for c in &result.cells {
        let value = match &c.outcome {
            Ok(v) => format!("{v}"),
            Err(_) => String::new(),
        };
        let _ = writeln!(out, "run,{},{},{},{value},,", c.method, c.delta, c.seed);
    }
    for a in &result.aggregates {
        let _ = writeln!(
            out,
            "aggregate,{},{},,{},{},{}",
            a.method, a.delta, a.mean_return, a.stderr, a.n_seeds
        );
    }
    out
}

/// Recompute an aggregate table from per-cell finals (used by the report
/// command to cross-check persisted sweeps).
pub fn aggregate_from_cells(
    cells: &[(Method, f64, u64, f64)],
) -> Vec<Aggregate> {
    let mut seen: Vec<(Method, f64)> = Vec::new();
    for &(m, d, _, _) in cells {
        if !seen.iter().any(|&(sm, sd)| sm == m && sd == d) {
            seen.push((m, d));
        }
    }
    seen.into_iter()
        .map(|(method, delta)| {
            let finals: Vec<f64> = cells
                .iter()
                .filter(|&&(m, d, _, _)| m == method && d == delta)
                .map(|&(_, _, _, r)| r)
                .collect();
            let n = finals.len();
            let mean = finals.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = finals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            Aggregate { method, delta, mean_return: mean, stderr, n_seeds: n }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld;

    #[test]
    fn tiny_sweep_runs_and_serializes() {
        let mdp = gridworld::benchmark();
        let mut spec = SweepSpec::new(vec![Method::Bc, Method::GailLogistic], BudgetProfile::Desk);
        spec.noise_rates = vec![0.0, 0.4];
        spec.seeds = vec![1, 2];
        spec.n_expert = 300;
        spec.iterations = 30;
        let result = run_sweep(&mdp, &spec).unwrap();
        assert_eq!(result.cells.len(), 2 * 2 * 2);
        assert_eq!(result.aggregates.len(), 2 * 2);
        assert!(result.cells.iter().all(|c| c.outcome.is_ok()));

        let csv = sweep_to_csv(&result);
        let rows: Vec<&str> = csv.lines().collect();
        // header + runs + aggregates
        assert_eq!(rows.len(), 1 + 8 + 4);

        // determinism: identical spec, identical CSV
        let again = run_sweep(&mdp, &spec).unwrap();
        assert_eq!(csv, sweep_to_csv(&again));
    }

    #[test]
    fn aggregates_match_recompute() {
        let mdp = gridworld::benchmark();
        let mut spec = SweepSpec::new(vec![Method::Bc], BudgetProfile::Desk);
        spec.noise_rates = vec![0.0, 0.2];
        spec.seeds = vec![1, 2, 3];
        spec.n_expert = 200;
        spec.iterations = 5;
        let result = run_sweep(&mdp, &spec).unwrap();
        let cells: Vec<(Method, f64, u64, f64)> = result
            .cells
            .iter()
            .map(|c| (c.method, c.delta, c.seed, *c.outcome.as_ref().unwrap()))
            .collect();
        let recomputed = aggregate_from_cells(&cells);
        for a in &result.aggregates {
            let r = recomputed
                .iter()
                .find(|r| r.method == a.method && r.delta == a.delta)
                .unwrap();
            assert!((a.mean_return - r.mean_return).abs() < 1e-12);
            assert!((a.stderr - r.stderr).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        let spec = SweepSpec::new(vec![], BudgetProfile::Desk);
        assert!(spec.validate().is_err());
        let mut spec = SweepSpec::new(vec![Method::Bc], BudgetProfile::Desk);
        spec.noise_rates = vec![0.7];
        assert!(spec.validate().is_err());
    }
}
