//! Wall-clock comparison of the exact and entropic solvers on seeded
//! random instances.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::costs::{euclidean_costs, CostPower};
use crate::domain::{CostMatrix, Location, LocationSet};
use crate::entropic::{sinkhorn_masses, SinkhornConfig};
use crate::error::Result;
use crate::exact::{solve_transport, ExactSolverConfig};
use crate::report::SolverKind;
use crate::synthetic::rng_for;

/// Uniform points on `[0, 100]^2` with masses in `[1, 10)`; observations
/// are rescaled to the predicted total.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub costs: CostMatrix,
    pub pred: Vec<f64>,
    pub obs: Vec<f64>,
}

pub fn random_instance(n: usize, seed: u64) -> Result<RandomInstance> {
    let mut rng = rng_for(seed);
    let locs = LocationSet::new(
        (0..n)
            .map(|i| Location::xy(format!("p{i}"), rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0))
            .collect(),
    )?;
    let pred: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let mut obs: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let factor = pred.iter().sum::<f64>() / obs.iter().sum::<f64>();
    obs.iter_mut().for_each(|m| *m *= factor);
    Ok(RandomInstance {
        costs: euclidean_costs(&locs, CostPower::One)?,
        pred,
        obs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RuntimeRow {
    pub n: usize,
    pub solver: SolverKind,
    pub median_ms: f64,
    pub p90_ms: f64,
    /// Repetitions slower than the per-solve budget.
    pub over_budget: usize,
    /// Repetitions that errored or, for Sinkhorn, did not converge.
    pub failures: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RuntimeConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub budget: Duration,
    pub exact: ExactSolverConfig,
    pub sinkhorn: SinkhornConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            seed: 0,
            budget: Duration::from_secs(60),
            exact: ExactSolverConfig::default(),
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

/// Nearest-rank percentile of `samples` (sorted in place).
pub fn percentile(samples: &mut [f64], q: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let rank = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    samples[rank - 1]
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Times one solve of `solver` on `inst`; the flag is false for a failed solve.
pub fn time_solve(solver: SolverKind, inst: &RandomInstance, cfg: &RuntimeConfig) -> (Duration, bool) {
    let start = Instant::now();
    let ok = match solver {
        SolverKind::Exact => solve_transport(&inst.pred, &inst.obs, &inst.costs, &cfg.exact, true).is_ok(),
        SolverKind::Sinkhorn => cfg
            .sinkhorn
            .epsilon
            .resolve(&inst.costs)
            .and_then(|eps| sinkhorn_masses(&inst.pred, &inst.obs, &inst.costs, eps, &cfg.sinkhorn, true))
            .is_ok_and(|s| s.converged),
    };
    (start.elapsed(), ok)
}

/// Runs both solvers sequentially (timings are not taken concurrently) for
/// every size; instance `r` of size `n` uses seed `seed + r`.
pub fn run_runtime_comparison(sizes: &[usize], cfg: &RuntimeConfig) -> Result<Vec<RuntimeRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let instances: Vec<RandomInstance> = (0..cfg.repetitions)
            .map(|r| random_instance(n, cfg.seed + r as u64))
            .collect::<Result<_>>()?;
        for solver in [SolverKind::Exact, SolverKind::Sinkhorn] {
            let mut ms = Vec::with_capacity(instances.len());
            let (mut over_budget, mut failures) = (0, 0);
            for inst in &instances {
                let (t, ok) = time_solve(solver, inst, cfg);
                if t > cfg.budget {
                    over_budget += 1;
                }
                if !ok {
                    failures += 1;
                }
                ms.push(t.as_secs_f64() * 1e3);
            }
            rows.push(RuntimeRow {
                n,
                solver,
                median_ms: median(&mut ms),
                p90_ms: percentile(&mut ms, 0.9),
                over_budget,
                failures,
            });
        }
    }
    Ok(rows)
}
