//! Spatially imbalanced residual fields with a fixed mean absolute residual.
//!
//! Locations are uniform on a square. Residuals are drawn from `N(mu, sigma)`
//! left of the vertical midline and `N(-mu, sigma)` right of it, with
//! `sigma` chosen so that `E|residual|` stays constant as `mu` varies.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::costs::{euclidean_costs, CostPower};
use crate::domain::{shift_needed, shifted_by, Location, LocationSet, SpatialSignature};
use crate::error::{GeotError, Result};
use crate::exact::ExactSolverConfig;
use crate::partial::{solve_partial_masses, Penalty};
use crate::stats::{morans_i, pearson, pointwise_from_slices, MoranWeights};

/// Name of the generator behind every seeded draw in this module.
pub const RNG_ALGORITHM: &str = "ChaCha8";

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImbalanceScenario {
    pub n: usize,
    /// Side length of the square domain.
    pub extent: f64,
    pub mu: f64,
    pub target_mean_abs: f64,
    pub seed: u64,
    /// Constant observation level before residuals are subtracted.
    pub base_level: f64,
    /// Mean-center the residuals so both totals match exactly.
    pub balanced: bool,
}

impl Default for ImbalanceScenario {
    fn default() -> Self {
        Self {
            n: 100,
            extent: 100.0,
            mu: 0.0,
            target_mean_abs: 1.6,
            seed: 0,
            base_level: 10.0,
            balanced: false,
        }
    }
}

impl ImbalanceScenario {
    pub fn with(mu: f64, seed: u64) -> Self {
        Self {
            mu,
            seed,
            ..Self::default()
        }
    }
}

/// Mean of `|X|` for `X ~ N(mu, sigma)`.
pub fn folded_normal_mean(mu: f64, sigma: f64) -> f64 {
    let z = mu / sigma;
    // Phi(-z) = erfc(z / sqrt 2) / 2
    sigma * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp()
        + mu * (1.0 - erfc(z / std::f64::consts::SQRT_2))
}

/// `sigma` with `E|N(mu, sigma)| = target`, by bisection on
/// `(1e-12, 10 * target]`. Returns the lower bracket when `|mu| = target`.
pub fn sigma_for(mu: f64, target: f64) -> Result<f64> {
    let mu = mu.abs();
    if !(target > 0.0) || !target.is_finite() || !mu.is_finite() || mu > target {
        return Err(GeotError::InfeasibleSigma { mu, target });
    }
    let (mut lo, mut hi) = (1e-12, 10.0 * target);
    if folded_normal_mean(mu, lo) >= target {
        return Ok(lo);
    }
    if folded_normal_mean(mu, hi) < target {
        return Err(GeotError::InfeasibleSigma { mu, target });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if folded_normal_mean(mu, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub locations: Arc<LocationSet>,
    pub pred: SpatialSignature,
    pub obs: SpatialSignature,
    /// `obs - pred` before any shift.
    pub residuals: Vec<f64>,
    pub sigma: f64,
    /// Constant added to both signatures to keep masses nonnegative.
    pub shift: f64,
}

pub fn generate(scenario: &ImbalanceScenario) -> Result<SyntheticSample> {
    let s = scenario;
    if s.n < 2 || !(s.extent > 0.0) || !s.base_level.is_finite() {
        return Err(GeotError::InvalidInput(format!("invalid scenario {s:?}")));
    }
    let sigma = sigma_for(s.mu, s.target_mean_abs)?;
    let mut rng = rng_for(s.seed);
    let points: Vec<(f64, f64)> = (0..s.n)
        .map(|_| (rng.random::<f64>() * s.extent, rng.random::<f64>() * s.extent))
        .collect();
    let left = Normal::new(s.mu, sigma).map_err(|e| GeotError::InvalidInput(e.to_string()))?;
    let right = Normal::new(-s.mu, sigma).map_err(|e| GeotError::InvalidInput(e.to_string()))?;
    let half = 0.5 * s.extent;
    let mut residuals: Vec<f64> = points
        .iter()
        .map(|&(x, _)| if x < half { left.sample(&mut rng) } else { right.sample(&mut rng) })
        .collect();
    if s.balanced {
        let mean = residuals.iter().sum::<f64>() / s.n as f64;
        residuals.iter_mut().for_each(|v| *v -= mean);
    }

    let locations = Arc::new(LocationSet::new(
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Location::xy(format!("p{i}"), x, y))
            .collect(),
    )?);
    let obs_masses = vec![s.base_level; s.n];
    let pred_masses: Vec<f64> = residuals.iter().map(|v| s.base_level - v).collect();
    let shift = shift_needed(&obs_masses, 0.0)?.max(shift_needed(&pred_masses, 0.0)?);
    let obs = SpatialSignature::new_unchecked(locations.clone(), obs_masses)?;
    let pred = SpatialSignature::new_unchecked(locations.clone(), pred_masses)?;
    let obs = shifted_by(&obs, shift)?.signature;
    let pred = shifted_by(&pred, shift)?.signature;
    Ok(SyntheticSample {
        locations,
        pred,
        obs,
        residuals,
        sigma,
        shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub seed: u64,
    pub mse: f64,
    pub ot_error: f64,
    pub morans_i: f64,
}

/// One row per `(mu, seed)`: MSE, partial OT error at `phi = 0` under
/// Euclidean distance, and Moran's I of the residuals with `w = -C`.
/// Rows are ordered by `mu`, then seed, in input order.
pub fn run_validation_sweep(
    mus: &[f64],
    seeds: &[u64],
    template: &ImbalanceScenario,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(f64, u64)> = mus
        .iter()
        .flat_map(|&mu| seeds.iter().map(move |&seed| (mu, seed)))
        .collect();
    jobs.par_iter()
        .map(|&(mu, seed)| {
            let scenario = ImbalanceScenario { mu, seed, ..*template };
            let sample = generate(&scenario)?;
            let costs = euclidean_costs(&sample.locations, CostPower::One)?;
            let metrics = pointwise_from_slices(sample.pred.masses(), sample.obs.masses())?;
            let ot = solve_partial_masses(
                sample.pred.masses(),
                sample.obs.masses(),
                &costs,
                &Penalty::Uniform(0.0),
                &ExactSolverConfig::default(),
                true,
            )?;
            let weights = MoranWeights::neg_cost(&costs)?;
            let morans_i = morans_i(&sample.residuals, &weights)?;
            Ok(SweepRow {
                mu,
                seed,
                mse: metrics.mse,
                ot_error: ot.total,
                morans_i,
            })
        })
        .collect()
}

/// Pearson r between the OT error and Moran's I columns of a sweep.
pub fn sweep_correlation(rows: &[SweepRow]) -> Option<f64> {
    let ot: Vec<f64> = rows.iter().map(|r| r.ot_error).collect();
    let mi: Vec<f64> = rows.iter().map(|r| r.morans_i).collect();
    pearson(&ot, &mi)
}

/// Writes the sweep with header `mu,seed,mse,ot_error,morans_i`.
pub fn write_sweep_csv(rows: &[SweepRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GeotError::Io(e.to_string());
    w.write_record(["mu", "seed", "mse", "ot_error", "morans_i"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.mu.to_string(),
            r.seed.to_string(),
            r.mse.to_string(),
            r.ot_error.to_string(),
            r.morans_i.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_at_zero_mu_is_closed_form() {
        let s = sigma_for(0.0, 1.6).unwrap();
        assert!((s - 1.6 * (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn infeasible_target_rejected() {
        assert!(matches!(sigma_for(2.0, 1.6), Err(GeotError::InfeasibleSigma { .. })));
    }

    #[test]
    fn boundary_returns_tiny_sigma() {
        assert!(sigma_for(1.6, 1.6).unwrap() < 1e-6);
    }

    #[test]
    fn balanced_option_equalizes_totals() {
        let s = generate(&ImbalanceScenario {
            balanced: true,
            ..ImbalanceScenario::with(1.0, 3)
        })
        .unwrap();
        assert!((s.pred.total() - s.obs.total()).abs() < 1e-9);
    }
}
