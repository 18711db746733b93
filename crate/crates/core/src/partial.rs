//! Partial optimal transport for signatures with unequal totals.
//!
//! Both measures get one extra dummy location. The side with the smaller
//! total receives the mass gap at its dummy, so the augmented problem is
//! balanced, and every transport into or out of the dummy costs `phi`.
//! `phi = 0` compares shapes only; large `phi` adds `phi * gap` on top of
//! the spatial alignment cost.

use rayon::prelude::*;

use crate::domain::{CostMatrix, SpatialSignature, TransportPlan};
use crate::error::{GeotError, Result};
use crate::exact::{solve_transport, ExactSolverConfig};

/// Identifier used for the dummy location in exported plans.
pub const DUMMY_ID: &str = "__dummy__";

/// How `phi` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiPolicy {
    Explicit(f64),
    /// Empirical 0.1-quantile of the off-diagonal costs.
    Quantile10,
    /// Largest entry of the cost matrix.
    MaxCost,
}

impl PhiPolicy {
    pub fn resolve(&self, costs: &CostMatrix) -> Result<f64> {
        let phi = match *self {
            PhiPolicy::Explicit(v) => v,
            PhiPolicy::Quantile10 => {
                let mut entries = costs.off_diagonal();
                if entries.is_empty() {
                    entries = costs.data().to_vec();
                }
                quantile(&mut entries, 0.1)
            }
            PhiPolicy::MaxCost => costs.max(),
        };
        if !phi.is_finite() || phi < 0.0 {
            return Err(GeotError::InvalidInput(format!(
                "phi must be finite and >= 0, got {phi}"
            )));
        }
        Ok(phi)
    }
}

/// Linear-interpolation empirical quantile (sorts `values` in place).
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Penalty for moving mass to or from the dummy location.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    Uniform(f64),
    /// `source[i]` prices real source `i` -> dummy target, `target[j]` prices
    /// dummy source -> real target `j`.
    PerLocation { source: Vec<f64>, target: Vec<f64> },
}

impl Penalty {
    fn validate(&self, n: usize, m: usize) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            Penalty::Uniform(phi) if !ok(*phi) => Err(GeotError::InvalidInput(format!(
                "phi must be finite and >= 0, got {phi}"
            ))),
            Penalty::Uniform(_) => Ok(()),
            Penalty::PerLocation { source, target } => {
                if source.len() != n || target.len() != m {
                    return Err(GeotError::DimensionMismatch(format!(
                        "penalty vectors of length {}/{} for a {}x{} problem",
                        source.len(),
                        target.len(),
                        n,
                        m
                    )));
                }
                if source.iter().chain(target).all(|&v| ok(v)) {
                    Ok(())
                } else {
                    Err(GeotError::InvalidInput(
                        "location penalties must be finite and >= 0".into(),
                    ))
                }
            }
        }
    }

    fn source(&self, i: usize) -> f64 {
        match self {
            Penalty::Uniform(phi) => *phi,
            Penalty::PerLocation { source, .. } => source[i],
        }
    }

    fn target(&self, j: usize) -> f64 {
        match self {
            Penalty::Uniform(phi) => *phi,
            Penalty::PerLocation { target, .. } => target[j],
        }
    }

    fn corner(&self) -> f64 {
        match self {
            Penalty::Uniform(phi) => *phi,
            Penalty::PerLocation { source, target } => {
                source.iter().chain(target).copied().fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialConfig {
    pub phi: PhiPolicy,
    pub exact: ExactSolverConfig,
}

impl PartialConfig {
    pub fn new(phi: PhiPolicy) -> Self {
        Self {
            phi,
            exact: ExactSolverConfig::default(),
        }
    }
}

/// Balanced problem over `n + 1` sources and `m + 1` targets; the last index
/// on each side is the dummy.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub costs: CostMatrix,
}

impl Augmented {
    pub fn source_dummy(&self) -> usize {
        self.source.len() - 1
    }

    pub fn target_dummy(&self) -> usize {
        self.target.len() - 1
    }
}

/// Adds the dummy location to both measures and extends the cost matrix.
pub fn augment(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    penalty: &Penalty,
) -> Result<Augmented> {
    augment_masses(mu.masses(), nu.masses(), costs, penalty)
}

pub fn augment_masses(
    mu: &[f64],
    nu: &[f64],
    costs: &CostMatrix,
    penalty: &Penalty,
) -> Result<Augmented> {
    let (n, m) = (mu.len(), nu.len());
    costs.check_shape(n, m)?;
    penalty.validate(n, m)?;
    for (k, &x) in mu.iter().chain(nu).enumerate() {
        if !x.is_finite() {
            return Err(GeotError::NonFinite { index: k });
        }
        if x < 0.0 {
            let index = if k < n { k } else { k - n };
            return Err(GeotError::NegativeMass { index, value: x });
        }
    }
    let mu_total: f64 = mu.iter().sum();
    let nu_total: f64 = nu.iter().sum();
    let s = mu_total.min(nu_total);

    let mut source = mu.to_vec();
    source.push(nu_total - s);
    let mut target = nu.to_vec();
    target.push(mu_total - s);

    let mut data = Vec::with_capacity((n + 1) * (m + 1));
    for i in 0..n {
        data.extend_from_slice(costs.row(i));
        data.push(penalty.source(i));
    }
    for j in 0..m {
        data.push(penalty.target(j));
    }
    data.push(penalty.corner());
    let costs = CostMatrix::new(n + 1, m + 1, data)?;

    Ok(Augmented {
        source,
        target,
        costs,
    })
}

/// Partial OT solution with its cost split.
#[derive(Debug, Clone)]
pub struct PartialResult {
    /// Plan over the augmented space; index `n` / `m` is the dummy.
    pub plan: TransportPlan,
    pub phi: f64,
    /// Cost of edges between real locations.
    pub transported_cost: f64,
    /// Cost of edges touching the dummy.
    pub imbalance_cost: f64,
    pub total: f64,
    /// `|sum(nu) - sum(mu)|`.
    pub mass_gap: f64,
}

/// `W_{c,phi}`: resolves `phi` from the policy, then solves the augmented
/// problem exactly.
pub fn solve_partial(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    cfg: &PartialConfig,
) -> Result<PartialResult> {
    let phi = cfg.phi.resolve(costs)?;
    solve_partial_with_penalty(mu, nu, costs, &Penalty::Uniform(phi), &cfg.exact)
}

pub fn solve_partial_with_penalty(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    penalty: &Penalty,
    exact: &ExactSolverConfig,
) -> Result<PartialResult> {
    solve_partial_masses(mu.masses(), nu.masses(), costs, penalty, exact, mu.is_paired_with(nu))
}

pub fn solve_partial_masses(
    mu: &[f64],
    nu: &[f64],
    costs: &CostMatrix,
    penalty: &Penalty,
    exact: &ExactSolverConfig,
    paired: bool,
) -> Result<PartialResult> {
    let aug = augment_masses(mu, nu, costs, penalty)?;
    let n = mu.len();
    let m = nu.len();
    let solution = solve_transport(&aug.source, &aug.target, &aug.costs, exact, paired)?;
    let plan = solution.plan;

    let mut transported_cost = 0.0;
    let mut imbalance_cost = 0.0;
    for e in &plan.edges {
        if e.source == n || e.target == m {
            imbalance_cost += e.contribution;
        } else {
            transported_cost += e.contribution;
        }
    }
    let mass_gap = (mu.iter().sum::<f64>() - nu.iter().sum::<f64>()).abs();
    let phi = match penalty {
        Penalty::Uniform(phi) => *phi,
        Penalty::PerLocation { .. } => f64::NAN,
    };
    Ok(PartialResult {
        total: plan.total_cost,
        plan,
        phi,
        transported_cost,
        imbalance_cost,
        mass_gap,
    })
}

/// Solves the partial problem for each `phi` in ascending order.
pub fn phi_sweep(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    phis: &[f64],
    exact: &ExactSolverConfig,
) -> Result<Vec<(f64, PartialResult)>> {
    if phis.windows(2).any(|w| w[0] > w[1]) {
        return Err(GeotError::InvalidInput("phi values must be sorted ascending".into()));
    }
    phis.par_iter()
        .map(|&phi| {
            solve_partial_with_penalty(mu, nu, costs, &Penalty::Uniform(phi), exact)
                .map(|r| (phi, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augment_observation_dummy_takes_excess_prediction() {
        let c = CostMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        // predictions total 12, observations total 10
        let aug = augment_masses(&[7.0, 5.0], &[4.0, 6.0], &c, &Penalty::Uniform(3.0)).unwrap();
        assert_eq!(aug.target[2], 2.0);
        assert_eq!(aug.source[2], 0.0);
        assert_eq!(aug.source.iter().sum::<f64>(), aug.target.iter().sum::<f64>());
        assert_eq!(aug.costs.get(0, 2), 3.0);
        assert_eq!(aug.costs.get(2, 1), 3.0);
        assert_eq!(aug.costs.get(2, 2), 3.0);
        assert_eq!(aug.costs.get(0, 1), 1.0);
    }

    #[test]
    fn augment_prediction_dummy_when_short() {
        let c = CostMatrix::new(1, 1, vec![0.0]).unwrap();
        let aug = augment_masses(&[5.0], &[9.0], &c, &Penalty::Uniform(1.0)).unwrap();
        assert_eq!(aug.source[1], 4.0);
        assert_eq!(aug.target[1], 0.0);
    }

    #[test]
    fn balanced_dummies_are_zero() {
        let c = CostMatrix::new(2, 2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let aug = augment_masses(&[1.0, 2.0], &[2.0, 1.0], &c, &Penalty::Uniform(9.0)).unwrap();
        assert_eq!((aug.source[2], aug.target[2]), (0.0, 0.0));
    }

    #[test]
    fn augment_rejects_negative_mass() {
        let c = CostMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            augment_masses(&[-1.0, 2.0], &[1.0, 1.0], &c, &Penalty::Uniform(0.0)),
            Err(GeotError::NegativeMass { .. })
        ));
    }

    #[test]
    fn quantile_matches_linear_interpolation() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&mut v, 0.1), 1.4);
        assert_eq!(quantile(&mut v, 1.0), 5.0);
    }

    #[test]
    fn phi_policies_resolve() {
        let c = CostMatrix::new(3, 3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]).unwrap();
        // off-diagonal: 1 1 2 2 3 3 -> q10 at h = 0.5 -> 1
        assert_eq!(PhiPolicy::Quantile10.resolve(&c).unwrap(), 1.0);
        assert_eq!(PhiPolicy::MaxCost.resolve(&c).unwrap(), 3.0);
        assert!(PhiPolicy::Explicit(-1.0).resolve(&c).is_err());
    }

    #[test]
    fn unsorted_sweep_rejected() {
        let locs = std::sync::Arc::new(
            crate::domain::LocationSet::new(vec![crate::domain::Location::xy("a", 0.0, 0.0)])
                .unwrap(),
        );
        let s = SpatialSignature::new(locs, vec![1.0]).unwrap();
        let c = CostMatrix::new(1, 1, vec![0.0]).unwrap();
        assert!(phi_sweep(&s, &s, &c, &[2.0, 1.0], &ExactSolverConfig::default()).is_err());
    }
}
