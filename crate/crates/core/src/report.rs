//! The per-sample metric bundle: pointwise errors, Moran's I of the
//! residuals and OT errors at two penalty levels.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{CostMatrix, SpatialSignature};
use crate::entropic::{sinkhorn_masses, EpsilonPolicy, SinkhornConfig};
use crate::error::{GeotError, Result};
use crate::exact::{solve_transport, ExactSolverConfig};
use crate::partial::{augment_masses, solve_partial_masses, Penalty, PhiPolicy};
use crate::stats::{metric_correlation, morans_i, pointwise_metrics, CorrelationMatrix, MoranWeights};

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed column order of `report.csv`.
pub const CSV_HEADER: [&str; 13] = [
    "sample_id",
    "mse",
    "rmse",
    "mae",
    "delta",
    "morans_i_negC",
    "morans_i_knn3",
    "w_balanced",
    "w_phi_low",
    "w_phi_high",
    "solver",
    "epsilon",
    "iterations",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Sinkhorn,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::Sinkhorn => "sinkhorn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    /// Exact up to `auto_threshold` locations, Sinkhorn above.
    #[default]
    Auto,
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub solver: SolverChoice,
    pub auto_threshold: usize,
    pub phi_low: PhiPolicy,
    pub phi_high: PhiPolicy,
    pub exact: ExactSolverConfig,
    pub sinkhorn: SinkhornConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            solver: SolverChoice::Auto,
            auto_threshold: 600,
            phi_low: PhiPolicy::Quantile10,
            phi_high: PhiPolicy::MaxCost,
            exact: ExactSolverConfig::default(),
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl EvalOptions {
    pub fn solver_for(&self, n: usize) -> SolverKind {
        match self.solver {
            SolverChoice::Exact => SolverKind::Exact,
            SolverChoice::Sinkhorn => SolverKind::Sinkhorn,
            SolverChoice::Auto if n <= self.auto_threshold => SolverKind::Exact,
            SolverChoice::Auto => SolverKind::Sinkhorn,
        }
    }
}

/// Inputs shared by every sample of one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub costs: CostMatrix,
    pub neg_cost: MoranWeights,
    /// `None` when there are too few locations for three neighbours.
    pub knn3: Option<MoranWeights>,
    pub phi_low: f64,
    pub phi_high: f64,
}

impl EvalContext {
    pub fn new(
        locations: &crate::domain::LocationSet,
        costs: CostMatrix,
        opts: &EvalOptions,
    ) -> Result<Self> {
        let neg_cost = MoranWeights::neg_cost(&costs)?;
        let knn3 = if locations.len() > 3 {
            Some(MoranWeights::knn(locations, 3)?)
        } else {
            None
        };
        Ok(Self {
            phi_low: opts.phi_low.resolve(&costs)?,
            phi_high: opts.phi_high.resolve(&costs)?,
            costs,
            neg_cost,
            knn3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub sample_id: String,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub delta: f64,
    #[serde(rename = "morans_i_negC")]
    pub morans_i_neg_c: Option<f64>,
    pub morans_i_knn3: Option<f64>,
    pub w_balanced: f64,
    pub w_phi_low: f64,
    pub w_phi_high: f64,
    pub solver: SolverKind,
    pub epsilon: Option<f64>,
    pub iterations: Option<usize>,
}

impl EvalRow {
    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.sample_id.clone(),
            self.mse.to_string(),
            self.rmse.to_string(),
            self.mae.to_string(),
            self.delta.to_string(),
            opt(self.morans_i_neg_c),
            opt(self.morans_i_knn3),
            self.w_balanced.to_string(),
            self.w_phi_low.to_string(),
            self.w_phi_high.to_string(),
            self.solver.as_str().to_string(),
            opt(self.epsilon),
            self.iterations.map(|i| i.to_string()).unwrap_or_default(),
        ]
    }
}

fn moran_or_none(values: &[f64], w: &MoranWeights) -> Result<Option<f64>> {
    match morans_i(values, w) {
        Ok(i) => Ok(Some(i)),
        Err(GeotError::ConstantField) | Err(GeotError::DegenerateWeights) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes every column for one prediction/observation pair.
pub fn evaluate_sample(
    sample_id: &str,
    pred: &SpatialSignature,
    obs: &SpatialSignature,
    ctx: &EvalContext,
    opts: &EvalOptions,
) -> Result<EvalRow> {
    let pw = pointwise_metrics(pred, obs)?;
    let residuals: Vec<f64> = obs.masses().iter().zip(pred.masses()).map(|(o, p)| o - p).collect();
    let morans_i_neg_c = moran_or_none(&residuals, &ctx.neg_cost)?;
    let morans_i_knn3 = match &ctx.knn3 {
        Some(w) => moran_or_none(&residuals, w)?,
        None => None,
    };
    // balanced comparison: observations rescaled to the predicted total
    let rescaled: Vec<f64> = if obs.total() > 0.0 {
        let factor = pred.total() / obs.total();
        obs.masses().iter().map(|m| m * factor).collect()
    } else {
        return Err(GeotError::InvalidInput(format!("sample {sample_id}: zero observed mass")));
    };
    let p = pred.masses();
    let paired = pred.is_paired_with(obs);
    let costs = &ctx.costs;
    let solver = opts.solver_for(p.len());

    let (w_balanced, w_phi_low, w_phi_high, epsilon, iterations) = match solver {
        SolverKind::Exact => {
            let balanced = solve_transport(p, &rescaled, costs, &opts.exact, paired)?.plan.total_cost;
            let low = solve_partial_masses(p, obs.masses(), costs, &Penalty::Uniform(ctx.phi_low), &opts.exact, paired)?;
            let high = solve_partial_masses(p, obs.masses(), costs, &Penalty::Uniform(ctx.phi_high), &opts.exact, paired)?;
            (balanced, low.total, high.total, None, None)
        }
        SolverKind::Sinkhorn => {
            let eps = opts.sinkhorn.epsilon.resolve(costs)?;
            let cfg = &opts.sinkhorn;
            let mut iters = 0;
            let mut run = |a: &[f64], b: &[f64], c: &CostMatrix| -> Result<f64> {
                let sol = sinkhorn_masses(a, b, c, eps, cfg, paired)?;
                if !sol.converged {
                    return Err(GeotError::NotConverged);
                }
                iters = iters.max(sol.iterations);
                Ok(sol.value)
            };
            let balanced = run(p, &rescaled, costs)?;
            let low = augment_masses(p, obs.masses(), costs, &Penalty::Uniform(ctx.phi_low))?;
            let w_low = run(&low.source, &low.target, &low.costs)?;
            let high = augment_masses(p, obs.masses(), costs, &Penalty::Uniform(ctx.phi_high))?;
            let w_high = run(&high.source, &high.target, &high.costs)?;
            (balanced, w_low, w_high, Some(eps), Some(iters))
        }
    };
    Ok(EvalRow {
        sample_id: sample_id.to_string(),
        mse: pw.mse,
        rmse: pw.rmse,
        mae: pw.mae,
        delta: pw.delta,
        morans_i_neg_c,
        morans_i_knn3,
        w_balanced,
        w_phi_low,
        w_phi_high,
        solver,
        epsilon,
        iterations,
    })
}

/// Evaluates samples in parallel; rows keep the input order.
pub fn evaluate_samples(
    samples: &[(String, SpatialSignature, SpatialSignature)],
    ctx: &EvalContext,
    opts: &EvalOptions,
) -> Result<Vec<EvalRow>> {
    samples
        .par_iter()
        .map(|(id, pred, obs)| {
            evaluate_sample(id, pred, obs, ctx, opts).map_err(|e| match e {
                GeotError::InvalidInput(m) => GeotError::InvalidInput(format!("sample {id}: {m}")),
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetadata {
    pub schema_version: u32,
    pub generator: String,
    pub cost_source: String,
    pub phi_low_policy: String,
    pub phi_low: f64,
    pub phi_high_policy: String,
    pub phi_high: f64,
    pub solver: String,
    pub epsilon_policy: String,
    pub tau: f64,
    pub seeds: Vec<u64>,
}

impl EvalMetadata {
    pub fn new(cost_source: &str, ctx: &EvalContext, opts: &EvalOptions, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            generator: format!("geot {}", env!("CARGO_PKG_VERSION")),
            cost_source: cost_source.to_string(),
            phi_low_policy: describe_phi(opts.phi_low),
            phi_low: ctx.phi_low,
            phi_high_policy: describe_phi(opts.phi_high),
            phi_high: ctx.phi_high,
            solver: match opts.solver {
                SolverChoice::Auto => format!("auto(exact<= {})", opts.auto_threshold).replace(' ', ""),
                SolverChoice::Exact => "exact".into(),
                SolverChoice::Sinkhorn => "sinkhorn".into(),
            },
            epsilon_policy: match opts.sinkhorn.epsilon {
                EpsilonPolicy::Explicit(e) => e.to_string(),
                EpsilonPolicy::Relative(s) => format!("rel:{s}"),
            },
            tau: opts.sinkhorn.tau,
            seeds,
        }
    }
}

pub fn describe_phi(p: PhiPolicy) -> String {
    match p {
        PhiPolicy::Explicit(v) => v.to_string(),
        PhiPolicy::Quantile10 => "q10".into(),
        PhiPolicy::MaxCost => "max".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metadata: EvalMetadata,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let io = |e: csv::Error| GeotError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.csv_record()).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pearson correlations between the numeric metric columns.
    pub fn correlations(&self) -> Result<CorrelationMatrix> {
        let col = |f: fn(&EvalRow) -> Option<f64>| self.rows.iter().map(f).collect::<Vec<_>>();
        metric_correlation(&[
            ("mse", col(|r| Some(r.mse))),
            ("rmse", col(|r| Some(r.rmse))),
            ("mae", col(|r| Some(r.mae))),
            ("delta", col(|r| Some(r.delta))),
            ("morans_i_negC", col(|r| r.morans_i_neg_c)),
            ("morans_i_knn3", col(|r| r.morans_i_knn3)),
            ("w_balanced", col(|r| Some(r.w_balanced))),
            ("w_phi_low", col(|r| Some(r.w_phi_low))),
            ("w_phi_high", col(|r| Some(r.w_phi_high))),
        ])
    }
}
