use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geot_core::aggregate::{
    agglomerative, aggregate_signature, cross_scale_eval, external_clustering, kmeans, shares_from_demand,
    Linkage, ScaleInput, CROSS_SCALE_HEADER,
};
use geot_core::costs::{euclidean_costs, load_cost_matrix, CostPower};
use geot_core::entropic::EpsilonPolicy;
use geot_core::partial::{phi_sweep, solve_partial_with_penalty, Penalty};
use geot_core::report::{evaluate_samples, EvalContext, EvalMetadata, EvalOptions, SolverChoice};
use geot_core::runtime::{run_runtime_comparison, RuntimeConfig};
use geot_core::synthetic::{run_validation_sweep, sweep_correlation, write_sweep_csv, ImbalanceScenario, RNG_ALGORITHM};
use geot_core::{
    solve_exact, CostMatrix, EvalReport, ExactSolverConfig, GeotError, LocationSet,
    PhiPolicy, SinkhornConfig,
};
use serde_json::json;

mod input;
mod output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Output(_) => 1,
        }
    }
}

impl From<GeotError> for CliError {
    fn from(e: GeotError) -> Self {
        match e {
            GeotError::SolverStalled { .. } | GeotError::NotConverged | GeotError::EpsilonTooSmall(_) => {
                CliError::Solver(e.to_string())
            }
            GeotError::Io(_) => CliError::Output(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CostSource {
    Euclidean,
    EuclideanSq,
    File(PathBuf),
}

impl FromStr for CostSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(CostSource::Euclidean),
            "euclidean-sq" => Ok(CostSource::EuclideanSq),
            _ => match s.strip_prefix("file=") {
                Some(path) if !path.is_empty() => Ok(CostSource::File(path.into())),
                _ => Err(format!("expected euclidean, euclidean-sq or file=PATH, got {s:?}")),
            },
        }
    }
}

impl std::fmt::Display for CostSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostSource::Euclidean => f.write_str("euclidean"),
            CostSource::EuclideanSq => f.write_str("euclidean-sq"),
            CostSource::File(p) => write!(f, "file={}", p.display()),
        }
    }
}

fn parse_phi(s: &str) -> Result<PhiPolicy, String> {
    match s {
        "q10" => Ok(PhiPolicy::Quantile10),
        "max" => Ok(PhiPolicy::MaxCost),
        _ => match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(PhiPolicy::Explicit(v)),
            _ => Err(format!("expected a nonnegative number, q10 or max, got {s:?}")),
        },
    }
}

fn parse_epsilon(s: &str) -> Result<EpsilonPolicy, String> {
    let (value, relative) = match s.strip_prefix("rel:") {
        Some(v) => (v, true),
        None => (s, false),
    };
    match value.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(if relative { EpsilonPolicy::Relative(v) } else { EpsilonPolicy::Explicit(v) }),
        _ => Err(format!("expected a positive number or rel:SCALE, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinkageArg {
    Single,
    Average,
    Complete,
}

#[derive(Parser)]
#[command(name = "geot", version, about = "Optimal-transport evaluation of spatial predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with columns id,x,y
    #[arg(long)]
    locations: PathBuf,
    /// CSV with columns sample_id,location_id,value
    #[arg(long)]
    predictions: PathBuf,
    /// CSV with columns sample_id,location_id,value
    #[arg(long)]
    observations: PathBuf,
    /// euclidean, euclidean-sq or file=PATH (from_id,to_id,cost)
    #[arg(long, default_value = "euclidean")]
    cost: CostSource,
    /// Cost for pairs missing from a cost file
    #[arg(long)]
    cost_default: Option<f64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SinkhornArgs {
    /// Regularization: VALUE or rel:SCALE (times the mean cost)
    #[arg(long, default_value = "rel:0.01", value_parser = parse_epsilon)]
    epsilon: EpsilonPolicy,
    /// Relative marginal error at which Sinkhorn stops
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

impl SinkhornArgs {
    fn config(&self) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: self.epsilon,
            tau: self.tau,
            max_iters: self.max_iters,
            ..SinkhornConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-sample metric report (report.csv, report.json)
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sinkhorn: SinkhornArgs,
        #[arg(long, default_value = "q10", value_parser = parse_phi)]
        phi_low: PhiPolicy,
        #[arg(long, default_value = "max", value_parser = parse_phi)]
        phi_high: PhiPolicy,
        #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
        solver: SolverArg,
        /// Largest n solved exactly under --solver auto
        #[arg(long, default_value_t = 600)]
        auto_threshold: usize,
    },
    /// Optimal transport plan of one sample (plan.csv, optionally plan.geojson)
    Plan {
        #[command(flatten)]
        data: DataArgs,
        /// Sample to solve; defaults to the first one
        #[arg(long)]
        sample: Option<String>,
        /// Solve the partial problem with this penalty instead of the balanced one
        #[arg(long, value_parser = parse_phi)]
        phi: Option<PhiPolicy>,
        #[arg(long)]
        geojson: bool,
    },
    /// Synthetic imbalance study (sweep.csv, summary.json)
    Synthetic {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 1.5])]
        mu: Vec<f64>,
        /// Number of seeds per mu
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// First seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1.6)]
        target_mean_abs: f64,
        /// Mean-center residuals so totals match
        #[arg(long)]
        balanced: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Partial OT cost over a range of penalties (phi_sweep.csv)
    PhiSweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        sample: Option<String>,
        /// Explicit penalties; defaults to an even grid from 0 to 2 x max cost
        #[arg(long, value_delimiter = ',')]
        phis: Vec<f64>,
        #[arg(long, default_value_t = 21)]
        steps: usize,
    },
    /// Cross-scale evaluation over clusterings (cross_scale.csv)
    Aggregate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        sample: Option<String>,
        /// k-means cluster counts
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// Agglomerative distance cutoffs
        #[arg(long, value_delimiter = ',')]
        cutoff: Vec<f64>,
        #[arg(long, value_enum, default_value_t = LinkageArg::Average)]
        linkage: LinkageArg,
        /// External assignment CSV (location_id,cluster_id); repeatable
        #[arg(long)]
        clusters: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "q10", value_parser = parse_phi)]
        phi: PhiPolicy,
    },
    /// Runtime comparison of the exact and Sinkhorn solvers (runtime.csv)
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-solve budget in seconds
        #[arg(long, default_value_t = 60.0)]
        budget: f64,
        #[command(flatten)]
        sinkhorn: SinkhornArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn costs_for(data: &DataArgs, locs: &LocationSet) -> Result<CostMatrix, CliError> {
    Ok(match &data.cost {
        CostSource::Euclidean => euclidean_costs(locs, CostPower::One)?,
        CostSource::EuclideanSq => euclidean_costs(locs, CostPower::Two)?,
        CostSource::File(path) => load_cost_matrix(path, locs, locs, data.cost_default).map_err(|e| match e {
            GeotError::Io(m) => CliError::Input(m),
            e => CliError::Input(format!("{}: {e}", path.display())),
        })?,
    })
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn evaluate(
    data: &DataArgs,
    sinkhorn: &SinkhornArgs,
    phi_low: PhiPolicy,
    phi_high: PhiPolicy,
    solver: SolverArg,
    auto_threshold: usize,
) -> Result<(), CliError> {
    let locs = input::read_locations(&data.locations)?;
    let samples = input::read_paired(&locs, &data.predictions, &data.observations)?;
    let costs = costs_for(data, &locs)?;
    let opts = EvalOptions {
        solver: match solver {
            SolverArg::Auto => SolverChoice::Auto,
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Sinkhorn => SolverChoice::Sinkhorn,
        },
        auto_threshold,
        phi_low,
        phi_high,
        exact: ExactSolverConfig::default(),
        sinkhorn: sinkhorn.config(),
    };
    let ctx = EvalContext::new(&locs, costs, &opts)?;
    let rows = evaluate_samples(&samples, &ctx, &opts)?;
    let report = EvalReport {
        metadata: EvalMetadata::new(&data.cost.to_string(), &ctx, &opts, Vec::new()),
        rows,
    };
    out_dir(&data.out)?;
    report.write_csv(output::create(&data.out, "report.csv")?)?;
    output::write_json(&data.out, "report.json", &report)
}

fn plan(data: &DataArgs, sample: Option<&str>, phi: Option<PhiPolicy>, geojson: bool) -> Result<(), CliError> {
    let locs = input::read_locations(&data.locations)?;
    let (_, pred, obs) = input::pick_sample(input::read_paired(&locs, &data.predictions, &data.observations)?, sample)?;
    let costs = costs_for(data, &locs)?;
    let plan = match phi {
        None => solve_exact(&pred, &obs, &costs, &ExactSolverConfig::default())?,
        Some(policy) => {
            let penalty = Penalty::Uniform(policy.resolve(&costs)?);
            solve_partial_with_penalty(&pred, &obs, &costs, &penalty, &ExactSolverConfig::default())?.plan
        }
    };
    let edges = plan.sorted_by_contribution();
    out_dir(&data.out)?;
    output::write_plan(&data.out, &locs, &edges)?;
    if geojson {
        output::write_plan_geojson(&data.out, &locs, &edges)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synthetic(
    mu: &[f64],
    seeds: u64,
    seed: u64,
    n: usize,
    target_mean_abs: f64,
    balanced: bool,
    out: &Path,
) -> Result<(), CliError> {
    if mu.is_empty() || seeds == 0 {
        return Err(CliError::Input("need at least one mu and one seed".into()));
    }
    let seed_list: Vec<u64> = (seed..seed + seeds).collect();
    let template = ImbalanceScenario {
        n,
        target_mean_abs,
        balanced,
        ..ImbalanceScenario::default()
    };
    let rows = run_validation_sweep(mu, &seed_list, &template)?;
    out_dir(out)?;
    write_sweep_csv(&rows, output::create(out, "sweep.csv")?)?;
    let by_mu: Vec<_> = mu
        .iter()
        .map(|&m| {
            let sel: Vec<_> = rows.iter().filter(|r| r.mu == m).collect();
            let mean = |f: fn(&&geot_core::synthetic::SweepRow) -> f64| sel.iter().map(f).sum::<f64>() / sel.len() as f64;
            json!({
                "mu": m,
                "mse": mean(|r| r.mse),
                "ot_error": mean(|r| r.ot_error),
                "morans_i": mean(|r| r.morans_i),
            })
        })
        .collect();
    let summary = json!({
        "rng": RNG_ALGORITHM,
        "seeds": seed_list,
        "n": n,
        "extent": template.extent,
        "target_mean_abs": target_mean_abs,
        "balanced": balanced,
        "pearson_r_ot_morans_i": sweep_correlation(&rows),
        "mean_by_mu": by_mu,
    });
    output::write_json(out, "summary.json", &summary)
}

fn sweep(data: &DataArgs, sample: Option<&str>, phis: &[f64], steps: usize) -> Result<(), CliError> {
    let locs = input::read_locations(&data.locations)?;
    let (_, pred, obs) = input::pick_sample(input::read_paired(&locs, &data.predictions, &data.observations)?, sample)?;
    let costs = costs_for(data, &locs)?;
    let phis: Vec<f64> = if phis.is_empty() {
        if steps < 2 {
            return Err(CliError::Input("--steps must be at least 2".into()));
        }
        let top = 2.0 * costs.max();
        (0..steps).map(|k| top * k as f64 / (steps - 1) as f64).collect()
    } else {
        phis.to_vec()
    };
    let rows = phi_sweep(&pred, &obs, &costs, &phis, &ExactSolverConfig::default())?;
    out_dir(&data.out)?;
    let mut w = output::csv_writer(&data.out, "phi_sweep.csv")?;
    w.write_record(["phi", "total", "transported_cost", "imbalance_cost", "delta"])?;
    for (phi, r) in rows {
        w.write_record([phi, r.total, r.transported_cost, r.imbalance_cost, r.mass_gap].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    data: &DataArgs,
    sample: Option<&str>,
    ks: &[usize],
    cutoffs: &[f64],
    linkage: LinkageArg,
    clusters: &[PathBuf],
    seed: u64,
    phi: PhiPolicy,
) -> Result<(), CliError> {
    let power = match data.cost {
        CostSource::Euclidean => CostPower::One,
        CostSource::EuclideanSq => CostPower::Two,
        CostSource::File(_) => {
            return Err(CliError::Input("aggregate needs a euclidean cost; cluster centers have no file costs".into()))
        }
    };
    let locs = input::read_locations(&data.locations)?;
    let samples = input::read_paired(&locs, &data.predictions, &data.observations)?;
    // allocation shares follow the observed demand summed over all samples
    let mut demand = vec![0.0; locs.len()];
    for (_, _, obs) in &samples {
        for (d, m) in demand.iter_mut().zip(obs.masses()) {
            *d += m;
        }
    }
    let (_, pred, obs) = input::pick_sample(samples, sample)?;

    let linkage = match linkage {
        LinkageArg::Single => Linkage::Single,
        LinkageArg::Average => Linkage::Average,
        LinkageArg::Complete => Linkage::Complete,
    };
    let mut clusterings = Vec::new();
    for &k in ks {
        clusterings.push((format!("kmeans_{k}"), kmeans(&locs, k, seed)?));
    }
    for &c in cutoffs {
        clusterings.push((format!("agglomerative_{c}"), agglomerative(&locs, c, linkage)?));
    }
    for path in clusters {
        let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let c = external_clustering(&locs, file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        clusterings.push((path.file_stem().map_or("external".into(), |s| s.to_string_lossy().into_owned()), c));
    }
    if clusterings.is_empty() {
        return Err(CliError::Input("give at least one of --k, --cutoff or --clusters".into()));
    }
    let scales = clusterings
        .into_iter()
        .map(|(label, clustering)| {
            Ok(ScaleInput {
                label,
                cluster_pred: aggregate_signature(&pred, &clustering)?,
                shares: shares_from_demand(&demand, &clustering)?,
                clustering,
            })
        })
        .collect::<Result<Vec<_>, GeotError>>()?;
    let rows = cross_scale_eval(&scales, &obs, power, phi, &ExactSolverConfig::default())?;
    out_dir(&data.out)?;
    let mut w = output::csv_writer(&data.out, "cross_scale.csv")?;
    w.write_record(CROSS_SCALE_HEADER)?;
    for r in rows {
        w.write_record([
            r.scale,
            r.method,
            r.mse_cluster.to_string(),
            r.mse_point.to_string(),
            r.ot_cluster.to_string(),
            r.ot_cluster_to_point.to_string(),
            r.ot_point.to_string(),
            r.mse_cluster_per_member.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn bench(sizes: &[usize], repetitions: usize, seed: u64, budget: f64, sinkhorn: &SinkhornArgs, out: &Path) -> Result<(), CliError> {
    if repetitions == 0 || budget.is_nan() || budget <= 0.0 {
        return Err(CliError::Input("need repetitions >= 1 and a positive budget".into()));
    }
    let cfg = RuntimeConfig {
        repetitions,
        seed,
        budget: Duration::from_secs_f64(budget),
        exact: ExactSolverConfig::default(),
        sinkhorn: sinkhorn.config(),
    };
    let rows = run_runtime_comparison(sizes, &cfg)?;
    out_dir(out)?;
    let mut w = output::csv_writer(out, "runtime.csv")?;
    w.write_record(["n", "solver", "median_ms", "p90_ms", "over_budget", "failures"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.solver.as_str().to_string(),
            r.median_ms.to_string(),
            r.p90_ms.to_string(),
            r.over_budget.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("GEOT_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Input(format!("GEOT_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Output(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Evaluate { data, sinkhorn, phi_low, phi_high, solver, auto_threshold } => {
            evaluate(&data, &sinkhorn, phi_low, phi_high, solver, auto_threshold)
        }
        Command::Plan { data, sample, phi, geojson } => plan(&data, sample.as_deref(), phi, geojson),
        Command::Synthetic { mu, seeds, seed, n, target_mean_abs, balanced, out } => {
            synthetic(&mu, seeds, seed, n, target_mean_abs, balanced, &out)
        }
        Command::PhiSweep { data, sample, phis, steps } => sweep(&data, sample.as_deref(), &phis, steps),
        Command::Aggregate { data, sample, k, cutoff, linkage, clusters, seed, phi } => {
            aggregate(&data, sample.as_deref(), &k, &cutoff, linkage, &clusters, seed, phi)
        }
        Command::Bench { sizes, repetitions, seed, budget, sinkhorn, out } => {
            bench(&sizes, repetitions, seed, budget, &sinkhorn, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geot: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
