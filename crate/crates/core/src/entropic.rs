//! Entropy-regularized optimal transport.
//!
//! Everything runs in the log domain: potentials `f`, `g` are updated with
//! the row-wise soft-min
//!
//! ```text
//! min_eps(A)_i = -eps * log(sum_j exp(-A_ij / eps))
//! f <- f + eps log p + min_eps(C - f (+) g)      (= eps log p - eps LSE_j((g_j - C_ij) / eps))
//! g <- g + eps log q + min_eps(C^T - g (+) f)
//! ```
//!
//! and the coupling is `T = exp((f (+) g - C) / eps)`. The reported value is
//! the regularized objective `<T, C> - eps H(T)` with `H(T) = -sum T log T`,
//! which equals the dual objective `<f, p> + <g, q> - eps (sum T - sum p)`
//! at the optimum. With this parameterization `grad_p W = f` and
//! `grad_q W = g` along mass-preserving directions.
//!
//! Between rebuilds of a stabilized kernel the updates run as scalings,
//! which avoids an exponential per cell per iteration; rows or columns
//! whose kernel underflows take the log-domain update directly.

use rayon::prelude::*;

use crate::domain::{totals_balanced, CostMatrix, SpatialSignature, TransportPlan};
use crate::error::{GeotError, Result};

/// How the regularization strength is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonPolicy {
    Explicit(f64),
    /// `eps = scale * mean(C)`.
    Relative(f64),
}

impl EpsilonPolicy {
    pub fn resolve(&self, costs: &CostMatrix) -> Result<f64> {
        let eps = match *self {
            EpsilonPolicy::Explicit(e) => e,
            EpsilonPolicy::Relative(scale) => scale * costs.mean(),
        };
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(GeotError::InvalidInput(format!(
                "epsilon must be positive and finite, got {eps}"
            )));
        }
        Ok(eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: EpsilonPolicy,
    /// Stopping threshold on the row-marginal L1 error divided by the total mass.
    pub tau: f64,
    pub max_iters: usize,
    /// Iteration cap for the symmetric self-transport solver.
    pub symmetric_max_iters: usize,
    /// Coupling cells below `coupling_floor * total mass` are not exported.
    pub coupling_floor: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: EpsilonPolicy::Relative(0.01),
            tau: 1e-6,
            max_iters: 10_000,
            symmetric_max_iters: 50,
            coupling_floor: 1e-9,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(epsilon: EpsilonPolicy) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(GeotError::InvalidInput("tau must be positive".into()));
        }
        if self.max_iters == 0 || self.symmetric_max_iters == 0 {
            return Err(GeotError::InvalidInput("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    /// Source potential, gauge-fixed so that `<f, p> = 0`.
    pub f: Vec<f64>,
    /// Target potential, shifted opposite to `f` so `f (+) g` is unchanged.
    pub g: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub epsilon: f64,
    /// Cells of `exp((f (+) g - C) / eps)` above the mass floor.
    pub coupling: TransportPlan,
    /// Regularized objective `W_{c,eps}`.
    pub value: f64,
    /// `<T, C>` for the entropic coupling.
    pub transport_cost: f64,
    pub iterations: usize,
    /// Row-marginal L1 error relative to the total mass.
    pub final_marginal_error: f64,
    pub converged: bool,
    /// Relative marginal error recorded every ten iterations.
    pub error_trace: Vec<f64>,
}

/// Log-domain Sinkhorn between two signatures.
pub fn sinkhorn(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    let eps = cfg.epsilon.resolve(costs)?;
    sinkhorn_masses(mu.masses(), nu.masses(), costs, eps, cfg, mu.is_paired_with(nu))
}

/// Zero-mass points are dropped before iterating. Their potentials are
/// filled with the soft c-transform `-eps LSE((g - C) / eps)`, i.e. without
/// the `eps log p` term that would be `-inf`.
pub fn sinkhorn_masses(
    p: &[f64],
    q: &[f64],
    costs: &CostMatrix,
    eps: f64,
    cfg: &SinkhornConfig,
    paired: bool,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    let (n, m) = (p.len(), q.len());
    costs.check_shape(n, m)?;
    check_masses(p, q)?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(GeotError::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    if !(costs.max() / eps).is_finite() {
        return Err(GeotError::EpsilonTooSmall(format!(
            "max(C) / eps overflows for eps = {eps:e}"
        )));
    }
    let p_total: f64 = p.iter().sum();
    let q_total: f64 = q.iter().sum();
    if !totals_balanced(p_total, q_total) {
        return Err(GeotError::Unbalanced {
            source_total: p_total,
            target_total: q_total,
        });
    }

    let rows: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| q[j] > 0.0).collect();
    let reduced = Reduced::new(costs, &rows, &cols);
    let log_p: Vec<f64> = rows.iter().map(|&i| p[i].ln()).collect();
    let log_q: Vec<f64> = cols.iter().map(|&j| q[j].ln()).collect();
    let ps: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
    let total = p_total;

    let mut f = vec![0.0; rows.len()];
    let mut g = vec![0.0; cols.len()];
    let qs: Vec<f64> = cols.iter().map(|&j| q[j]).collect();
    let mut state = Iterate {
        reduced: &reduced,
        log_p: &log_p,
        log_q: &log_q,
        ps: &ps,
        qs: &qs,
        total,
        k_row: Vec::new(),
        k_col: Vec::new(),
        s: vec![0.0; rows.len()],
        t: vec![0.0; cols.len()],
        iterations: 0,
    };
    let mut error_trace = Vec::new();
    let (error, row_mass) = state.run(&mut f, &mut g, eps, cfg.tau, cfg.max_iters, Some(&mut error_trace))?;
    let iterations = state.iterations;
    let final_marginal_error = error / total;
    let converged = final_marginal_error <= cfg.tau;
    if f.iter().chain(&g).any(|v| !v.is_finite()) {
        return Err(GeotError::EpsilonTooSmall(format!(
            "potentials overflowed (eps = {eps:e})"
        )));
    }

    // gauge: <f, p> = 0
    let shift = f.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>() / total;
    f.iter_mut().for_each(|v| *v -= shift);
    g.iter_mut().for_each(|v| *v += shift);

    let dual = f.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>()
        + g.iter()
            .zip(cols.iter().map(|&j| q[j]))
            .map(|(a, b)| a * b)
            .sum::<f64>();
    let value = dual - eps * (row_mass - total);

    // full-length potentials
    let mut f_full = vec![0.0; n];
    let mut g_full = vec![0.0; m];
    for (k, &i) in rows.iter().enumerate() {
        f_full[i] = f[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        g_full[j] = g[k];
    }
    for i in (0..n).filter(|&i| p[i] == 0.0) {
        f_full[i] = -eps * lse(cols.iter().zip(&g).map(|(&j, &gj)| (gj - costs.get(i, j)) / eps));
    }
    for j in (0..m).filter(|&j| q[j] == 0.0) {
        g_full[j] = -eps * lse(rows.iter().zip(&f).map(|(&i, &fi)| (fi - costs.get(i, j)) / eps));
    }

    let floor = cfg.coupling_floor * total;
    let mut cells = Vec::new();
    let mut transport_cost = 0.0;
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let c = costs.get(i, j);
            let mass = ((f[a] + g[b] - c) / eps).exp();
            transport_cost += mass * c;
            if mass > floor {
                cells.push((i, j, mass));
            }
        }
    }
    let col_err = column_error(&cells, q);
    let coupling = TransportPlan::from_cells(cells, costs, paired, 0.0, error, col_err);

    Ok(SinkhornSolution {
        f: f_full,
        g: g_full,
        p: p.to_vec(),
        q: q.to_vec(),
        epsilon: eps,
        coupling,
        value,
        transport_cost,
        iterations,
        final_marginal_error,
        converged,
        error_trace,
    })
}

/// Scalings outside `[1 / ABSORB, ABSORB]` are folded into the potentials.
const ABSORB: f64 = 1e30;
/// Kernel row or column sums at or below this fall back to a log-domain step.
const TINY: f64 = 1e-280;

/// Sinkhorn iterations in stabilized kernel form. With potentials `f`, `g`
/// fixed, `K_ij = exp((f_i + g_j - C_ij) / eps)` and the updates
/// `u <- p / (K v)`, `v <- q / (K^T u)` are the log-domain updates with
/// `f + eps log u`, `g + eps log v` in place of `f`, `g`, but cost a
/// multiply-add per cell instead of an exponential. Scalings are absorbed
/// into the potentials (and the kernel rebuilt) before they lose precision.
struct Iterate<'a> {
    reduced: &'a Reduced,
    log_p: &'a [f64],
    log_q: &'a [f64],
    ps: &'a [f64],
    qs: &'a [f64],
    total: f64,
    k_row: Vec<f64>,
    k_col: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    iterations: usize,
}

impl Iterate<'_> {
    /// Runs until the relative row-marginal error drops to `tol` or the
    /// iteration budget runs out. Returns the last L1 error and row mass.
    fn run(
        &mut self,
        f: &mut [f64],
        g: &mut [f64],
        eps: f64,
        tol: f64,
        max_iters: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<(f64, f64)> {
        let (n, m) = (f.len(), g.len());
        let mut local = 0;
        loop {
            self.reduced.kernel(f, g, eps, &mut self.k_row, &mut self.k_col);
            let mut u = vec![1.0; n];
            let mut v = vec![1.0; m];
            loop {
                mat_vec(&self.k_row, m, &v, &mut self.s);
                if !self.s.iter().all(|&x| x > TINY && x.is_finite()) {
                    absorb(f, &u, eps);
                    absorb(g, &v, eps);
                    self.log_step(f, g, eps)?;
                    break;
                }
                let mut error = 0.0;
                let mut row_mass = 0.0;
                for ((&ui, &si), &pi) in u.iter().zip(&self.s).zip(self.ps) {
                    let r = ui * si;
                    row_mass += r;
                    error += (r - pi).abs();
                }
                if !error.is_finite() {
                    return Err(GeotError::EpsilonTooSmall(format!(
                        "non-finite marginal error at iteration {} (eps = {eps:e})",
                        self.iterations
                    )));
                }
                let rel = error / self.total;
                if let Some(trace) = trace.as_deref_mut() {
                    if local % 10 == 0 {
                        trace.push(rel);
                    }
                }
                if rel <= tol || self.iterations >= max_iters {
                    absorb(f, &u, eps);
                    absorb(g, &v, eps);
                    return Ok((error, row_mass));
                }
                for ((ui, &si), &pi) in u.iter_mut().zip(&self.s).zip(self.ps) {
                    *ui = pi / si;
                }
                mat_vec(&self.k_col, n, &u, &mut self.t);
                self.iterations += 1;
                local += 1;
                if !self.t.iter().all(|&x| x > TINY && x.is_finite()) {
                    absorb(f, &u, eps);
                    absorb(g, &v, eps);
                    self.log_step_g(f, g, eps);
                    break;
                }
                for ((vj, &tj), &qj) in v.iter_mut().zip(&self.t).zip(self.qs) {
                    *vj = qj / tj;
                }
                let drifted = |x: &f64| !(*x > 1.0 / ABSORB && *x < ABSORB);
                if u.iter().any(drifted) || v.iter().any(drifted) {
                    absorb(f, &u, eps);
                    absorb(g, &v, eps);
                    break;
                }
            }
        }
    }

    /// One full log-domain iteration, used when the kernel underflows.
    fn log_step(&mut self, f: &mut [f64], g: &mut [f64], eps: f64) -> Result<()> {
        self.reduced.row_lse(g, eps, &mut self.s);
        for ((fi, &si), &lp) in f.iter_mut().zip(&self.s).zip(self.log_p) {
            *fi = eps * lp - eps * si;
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(GeotError::EpsilonTooSmall(format!("potentials overflowed (eps = {eps:e})")));
        }
        self.log_step_g(f, g, eps);
        self.iterations += 1;
        Ok(())
    }

    fn log_step_g(&mut self, f: &[f64], g: &mut [f64], eps: f64) {
        self.reduced.col_lse(f, eps, &mut self.t);
        for ((gj, &tj), &lq) in g.iter_mut().zip(&self.t).zip(self.log_q) {
            *gj = eps * lq - eps * tj;
        }
    }
}

fn absorb(pot: &mut [f64], scaling: &[f64], eps: f64) {
    for (h, &x) in pot.iter_mut().zip(scaling) {
        *h += eps * x.ln();
    }
}

/// `out_k = sum_l matrix[k, l] * x_l` for a row-major matrix of `width` columns.
fn mat_vec(matrix: &[f64], width: usize, x: &[f64], out: &mut [f64]) {
    let one = |(k, o): (usize, &mut f64)| {
        *o = matrix[k * width..(k + 1) * width].iter().zip(x).map(|(a, b)| a * b).sum();
    };
    if matrix.len() >= PARALLEL_CELLS {
        out.par_iter_mut().enumerate().for_each(one);
    } else {
        out.iter_mut().enumerate().for_each(one);
    }
}

fn check_masses(p: &[f64], q: &[f64]) -> Result<()> {
    for (k, &x) in p.iter().chain(q).enumerate() {
        if !x.is_finite() {
            return Err(GeotError::NonFinite { index: k });
        }
        if x < 0.0 {
            let index = if k < p.len() { k } else { k - p.len() };
            return Err(GeotError::NegativeMass { index, value: x });
        }
    }
    if !p.iter().any(|&x| x > 0.0) || !q.iter().any(|&x| x > 0.0) {
        return Err(GeotError::InvalidInput("both measures need positive mass".into()));
    }
    Ok(())
}

fn row_error(f: &[f64], s: &[f64], p: &[f64], eps: f64) -> (f64, f64) {
    let mut err = 0.0;
    let mut mass = 0.0;
    for ((&fi, &si), &pi) in f.iter().zip(s).zip(p) {
        let r = (fi / eps + si).exp();
        mass += r;
        err += (r - pi).abs();
    }
    (err, mass)
}

fn column_error(cells: &[(usize, usize, f64)], q: &[f64]) -> f64 {
    let mut col = vec![0.0; q.len()];
    for &(_, j, mass) in cells {
        col[j] += mass;
    }
    col.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Numerically stable log-sum-exp.
fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

const PARALLEL_CELLS: usize = 1 << 14;

/// Cost matrix restricted to the positive-mass support, stored both
/// row-major and column-major so both soft-min passes stream memory.
struct Reduced {
    rows: usize,
    cols: usize,
    by_row: Vec<f64>,
    by_col: Vec<f64>,
}

impl Reduced {
    fn new(costs: &CostMatrix, rows: &[usize], cols: &[usize]) -> Self {
        let mut by_row = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let r = costs.row(i);
            by_row.extend(cols.iter().map(|&j| r[j]));
        }
        let mut by_col = Vec::with_capacity(rows.len() * cols.len());
        for b in 0..cols.len() {
            by_col.extend((0..rows.len()).map(|a| by_row[a * cols.len() + b]));
        }
        Self {
            rows: rows.len(),
            cols: cols.len(),
            by_row,
            by_col,
        }
    }

    /// Stabilized kernel `exp((f_i + g_j - C_ij) / eps)` in both layouts.
    fn kernel(&self, f: &[f64], g: &[f64], eps: f64, by_row: &mut Vec<f64>, by_col: &mut Vec<f64>) {
        let fill = |(a, out): (usize, &mut [f64])| {
            let c = &self.by_row[a * self.cols..(a + 1) * self.cols];
            for ((o, &cij), &gj) in out.iter_mut().zip(c).zip(g) {
                *o = ((f[a] + gj - cij) / eps).exp();
            }
        };
        by_row.resize(self.rows * self.cols, 0.0);
        if self.rows * self.cols >= PARALLEL_CELLS {
            by_row.par_chunks_mut(self.cols).enumerate().for_each(fill);
        } else {
            by_row.chunks_mut(self.cols).enumerate().for_each(fill);
        }
        by_col.resize(self.rows * self.cols, 0.0);
        for b in 0..self.cols {
            for a in 0..self.rows {
                by_col[b * self.rows + a] = by_row[a * self.cols + b];
            }
        }
    }

    /// `out_i = LSE_j((g_j - C_ij) / eps)`.
    fn row_lse(&self, g: &[f64], eps: f64, out: &mut [f64]) {
        lse_pass(&self.by_row, self.cols, g, eps, out, self.rows * self.cols);
    }

    /// `out_j = LSE_i((f_i - C_ij) / eps)`.
    fn col_lse(&self, f: &[f64], eps: f64, out: &mut [f64]) {
        lse_pass(&self.by_col, self.rows, f, eps, out, self.rows * self.cols);
    }
}

fn lse_pass(matrix: &[f64], width: usize, pot: &[f64], eps: f64, out: &mut [f64], cells: usize) {
    let one = |(k, o): (usize, &mut f64)| {
        let row = &matrix[k * width..(k + 1) * width];
        let mut max = f64::NEG_INFINITY;
        for (&c, &h) in row.iter().zip(pot) {
            max = max.max(h - c);
        }
        let mut sum = 0.0;
        for (&c, &h) in row.iter().zip(pot) {
            sum += ((h - c - max) / eps).exp();
        }
        *o = max / eps + sum.ln();
    };
    if cells >= PARALLEL_CELLS {
        out.par_iter_mut().enumerate().for_each(one);
    } else {
        out.iter_mut().enumerate().for_each(one);
    }
}

/// Self-transport `W_{c,eps}(mu, mu)` from the symmetric fixed point
/// `f <- (f + eps log p - eps LSE((f - C) / eps)) / 2`.
#[derive(Debug, Clone)]
pub struct SymmetricSolution {
    pub f: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub final_marginal_error: f64,
    pub converged: bool,
}

pub fn symmetric_self_transport(
    p: &[f64],
    costs: &CostMatrix,
    eps: f64,
    cfg: &SinkhornConfig,
) -> Result<SymmetricSolution> {
    cfg.validate()?;
    let n = p.len();
    costs.check_shape(n, n)?;
    check_masses(p, p)?;
    let support: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let reduced = Reduced::new(costs, &support, &support);
    let ps: Vec<f64> = support.iter().map(|&i| p[i]).collect();
    let log_p: Vec<f64> = ps.iter().map(|v| v.ln()).collect();
    let total: f64 = ps.iter().sum();

    // start from the soft c-transform of zero potentials
    let mut s = vec![0.0; ps.len()];
    reduced.row_lse(&vec![0.0; ps.len()], eps, &mut s);
    let mut f: Vec<f64> = log_p.iter().zip(&s).map(|(lp, si)| eps * lp - eps * si).collect();

    let mut iterations = 0;
    let (mut error, mut mass);
    loop {
        reduced.row_lse(&f, eps, &mut s);
        (error, mass) = row_error(&f, &s, &ps, eps);
        if !error.is_finite() {
            return Err(GeotError::EpsilonTooSmall(format!(
                "non-finite symmetric marginal error (eps = {eps:e})"
            )));
        }
        if error / total <= cfg.tau || iterations == cfg.symmetric_max_iters {
            break;
        }
        for ((fi, &si), &lp) in f.iter_mut().zip(&s).zip(&log_p) {
            *fi = 0.5 * (*fi + eps * lp - eps * si);
        }
        iterations += 1;
    }
    let value = 2.0 * f.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>() - eps * (mass - total);
    let mut f_full = vec![0.0; n];
    for (k, &i) in support.iter().enumerate() {
        f_full[i] = f[k];
    }
    for i in (0..n).filter(|&i| p[i] == 0.0) {
        f_full[i] = -eps * lse(support.iter().zip(&f).map(|(&j, &fj)| (fj - costs.get(i, j)) / eps));
    }
    Ok(SymmetricSolution {
        f: f_full,
        value,
        iterations,
        final_marginal_error: error / total,
        converged: error / total <= cfg.tau,
    })
}

/// Debiased divergence and its three entropic terms.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub value: f64,
    pub cross: f64,
    pub self_mu: f64,
    pub self_nu: f64,
    pub epsilon: f64,
    pub cross_solution: SinkhornSolution,
    pub mu_potential: Vec<f64>,
    pub nu_potential: Vec<f64>,
}

impl Divergence {
    /// `(W(mu, nu), W(mu, mu), W(nu, nu))`.
    pub fn parts(&self) -> (f64, f64, f64) {
        (self.cross, self.self_mu, self.self_nu)
    }
}

/// `S = W(mu, nu) - (W(mu, mu) + W(nu, nu)) / 2`; `eps` is resolved from
/// `c_xy` and shared by all three terms.
pub fn sinkhorn_divergence(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    c_xy: &CostMatrix,
    c_xx: &CostMatrix,
    c_yy: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<Divergence> {
    divergence_masses(mu.masses(), nu.masses(), c_xy, c_xx, c_yy, cfg, mu.is_paired_with(nu))
}

pub fn divergence_masses(
    p: &[f64],
    q: &[f64],
    c_xy: &CostMatrix,
    c_xx: &CostMatrix,
    c_yy: &CostMatrix,
    cfg: &SinkhornConfig,
    paired: bool,
) -> Result<Divergence> {
    let eps = cfg.epsilon.resolve(c_xy)?;
    let cross_solution = sinkhorn_masses(p, q, c_xy, eps, cfg, paired)?;
    let sm = symmetric_self_transport(p, c_xx, eps, cfg)?;
    let sn = symmetric_self_transport(q, c_yy, eps, cfg)?;
    let cross = cross_solution.value;
    Ok(Divergence {
        value: cross - 0.5 * (sm.value + sn.value),
        cross,
        self_mu: sm.value,
        self_nu: sn.value,
        epsilon: eps,
        cross_solution,
        mu_potential: sm.f,
        nu_potential: sn.f,
    })
}

fn centered(v: &[f64], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mean = v.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / total;
    v.iter().map(|a| a - mean).collect()
}

/// Gradients of `W_{c,eps}` with respect to both weight vectors, each
/// centered to mass-weighted mean zero.
pub fn grad_weights(sol: &SinkhornSolution) -> Result<(Vec<f64>, Vec<f64>)> {
    if !sol.converged {
        return Err(GeotError::NotConverged);
    }
    Ok((centered(&sol.f, &sol.p), centered(&sol.g, &sol.q)))
}

/// Gradient of the divergence with respect to `mu`'s masses:
/// `f(mu, nu) - f(mu, mu)`, centered.
pub fn divergence_grad(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    c_xy: &CostMatrix,
    c_xx: &CostMatrix,
    c_yy: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<Vec<f64>> {
    let div = sinkhorn_divergence(mu, nu, c_xy, c_xx, c_yy, cfg)?;
    divergence_gradient_of(&div)
}

pub fn divergence_gradient_of(div: &Divergence) -> Result<Vec<f64>> {
    if !div.cross_solution.converged {
        return Err(GeotError::NotConverged);
    }
    let raw: Vec<f64> = div
        .cross_solution
        .f
        .iter()
        .zip(&div.mu_potential)
        .map(|(a, b)| a - b)
        .collect();
    Ok(centered(&raw, &div.cross_solution.p))
}
