//! Exact discrete optimal transport by the network simplex method.
//!
//! The transportation problem is a min-cost flow on the complete bipartite
//! graph sources -> targets. A basis is a spanning tree with `n + m - 1`
//! arcs; the initial one comes from the north-west-corner rule. Node
//! potentials are recomputed from the tree after every pivot, so the dual
//! prices returned with the plan satisfy `u_i + v_j = C_ij` on every basic
//! arc up to rounding.

use crate::domain::{CostMatrix, SpatialSignature, TransportPlan};
use crate::error::{GeotError, Result};

/// Entering/leaving rule used while the solver is stuck at a degenerate vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Lowest-index entering and leaving arcs for the duration of every run
    /// of degenerate pivots. Guarantees termination.
    #[default]
    Blands,
    /// Keep block-search pricing throughout.
    FirstImproving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolverConfig {
    /// Relative tolerance on the mismatch of the two totals.
    pub feasibility_tolerance: f64,
    /// Pivot limit; `None` means `100 * n * m`.
    pub max_pivots: Option<usize>,
    pub degenerate_pivot_rule: PivotRule,
}

impl Default for ExactSolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tolerance: 1e-9,
            max_pivots: None,
            degenerate_pivot_rule: PivotRule::Blands,
        }
    }
}

impl ExactSolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.feasibility_tolerance > 0.0) {
            return Err(GeotError::InvalidInput(
                "feasibility tolerance must be positive".into(),
            ));
        }
        if self.max_pivots == Some(0) {
            return Err(GeotError::InvalidInput("max_pivots must be positive".into()));
        }
        Ok(())
    }
}

/// Optimal plan together with the dual prices certifying it.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    /// Source-side prices `u`.
    pub row_potentials: Vec<f64>,
    /// Target-side prices `v`.
    pub col_potentials: Vec<f64>,
    /// Every nonzero basic cell `(i, j, mass)`, stationary cells included.
    pub flows: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

/// Solves the balanced problem between two signatures.
pub fn solve_exact(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    cfg: &ExactSolverConfig,
) -> Result<TransportPlan> {
    Ok(solve_exact_with_duals(mu, nu, costs, cfg)?.plan)
}

/// Like [`solve_exact`] but also returns dual prices and pivot count.
pub fn solve_exact_with_duals(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    cfg: &ExactSolverConfig,
) -> Result<ExactSolution> {
    let paired = mu.is_paired_with(nu);
    solve_transport(mu.masses(), nu.masses(), costs, cfg, paired)
}

/// Optimal transport cost `W_c(mu, nu)`.
pub fn wasserstein(
    mu: &SpatialSignature,
    nu: &SpatialSignature,
    costs: &CostMatrix,
    cfg: &ExactSolverConfig,
) -> Result<f64> {
    Ok(solve_exact(mu, nu, costs, cfg)?.total_cost)
}

/// Network simplex on raw mass vectors. `paired` marks `i == j` cells as the
/// same location so zero-cost stationary mass is kept out of the edge list.
pub fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    costs: &CostMatrix,
    cfg: &ExactSolverConfig,
    paired: bool,
) -> Result<ExactSolution> {
    cfg.validate()?;
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(GeotError::InvalidInput("empty mass vector".into()));
    }
    costs.check_shape(n, m)?;
    for (k, &x) in supply.iter().chain(demand).enumerate() {
        if !x.is_finite() {
            return Err(GeotError::NonFinite { index: k });
        }
        if x < 0.0 {
            let index = if k < n { k } else { k - n };
            return Err(GeotError::NegativeMass { index, value: x });
        }
    }
    let source_total: f64 = supply.iter().sum();
    let target_total: f64 = demand.iter().sum();
    let scale = source_total.max(target_total);
    if (source_total - target_total).abs() > cfg.feasibility_tolerance * scale {
        return Err(GeotError::Unbalanced {
            source_total,
            target_total,
        });
    }

    let max_pivots = cfg.max_pivots.unwrap_or(100 * n * m);
    let mut simplex = Simplex::new(supply, demand, costs);
    let pivots = simplex.run(max_pivots, cfg.degenerate_pivot_rule)?;

    let mut row = vec![0.0; n];
    let mut col = vec![0.0; m];
    let floor = 1e-14 * scale;
    let mut flows = Vec::new();
    for arc in &simplex.basis {
        if arc.flow > floor {
            row[arc.source] += arc.flow;
            col[arc.target] += arc.flow;
            flows.push((arc.source, arc.target, arc.flow));
        }
    }
    flows.sort_by_key(|&(i, j, _)| (i, j));
    let row_err = l1(&row, supply);
    let col_err = l1(&col, demand);
    let plan = TransportPlan::from_cells(flows.iter().copied(), costs, paired, 0.0, row_err, col_err);

    Ok(ExactSolution {
        plan,
        row_potentials: simplex.potential[..n].to_vec(),
        col_potentials: simplex.potential[n..].to_vec(),
        flows,
        pivots,
    })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, Copy)]
struct BasicArc {
    source: usize,
    target: usize,
    flow: f64,
}

struct Simplex<'a> {
    n: usize,
    m: usize,
    supply: &'a [f64],
    demand: &'a [f64],
    costs: &'a CostMatrix,
    basis: Vec<BasicArc>,
    /// Basis slots incident to each node; sources are `0..n`, targets `n..n+m`.
    adjacency: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_slot: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    queue: Vec<usize>,
    reduced_cost_tol: f64,
    degenerate_tol: f64,
    next_arc: usize,
    block: usize,
}

const NONE: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn new(supply: &'a [f64], demand: &'a [f64], costs: &'a CostMatrix) -> Self {
        let n = supply.len();
        let m = demand.len();
        let nodes = n + m;
        let scale: f64 = supply.iter().sum::<f64>().max(demand.iter().sum());
        let mut s = Self {
            n,
            m,
            supply,
            demand,
            costs,
            basis: Vec::with_capacity(nodes - 1),
            adjacency: vec![Vec::new(); nodes],
            parent: vec![NONE; nodes],
            parent_slot: vec![NONE; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
            queue: Vec::with_capacity(nodes),
            reduced_cost_tol: 1e-11 * costs.max().max(f64::MIN_POSITIVE),
            degenerate_tol: 1e-14 * scale,
            next_arc: 0,
            block: ((n * m) as f64).sqrt().ceil().max(10.0) as usize,
        };
        s.north_west_corner();
        s.rebuild_tree();
        s
    }

    fn north_west_corner(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut rs = self.supply.to_vec();
        let mut rd = self.demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = rs[i].min(rd[j]).max(0.0);
            rs[i] -= x;
            rd[j] -= x;
            self.push_arc(BasicArc {
                source: i,
                target: j,
                flow: x,
            });
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || rs[i] <= 0.0 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    fn push_arc(&mut self, arc: BasicArc) {
        let slot = self.basis.len();
        self.adjacency[arc.source].push(slot);
        self.adjacency[self.n + arc.target].push(slot);
        self.basis.push(arc);
    }

    /// Parent pointers, depths and potentials by BFS from source 0.
    fn rebuild_tree(&mut self) {
        let n = self.n;
        self.parent[0] = NONE;
        self.parent_slot[0] = NONE;
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        self.queue.clear();
        self.queue.push(0);
        let mut head = 0;
        while head < self.queue.len() {
            let node = self.queue[head];
            head += 1;
            for k in 0..self.adjacency[node].len() {
                let slot = self.adjacency[node][k];
                if slot == self.parent_slot[node] {
                    continue;
                }
                let arc = self.basis[slot];
                let c = self.costs.get(arc.source, arc.target);
                let child = if node < n {
                    let t = n + arc.target;
                    self.potential[t] = c - self.potential[node];
                    t
                } else {
                    let s = arc.source;
                    self.potential[s] = c - self.potential[node];
                    s
                };
                self.parent[child] = node;
                self.parent_slot[child] = slot;
                self.depth[child] = self.depth[node] + 1;
                self.queue.push(child);
            }
        }
        debug_assert_eq!(self.queue.len(), n + self.m, "basis is not a spanning tree");
    }

    #[inline]
    fn reduced_cost(&self, i: usize, j: usize) -> f64 {
        self.costs.get(i, j) - self.potential[i] - self.potential[self.n + j]
    }

    /// Most negative reduced cost within the first block (cyclic) that has one.
    fn block_search(&mut self) -> Option<(usize, usize)> {
        let total = self.n * self.m;
        let mut best = -self.reduced_cost_tol;
        let mut chosen = None;
        let mut scanned = 0;
        let mut a = self.next_arc;
        let mut i = a / self.m;
        let mut j = a % self.m;
        let mut in_block = 0;
        while scanned < total {
            let rc = self.reduced_cost(i, j);
            if rc < best {
                best = rc;
                chosen = Some((i, j));
            }
            scanned += 1;
            in_block += 1;
            a += 1;
            j += 1;
            if j == self.m {
                j = 0;
                i += 1;
                if i == self.n {
                    i = 0;
                    a = 0;
                }
            }
            if in_block == self.block {
                if chosen.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        self.next_arc = a;
        chosen
    }

    /// Bland's rule: lowest-index arc with negative reduced cost.
    fn lowest_index(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            let ui = self.potential[i];
            let row = self.costs.row(i);
            for (j, &c) in row.iter().enumerate() {
                if c - ui - self.potential[self.n + j] < -self.reduced_cost_tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    fn run(&mut self, max_pivots: usize, rule: PivotRule) -> Result<usize> {
        let mut pivots = 0;
        let mut bland = false;
        // (slot, decreasing?) for every tree arc on the pivot cycle
        let mut cycle: Vec<(usize, bool)> = Vec::new();
        loop {
            let entering = if bland {
                self.lowest_index()
            } else {
                self.block_search()
            };
            let Some((ie, je)) = entering else {
                return Ok(pivots);
            };
            if pivots >= max_pivots {
                let (row_error, col_error) = self.current_errors();
                return Err(GeotError::SolverStalled {
                    pivots,
                    row_error,
                    col_error,
                });
            }
            pivots += 1;

            // walk from the entering arc's target back to its source through the tree
            cycle.clear();
            let mut a = self.n + je;
            let mut b = ie;
            while a != b {
                if self.depth[a] >= self.depth[b] {
                    cycle.push((self.parent_slot[a], a >= self.n));
                    a = self.parent[a];
                } else {
                    cycle.push((self.parent_slot[b], b < self.n));
                    b = self.parent[b];
                }
            }

            let mut theta = f64::INFINITY;
            let mut leaving = NONE;
            let mut leaving_index = usize::MAX;
            for &(slot, decreasing) in &cycle {
                if !decreasing {
                    continue;
                }
                let arc = self.basis[slot];
                let index = arc.source * self.m + arc.target;
                if arc.flow < theta || (bland && arc.flow == theta && index < leaving_index) {
                    theta = arc.flow;
                    leaving = slot;
                    leaving_index = index;
                }
            }
            debug_assert!(leaving != NONE, "pivot cycle without a decreasing arc");
            let theta = theta.max(0.0);

            for &(slot, decreasing) in &cycle {
                let arc = &mut self.basis[slot];
                if decreasing {
                    arc.flow = (arc.flow - theta).max(0.0);
                } else {
                    arc.flow += theta;
                }
            }

            let old = self.basis[leaving];
            let s_adj = &mut self.adjacency[old.source];
            s_adj.swap_remove(s_adj.iter().position(|&s| s == leaving).unwrap());
            let t_adj = &mut self.adjacency[self.n + old.target];
            t_adj.swap_remove(t_adj.iter().position(|&s| s == leaving).unwrap());
            self.basis[leaving] = BasicArc {
                source: ie,
                target: je,
                flow: theta,
            };
            self.adjacency[ie].push(leaving);
            self.adjacency[self.n + je].push(leaving);
            self.rebuild_tree();

            bland = rule == PivotRule::Blands && theta <= self.degenerate_tol;
        }
    }

    fn current_errors(&self) -> (f64, f64) {
        let mut row = vec![0.0; self.n];
        let mut col = vec![0.0; self.m];
        for arc in &self.basis {
            row[arc.source] += arc.flow;
            col[arc.target] += arc.flow;
        }
        (l1(&row, self.supply), l1(&col, self.demand))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(n: usize, m: usize, data: &[f64]) -> CostMatrix {
        CostMatrix::new(n, m, data.to_vec()).unwrap()
    }

    #[test]
    fn single_move() {
        let c = costs(3, 3, &[0.0, 3.0, 5.0, 3.0, 0.0, 6.0, 5.0, 6.0, 0.0]);
        let sol = solve_transport(
            &[100.0, 50.0, 10.0],
            &[10.0, 50.0, 100.0],
            &c,
            &ExactSolverConfig::default(),
            true,
        )
        .unwrap();
        assert_eq!(sol.plan.total_cost, 450.0);
        assert_eq!(sol.plan.edges.len(), 1);
        let e = sol.plan.edges[0];
        assert_eq!((e.source, e.target, e.mass, e.unit_cost), (0, 2, 90.0, 5.0));
        assert_eq!(sol.plan.stationary_mass, 70.0);
    }

    #[test]
    fn unbalanced_rejected() {
        let c = costs(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let err = solve_transport(&[1.0, 2.0], &[1.0, 1.0], &c, &ExactSolverConfig::default(), true)
            .unwrap_err();
        assert!(matches!(err, GeotError::Unbalanced { .. }));
        assert!(err.to_string().contains("use partial module"));
    }

    #[test]
    fn pivot_limit_reports_stall() {
        let c = costs(3, 3, &[9.0, 1.0, 1.0, 1.0, 9.0, 1.0, 1.0, 1.0, 9.0]);
        let cfg = ExactSolverConfig {
            max_pivots: Some(1),
            ..Default::default()
        };
        let err = solve_transport(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &c, &cfg, false).unwrap_err();
        assert!(matches!(err, GeotError::SolverStalled { pivots: 1, .. }));
    }

    #[test]
    fn rectangular_unpaired() {
        // two sources, three targets on a line; sources at 0 and 10, targets at 1, 5, 9
        let c = CostMatrix::from_fn(2, 3, |i, j| {
            let s = [0.0, 10.0][i];
            let t = [1.0, 5.0, 9.0][j];
            f64::abs(s - t)
        })
        .unwrap();
        let sol = solve_transport(&[2.0, 2.0], &[1.0, 2.0, 1.0], &c, &ExactSolverConfig::default(), false)
            .unwrap();
        // 1 unit 0->1, 1 unit 0->5, 1 unit 10->5, 1 unit 10->9
        assert!((sol.plan.total_cost - (1.0 + 5.0 + 5.0 + 1.0)).abs() < 1e-12);
        assert!(sol.plan.edges.len() <= 4, "basic solution has at most n + m - 1 edges");
    }

    #[test]
    fn zero_masses_handled() {
        let c = costs(2, 2, &[0.0, 4.0, 4.0, 0.0]);
        let sol = solve_transport(&[0.0, 3.0], &[3.0, 0.0], &c, &ExactSolverConfig::default(), true)
            .unwrap();
        assert_eq!(sol.plan.total_cost, 12.0);
    }

    #[test]
    fn both_rules_agree() {
        let c = CostMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 + (i != j) as u8 as f64)
            .unwrap();
        let p = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let a = solve_transport(&p, &p, &c, &ExactSolverConfig::default(), false).unwrap();
        let cfg = ExactSolverConfig {
            degenerate_pivot_rule: PivotRule::FirstImproving,
            ..Default::default()
        };
        let b = solve_transport(&p, &p, &c, &cfg, false).unwrap();
        assert!((a.plan.total_cost - b.plan.total_cost).abs() < 1e-12);
    }
}
