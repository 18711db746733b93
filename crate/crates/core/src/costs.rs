//! Cost-matrix builders and the cost CSV loader.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::domain::{CostMatrix, LocationSet};
use crate::error::{GeotError, Result};

/// Default cap on the number of entries of a generated matrix (~400 MB).
pub const DEFAULT_ENTRY_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostPower {
    /// Distance.
    #[default]
    One,
    /// Squared distance.
    Two,
}

impl CostPower {
    fn apply(self, d: f64) -> f64 {
        match self {
            CostPower::One => d,
            CostPower::Two => d * d,
        }
    }
}

/// `C_ij = |x_i - x_j|^power` within one location set.
pub fn euclidean_costs(locs: &LocationSet, power: CostPower) -> Result<CostMatrix> {
    let n = locs.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = power.apply(locs.get(i).distance(locs.get(j)));
            data[i * n + j] = c;
            data[j * n + i] = c;
        }
    }
    CostMatrix::new(n, n, data)
}

/// Costs between two distinct location sets (rows: `from`).
pub fn euclidean_between(from: &LocationSet, to: &LocationSet, power: CostPower) -> Result<CostMatrix> {
    if from.dim() != to.dim() {
        return Err(GeotError::DimensionMismatch(format!(
            "coordinate dimensions {} and {}",
            from.dim(),
            to.dim()
        )));
    }
    CostMatrix::from_fn(from.len(), to.len(), |i, j| {
        power.apply(from.get(i).distance(to.get(j)))
    })
}

/// Entries above `cutoff` become `penalty`; the diagonal is kept.
pub fn capped_costs(base: &CostMatrix, cutoff: f64, penalty: f64) -> Result<CostMatrix> {
    if !(cutoff > 0.0) || !(penalty >= cutoff) || !penalty.is_finite() {
        return Err(GeotError::InvalidInput(format!(
            "need 0 < cutoff <= penalty, got cutoff {cutoff}, penalty {penalty}"
        )));
    }
    let cols = base.cols();
    let data = base
        .data()
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if k / cols == k % cols || c <= cutoff {
                c
            } else {
                penalty
            }
        })
        .collect();
    CostMatrix::new(base.rows(), cols, data)
}

/// Index into a space-time cost matrix: `flattened = location * T + time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceTimeIndex {
    pub location: usize,
    pub time: usize,
}

impl SpaceTimeIndex {
    pub fn flatten(self, steps: usize) -> usize {
        debug_assert!(self.time < steps);
        self.location * steps + self.time
    }

    pub fn unflatten(flat: usize, steps: usize) -> Self {
        Self {
            location: flat / steps,
            time: flat % steps,
        }
    }
}

/// `Psi[(i,k),(j,l)] = max(C_ij, time_unit_cost * |t_k - t_l|)`.
pub fn space_time_costs(
    costs: &CostMatrix,
    times: &[f64],
    time_unit_cost: f64,
    entry_budget: usize,
) -> Result<CostMatrix> {
    if costs.rows() != costs.cols() {
        return Err(GeotError::DimensionMismatch(
            "space-time costs need a square spatial matrix".into(),
        ));
    }
    if times.is_empty() {
        return Err(GeotError::InvalidInput("no time steps".into()));
    }
    if let Some(index) = times.iter().position(|t| !t.is_finite()) {
        return Err(GeotError::NonFinite { index });
    }
    if !(time_unit_cost >= 0.0) || !time_unit_cost.is_finite() {
        return Err(GeotError::InvalidInput(format!(
            "time_unit_cost must be finite and >= 0, got {time_unit_cost}"
        )));
    }
    let (n, t) = (costs.rows(), times.len());
    let side = n.checked_mul(t).ok_or(GeotError::SizeLimit {
        entries: usize::MAX,
        budget: entry_budget,
    })?;
    let entries = side.saturating_mul(side);
    if entries > entry_budget {
        return Err(GeotError::SizeLimit {
            entries,
            budget: entry_budget,
        });
    }
    let mut data = Vec::with_capacity(entries);
    for a in 0..side {
        let (i, k) = (a / t, a % t);
        let row = costs.row(i);
        for b in 0..side {
            let (j, l) = (b / t, b % t);
            let wait = time_unit_cost * (times[k] - times[l]).abs();
            data.push(if row[j] >= wait { row[j] } else { wait });
        }
    }
    let psi = CostMatrix::new(side, side, data)?;
    Ok(if costs.is_symmetric() { psi } else { psi.into_asymmetric() })
}

/// Distances from cluster centers (rows) to points (columns), flagged
/// asymmetric.
pub fn cluster_point_costs(centers: &LocationSet, points: &LocationSet) -> Result<CostMatrix> {
    Ok(euclidean_between(centers, points, CostPower::One)?.into_asymmetric())
}

/// Reads `from_id,to_id,cost` rows. Missing pairs take `default` when given;
/// otherwise they are an error, except the diagonal of a matrix whose rows
/// and columns are the same set, which defaults to 0.
pub fn load_cost_matrix(
    path: impl AsRef<Path>,
    rows: &LocationSet,
    cols: &LocationSet,
    default: Option<f64>,
) -> Result<CostMatrix> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| GeotError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_cost_matrix(file, rows, cols, default)
}

pub fn read_cost_matrix(
    reader: impl Read,
    rows: &LocationSet,
    cols: &LocationSet,
    default: Option<f64>,
) -> Result<CostMatrix> {
    if let Some(d) = default {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(GeotError::InvalidInput(format!("invalid default cost {d}")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| GeotError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["from_id", "to_id", "cost"] {
        return Err(GeotError::Parse {
            line: 1,
            message: format!("expected header from_id,to_id,cost, got {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let (n, m) = (rows.len(), cols.len());
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| GeotError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| GeotError::Parse { line, message };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", record.len())));
        }
        let i = rows
            .index_of(&record[0])
            .ok_or_else(|| parse_err(format!("unknown id {:?}", &record[0])))?;
        let j = cols
            .index_of(&record[1])
            .ok_or_else(|| parse_err(format!("unknown id {:?}", &record[1])))?;
        let cost: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(format!("invalid cost {:?}", &record[2])))?;
        if !cost.is_finite() {
            return Err(parse_err(format!("non-finite cost {cost}")));
        }
        if cost < 0.0 {
            return Err(parse_err(format!("negative cost {cost}")));
        }
        if cells.insert((i, j), cost).is_some() {
            return Err(parse_err(format!("duplicate pair {},{}", &record[0], &record[1])));
        }
    }
    let same_set = rows.same_ids(cols);
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let c = match (cells.get(&(i, j)), default) {
                (Some(&c), _) => c,
                (None, _) if same_set && i == j => 0.0,
                (None, Some(d)) => d,
                (None, None) => {
                    return Err(GeotError::InvalidInput(format!(
                        "missing cost for {} -> {} and no default",
                        rows.get(i).id,
                        cols.get(j).id
                    )))
                }
            };
            data.push(c);
        }
    }
    CostMatrix::new(n, m, data)
}
