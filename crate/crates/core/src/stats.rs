//! Pointwise error metrics, Moran's I and Pearson correlations.

use serde::Serialize;

use crate::domain::{CostMatrix, LocationSet, SpatialSignature};
use crate::error::{GeotError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightScheme {
    /// `w_ij = -C_ij`.
    NegCost,
    /// Binary k-nearest-neighbour weights.
    Knn(usize),
    Custom,
}

/// Spatial weights for Moran's I. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MoranWeights {
    n: usize,
    matrix: Vec<f64>,
    scheme: WeightScheme,
    row_standardized: bool,
}

impl MoranWeights {
    pub fn neg_cost(costs: &CostMatrix) -> Result<Self> {
        if costs.rows() != costs.cols() {
            return Err(GeotError::DimensionMismatch(format!(
                "weights need a square cost matrix, got {}x{}",
                costs.rows(),
                costs.cols()
            )));
        }
        let n = costs.rows();
        let matrix = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { -costs.data()[k] })
            .collect();
        Ok(Self {
            n,
            matrix,
            scheme: WeightScheme::NegCost,
            row_standardized: false,
        })
    }

    /// Each row gets ones at its `k` nearest other locations (Euclidean
    /// distance, ties to the lower index).
    pub fn knn(locations: &LocationSet, k: usize) -> Result<Self> {
        let n = locations.len();
        if k == 0 || k >= n {
            return Err(GeotError::InvalidInput(format!(
                "k must be in 1..{n} for {n} locations, got {k}"
            )));
        }
        let mut matrix = vec![0.0; n * n];
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for i in 0..n {
            order.clear();
            let a = locations.get(i);
            order.extend((0..n).filter(|&j| j != i).map(|j| (a.distance(locations.get(j)), j)));
            order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            for &(_, j) in &order[..k] {
                matrix[i * n + j] = 1.0;
            }
        }
        Ok(Self {
            n,
            matrix,
            scheme: WeightScheme::Knn(k),
            row_standardized: false,
        })
    }

    /// Arbitrary weights; diagonal entries are overwritten with zero.
    pub fn custom(n: usize, mut matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(GeotError::DimensionMismatch(format!(
                "expected {} weights, got {}",
                n * n,
                matrix.len()
            )));
        }
        if let Some(index) = matrix.iter().position(|w| !w.is_finite()) {
            return Err(GeotError::NonFinite { index });
        }
        for i in 0..n {
            matrix[i * n + i] = 0.0;
        }
        Ok(Self {
            n,
            matrix,
            scheme: WeightScheme::Custom,
            row_standardized: false,
        })
    }

    /// Divides each row by its sum; rows summing to zero are left as is.
    pub fn row_standardize(mut self) -> Self {
        for row in self.matrix.chunks_mut(self.n) {
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|w| *w /= s);
            }
        }
        self.row_standardized = true;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn is_row_standardized(&self) -> bool {
        self.row_standardized
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// How the `n / sum(w)` prefactor treats the sign of `sum(w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MoranNormalization {
    /// `n / |sum(w)|`: identical to the textbook form for nonnegative
    /// weights, and keeps positive autocorrelation positive for `w = -C`.
    #[default]
    AbsoluteSum,
    /// `n / sum(w)` taken literally.
    SignedSum,
}

pub fn morans_i(values: &[f64], weights: &MoranWeights) -> Result<f64> {
    morans_i_with(values, weights, MoranNormalization::default())
}

pub fn morans_i_with(
    values: &[f64],
    weights: &MoranWeights,
    normalization: MoranNormalization,
) -> Result<f64> {
    let n = values.len();
    if n != weights.n {
        return Err(GeotError::DimensionMismatch(format!(
            "{n} values for {} weights",
            weights.n
        )));
    }
    if n < 2 {
        return Err(GeotError::InvalidInput("Moran's I needs at least two values".into()));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(GeotError::NonFinite { index });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = z.iter().map(|d| d * d).sum();
    let scale = z.iter().map(|d| d.abs()).fold(0.0, f64::max);
    if denom == 0.0 || scale <= 1e-12 * mean.abs() {
        return Err(GeotError::ConstantField);
    }
    let w_sum: f64 = weights.matrix.iter().sum();
    if w_sum == 0.0 {
        return Err(GeotError::DegenerateWeights);
    }
    let mut num = 0.0;
    for (i, row) in weights.matrix.chunks(n).enumerate() {
        num += z[i] * row.iter().zip(&z).map(|(w, zj)| w * zj).sum::<f64>();
    }
    let norm = match normalization {
        MoranNormalization::AbsoluteSum => w_sum.abs(),
        MoranNormalization::SignedSum => w_sum,
    };
    Ok(n as f64 / norm * num / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointwiseMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// `|sum(obs) - sum(pred)|`.
    pub delta: f64,
}

pub fn pointwise_metrics(pred: &SpatialSignature, obs: &SpatialSignature) -> Result<PointwiseMetrics> {
    if !pred.locations().same_ids(obs.locations()) {
        return Err(GeotError::DimensionMismatch(
            "prediction and observation locations differ".into(),
        ));
    }
    pointwise_from_slices(pred.masses(), obs.masses())
}

pub fn pointwise_from_slices(pred: &[f64], obs: &[f64]) -> Result<PointwiseMetrics> {
    if pred.len() != obs.len() || pred.is_empty() {
        return Err(GeotError::DimensionMismatch(format!(
            "{} predictions for {} observations",
            pred.len(),
            obs.len()
        )));
    }
    let n = pred.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (p, o) in pred.iter().zip(obs) {
        let d = o - p;
        sq += d * d;
        abs += d.abs();
    }
    let mse = sq / n;
    Ok(PointwiseMetrics {
        mse,
        rmse: mse.sqrt(),
        mae: abs / n,
        delta: (obs.iter().sum::<f64>() - pred.iter().sum::<f64>()).abs(),
    })
}

/// Pearson correlation; `None` when either column is constant or the
/// columns have different lengths or fewer than two entries.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise Pearson correlations between named metric columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }
}

/// Columns may contain `None` (e.g. an undefined Moran's I); a pair is
/// correlated over the rows where both entries are present.
pub fn metric_correlation(columns: &[(&str, Vec<Option<f64>>)]) -> Result<CorrelationMatrix> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(GeotError::DimensionMismatch("metric columns differ in length".into()));
    }
    if rows < 3 {
        return Err(GeotError::InvalidInput(format!(
            "correlation needs at least 3 rows, got {rows}"
        )));
    }
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[a]
                .1
                .iter()
                .zip(&columns[b].1)
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            let r = if xs.len() >= 3 { pearson(&xs, &ys) } else { None };
            values[a][b] = r;
            values[b][a] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|c| c.0.to_string()).collect(),
        values,
    })
}
