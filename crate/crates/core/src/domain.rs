//! Domain types shared by every solver and by the metric pipeline.
//!
//! Signatures are immutable once built. A [`LocationSet`] is held behind an
//! [`Arc`] so that predictions and observations over the same stations share
//! one allocation, which is also how the solvers detect the paired case.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GeotError, Result};

/// Relative tolerance under which two totals count as balanced.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// A point in R^d with an opaque identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub coords: Vec<f64>,
}

impl Location {
    pub fn new(id: impl Into<String>, coords: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            coords,
        }
    }

    pub fn xy(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self::new(id, vec![x, y])
    }

    pub fn distance(&self, other: &Location) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Ordered set of locations with unique ids and a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    locations: Vec<Location>,
    index: HashMap<String, usize>,
}

impl LocationSet {
    pub fn new(locations: Vec<Location>) -> Result<Self> {
        if locations.is_empty() {
            return Err(GeotError::InvalidInput("empty location set".into()));
        }
        let dim = locations[0].coords.len();
        if dim == 0 {
            return Err(GeotError::InvalidInput(
                "locations need at least one coordinate".into(),
            ));
        }
        let mut index = HashMap::with_capacity(locations.len());
        for (i, loc) in locations.iter().enumerate() {
            if loc.coords.len() != dim {
                return Err(GeotError::DimensionMismatch(format!(
                    "location {} has {} coordinates, expected {}",
                    loc.id,
                    loc.coords.len(),
                    dim
                )));
            }
            if loc.coords.iter().any(|c| !c.is_finite()) {
                return Err(GeotError::NonFinite { index: i });
            }
            if index.insert(loc.id.clone(), i).is_some() {
                return Err(GeotError::InvalidInput(format!(
                    "duplicate location id {}",
                    loc.id
                )));
            }
        }
        Ok(Self { locations, index })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].coords.len()
    }

    pub fn get(&self, i: usize) -> &Location {
        &self.locations[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Location> {
        self.locations.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.locations.iter().map(|l| l.id.as_str())
    }

    /// Same ids in the same order. Coordinates are not compared.
    pub fn same_ids(&self, other: &LocationSet) -> bool {
        self.len() == other.len() && self.ids().zip(other.ids()).all(|(a, b)| a == b)
    }
}

/// Locations carrying nonnegative masses: predictions or observations.
#[derive(Debug, Clone)]
pub struct SpatialSignature {
    locations: Arc<LocationSet>,
    masses: Vec<f64>,
}

impl SpatialSignature {
    /// Builds a signature, enforcing finite, nonnegative masses with a
    /// positive total.
    pub fn new(locations: Arc<LocationSet>, masses: Vec<f64>) -> Result<Self> {
        let sig = Self::new_unchecked(locations, masses)?;
        for (i, &m) in sig.masses.iter().enumerate() {
            if m < 0.0 {
                return Err(GeotError::NegativeMass { index: i, value: m });
            }
        }
        if !sig.masses.iter().any(|&m| m > 0.0) {
            return Err(GeotError::InvalidInput(
                "signature needs at least one positive mass".into(),
            ));
        }
        Ok(sig)
    }

    /// Builds a signature that may contain negative masses. Only the length
    /// and finiteness are checked; solvers reject negative entries later.
    pub fn new_unchecked(locations: Arc<LocationSet>, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != locations.len() {
            return Err(GeotError::DimensionMismatch(format!(
                "{} masses for {} locations",
                masses.len(),
                locations.len()
            )));
        }
        if let Some(i) = masses.iter().position(|m| !m.is_finite()) {
            return Err(GeotError::NonFinite { index: i });
        }
        Ok(Self { locations, masses })
    }

    pub fn locations(&self) -> &Arc<LocationSet> {
        &self.locations
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Whether both signatures live on the same location set.
    pub fn is_paired_with(&self, other: &SpatialSignature) -> bool {
        Arc::ptr_eq(&self.locations, &other.locations) || self.locations.same_ids(&other.locations)
    }

    /// Copy with every mass multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.locations.clone(),
            self.masses.iter().map(|m| m * factor).collect(),
        )
    }

    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        Self::new(self.locations.clone(), masses)
    }
}

/// Pairwise transport costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    symmetric: bool,
}

impl CostMatrix {
    /// Validates entries (finite, nonnegative) and infers the symmetry flag.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(GeotError::InvalidInput("empty cost matrix".into()));
        }
        if data.len() != rows * cols {
            return Err(GeotError::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        for (k, &c) in data.iter().enumerate() {
            if !c.is_finite() {
                return Err(GeotError::NonFinite { index: k });
            }
            if c < 0.0 {
                return Err(GeotError::InvalidInput(format!(
                    "negative cost {} at ({}, {})",
                    c,
                    k / cols,
                    k % cols
                )));
            }
        }
        let mut m = Self {
            rows,
            cols,
            data,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Marks the matrix as asymmetric regardless of its entries.
    pub fn into_asymmetric(mut self) -> Self {
        self.symmetric = false;
        self
    }

    fn check_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self.get(i, j);
                let b = self.get(j, i);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return false;
                }
            }
        }
        true
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
            symmetric: self.symmetric,
        }
    }

    /// Off-diagonal entries of a square matrix, or every entry otherwise.
    pub fn off_diagonal(&self) -> Vec<f64> {
        if self.rows != self.cols {
            return self.data.clone();
        }
        let mut out = Vec::with_capacity(self.rows * self.cols - self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    out.push(self.get(i, j));
                }
            }
        }
        out
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(GeotError::DimensionMismatch(format!(
                "cost matrix is {}x{}, expected {}x{}",
                self.rows, self.cols, rows, cols
            )));
        }
        Ok(())
    }
}

/// One nonzero cell of a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanEdge {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
    pub unit_cost: f64,
    pub contribution: f64,
}

/// Sparse coupling with its cost decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub edges: Vec<PlanEdge>,
    pub total_cost: f64,
    pub source_marginal_error: f64,
    pub target_marginal_error: f64,
    /// Mass left in place on zero-cost i -> i cells of a paired problem.
    /// Those cells are not listed in `edges`.
    pub stationary_mass: f64,
}

impl TransportPlan {
    /// Builds a plan from dense-or-sparse cells, dropping masses at or below
    /// `floor` and zero-cost stationary cells when `paired` is set.
    pub(crate) fn from_cells(
        cells: impl IntoIterator<Item = (usize, usize, f64)>,
        costs: &CostMatrix,
        paired: bool,
        floor: f64,
        source_marginal_error: f64,
        target_marginal_error: f64,
    ) -> Self {
        let mut edges = Vec::new();
        let mut stationary_mass = 0.0;
        for (i, j, mass) in cells {
            if mass <= floor {
                continue;
            }
            let unit_cost = costs.get(i, j);
            if paired && i == j && unit_cost == 0.0 {
                stationary_mass += mass;
                continue;
            }
            edges.push(PlanEdge {
                source: i,
                target: j,
                mass,
                unit_cost,
                contribution: mass * unit_cost,
            });
        }
        // an empty f64 sum is -0.0
        let total_cost = edges.iter().map(|e| e.contribution).sum::<f64>() + 0.0;
        Self {
            edges,
            total_cost,
            source_marginal_error,
            target_marginal_error,
            stationary_mass,
        }
    }

    /// Edges sorted by contribution, largest first; ties by (source, target).
    pub fn sorted_by_contribution(&self) -> Vec<PlanEdge> {
        let mut edges = self.edges.clone();
        edges.sort_by(|a, b| {
            b.contribution
                .total_cmp(&a.contribution)
                .then(a.source.cmp(&b.source))
                .then(a.target.cmp(&b.target))
        });
        edges
    }
}

/// Observation minus prediction, per location.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub locations: Arc<LocationSet>,
}

impl Residuals {
    /// `obs - pred` over a shared location set.
    pub fn between(pred: &SpatialSignature, obs: &SpatialSignature) -> Result<Self> {
        if !pred.is_paired_with(obs) {
            return Err(GeotError::DimensionMismatch(
                "residuals need predictions and observations on the same locations".into(),
            ));
        }
        let values = obs
            .masses()
            .iter()
            .zip(pred.masses())
            .map(|(o, p)| o - p)
            .collect();
        Ok(Self {
            values,
            locations: obs.locations().clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Prediction,
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Balance {
    Balanced,
    Unbalanced { gap: f64 },
}

/// Outcome of [`validate_pair`]. Hard failures make the pair unusable for
/// any solver; the balance class decides between exact and partial OT.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub location_mismatch: bool,
    pub negative_masses: Vec<(Side, usize)>,
    pub non_finite: Vec<(Side, usize)>,
    pub prediction_total: f64,
    pub observation_total: f64,
    pub balance: Balance,
    pub hard_failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.hard_failures.is_empty()
    }

    pub fn is_balanced(&self) -> bool {
        matches!(self.balance, Balance::Balanced)
    }

    pub fn mass_gap(&self) -> f64 {
        match self.balance {
            Balance::Balanced => 0.0,
            Balance::Unbalanced { gap } => gap,
        }
    }
}

/// Whether two totals agree within [`BALANCE_TOLERANCE`] (relative).
pub fn totals_balanced(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= BALANCE_TOLERANCE * scale
}

/// Report-only gate run before any solver.
pub fn validate_pair(pred: &SpatialSignature, obs: &SpatialSignature) -> ValidationReport {
    let mut negative_masses = Vec::new();
    let mut non_finite = Vec::new();
    let mut hard_failures = Vec::new();

    for (side, sig) in [(Side::Prediction, pred), (Side::Observation, obs)] {
        for (i, &m) in sig.masses().iter().enumerate() {
            if !m.is_finite() {
                non_finite.push((side, i));
            } else if m < 0.0 {
                negative_masses.push((side, i));
            }
        }
    }

    let location_mismatch = !pred.is_paired_with(obs);
    if location_mismatch {
        hard_failures.push("location mismatch".to_string());
    }
    if !negative_masses.is_empty() {
        hard_failures.push("negative mass".to_string());
    }
    if !non_finite.is_empty() {
        hard_failures.push("non-finite mass".to_string());
    }

    let prediction_total = pred.total();
    let observation_total = obs.total();
    let balance = if totals_balanced(prediction_total, observation_total) {
        Balance::Balanced
    } else {
        Balance::Unbalanced {
            gap: (prediction_total - observation_total).abs(),
        }
    };

    ValidationReport {
        location_mismatch,
        negative_masses,
        non_finite,
        prediction_total,
        observation_total,
        balance,
        hard_failures,
    }
}

/// A signature lifted so that its minimum mass reaches `floor`.
#[derive(Debug, Clone)]
pub struct Shifted {
    pub signature: SpatialSignature,
    pub shift: f64,
}

/// Adds `floor - min(masses)` to every mass when the minimum is below
/// `floor`; otherwise returns the input unchanged with a zero shift.
pub fn shift_to_nonnegative(sig: &SpatialSignature, floor: f64) -> Result<Shifted> {
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(GeotError::InvalidInput(format!(
            "floor must be finite and >= 0, got {floor}"
        )));
    }
    let shift = shift_needed(sig.masses(), floor)?;
    shifted_by(sig, shift)
}

/// Shift that brings the smallest of `masses` up to `floor` (0 if none needed).
pub fn shift_needed(masses: &[f64], floor: f64) -> Result<f64> {
    if let Some(i) = masses.iter().position(|m| !m.is_finite()) {
        return Err(GeotError::NonFinite { index: i });
    }
    let min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min < floor { floor - min } else { 0.0 })
}

/// Adds a constant shift to every mass.
pub fn shifted_by(sig: &SpatialSignature, shift: f64) -> Result<Shifted> {
    if shift == 0.0 {
        return Ok(Shifted {
            signature: sig.clone(),
            shift,
        });
    }
    let masses = sig.masses().iter().map(|m| m + shift).collect();
    Ok(Shifted {
        signature: SpatialSignature::new_unchecked(sig.locations().clone(), masses)?,
        shift,
    })
}
