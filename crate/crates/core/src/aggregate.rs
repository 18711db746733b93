//! Spatial aggregation: clustering, demand aggregation, re-allocation to
//! points and evaluation of the same prediction at several spatial scales.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::costs::{cluster_point_costs, euclidean_costs, CostPower};
use crate::domain::{CostMatrix, Location, LocationSet, SpatialSignature};
use crate::error::{GeotError, Result};
use crate::exact::ExactSolverConfig;
use crate::partial::{solve_partial_masses, Penalty, PhiPolicy};
use crate::stats::pointwise_from_slices;
use crate::synthetic::rng_for;

pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Linkage {
    Single,
    Average,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ClusterMethod {
    KMeans { k: usize, seed: u64 },
    Agglomerative { cutoff: f64, linkage: Linkage },
    External,
}

/// Assignment of every location to one of `K` clusters, with centroids.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centers: Arc<LocationSet>,
    pub method: ClusterMethod,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Builds centroids for a label vector, relabelling clusters densely in
    /// order of first appearance.
    pub fn from_labels(
        locs: &LocationSet,
        labels: &[usize],
        method: ClusterMethod,
        center_ids: impl Fn(usize) -> String,
    ) -> Result<Self> {
        if labels.len() != locs.len() {
            return Err(GeotError::DimensionMismatch(format!(
                "{} labels for {} locations",
                labels.len(),
                locs.len()
            )));
        }
        let mut dense = BTreeMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = dense.len();
            assignment.push(*dense.entry(l).or_insert(next));
        }
        let k = dense.len();
        let dim = locs.dim();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(&locs.get(i).coords) {
                *s += x;
            }
        }
        let centers = sums
            .into_iter()
            .zip(&counts)
            .enumerate()
            .map(|(c, (s, &n))| Location::new(center_ids(c), s.iter().map(|v| v / n as f64).collect()))
            .collect();
        Ok(Self {
            assignment,
            centers: Arc::new(LocationSet::new(centers)?),
            method,
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(locs: &LocationSet, k: usize, seed: u64) -> Result<Clustering> {
    Ok(kmeans_with_trace(locs, k, seed)?.0)
}

/// Also returns the within-cluster sum of squares after each assignment step.
pub fn kmeans_with_trace(locs: &LocationSet, k: usize, seed: u64) -> Result<(Clustering, Vec<f64>)> {
    let n = locs.len();
    if k == 0 || k > n {
        return Err(GeotError::InvalidInput(format!("k = {k} for {n} locations")));
    }
    let points: Vec<&[f64]> = locs.iter().map(|l| l.coords.as_slice()).collect();
    let mut rng = rng_for(seed);

    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > r && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            objective += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed {
            break;
        }
        let dim = locs.dim();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(points[i]) {
                *s += x;
            }
        }
        for c in 0..k {
            // an empty cluster keeps its previous center
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let clustering = Clustering::from_labels(locs, &assignment, ClusterMethod::KMeans { k, seed }, |c| {
        format!("k{c}")
    })?;
    Ok((clustering, trace))
}

/// Greedy agglomeration: repeatedly merges the closest pair of clusters
/// while their linkage distance is below `cutoff`. Ties go to the pair with
/// the lowest indices.
pub fn agglomerative(locs: &LocationSet, cutoff: f64, linkage: Linkage) -> Result<Clustering> {
    if !(cutoff > 0.0) {
        return Err(GeotError::InvalidInput(format!("cutoff must be positive, got {cutoff}")));
    }
    let n = locs.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = locs.get(i).distance(locs.get(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size = vec![1usize; n];
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..n).filter(|&a| active[a]) {
            for b in (a + 1..n).filter(|&b| active[b]) {
                let d = dist[a * n + b];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((d, a, b)) = best else { break };
        if d >= cutoff {
            break;
        }
        for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
            let (da, db) = (dist[a * n + c], dist[b * n + c]);
            let merged = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => {
                    (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64
                }
            };
            dist[a * n + c] = merged;
            dist[c * n + a] = merged;
        }
        size[a] += size[b];
        active[b] = false;
        for l in label.iter_mut().filter(|l| **l == b) {
            *l = a;
        }
    }
    Clustering::from_labels(locs, &label, ClusterMethod::Agglomerative { cutoff, linkage }, |c| {
        format!("a{c}")
    })
}

/// Reads `location_id,cluster_id` rows. Center ids are the cluster ids,
/// ordered by first appearance along the location order.
pub fn external_clustering(locs: &LocationSet, reader: impl Read) -> Result<Clustering> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| GeotError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["location_id", "cluster_id"] {
        return Err(GeotError::Parse {
            line: 1,
            message: "expected header location_id,cluster_id".into(),
        });
    }
    let mut by_location: Vec<Option<String>> = vec![None; locs.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| GeotError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let i = locs.index_of(&record[0]).ok_or_else(|| GeotError::Parse {
            line,
            message: format!("unknown location {:?}", &record[0]),
        })?;
        if by_location[i].replace(record[1].to_string()).is_some() {
            return Err(GeotError::Parse {
                line,
                message: format!("location {:?} assigned twice", &record[0]),
            });
        }
    }
    let mut ids: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(locs.len());
    for (i, cluster) in by_location.into_iter().enumerate() {
        let cluster = cluster.ok_or_else(|| {
            GeotError::InvalidInput(format!("location {} has no cluster", locs.get(i).id))
        })?;
        let idx = ids.iter().position(|c| *c == cluster).unwrap_or_else(|| {
            ids.push(cluster);
            ids.len() - 1
        });
        labels.push(idx);
    }
    Clustering::from_labels(locs, &labels, ClusterMethod::External, |c| ids[c].clone())
}

/// Sums masses per cluster.
pub fn aggregate_signature(sig: &SpatialSignature, clustering: &Clustering) -> Result<SpatialSignature> {
    if clustering.assignment.len() != sig.len() {
        return Err(GeotError::DimensionMismatch(format!(
            "clustering covers {} locations, signature has {}",
            clustering.assignment.len(),
            sig.len()
        )));
    }
    let mut masses = vec![0.0; clustering.k()];
    for (&c, &m) in clustering.assignment.iter().zip(sig.masses()) {
        masses[c] += m;
    }
    SpatialSignature::new_unchecked(clustering.centers.clone(), masses)
}

/// Per-location fraction of its cluster's training demand. A cluster whose
/// members have zero total demand splits uniformly.
pub fn shares_from_demand(demand: &[f64], clustering: &Clustering) -> Result<Vec<f64>> {
    if demand.len() != clustering.assignment.len() {
        return Err(GeotError::DimensionMismatch("demand length differs from clustering".into()));
    }
    if let Some((index, &value)) = demand.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(GeotError::NegativeMass { index, value });
    }
    let mut totals = vec![0.0; clustering.k()];
    for (&c, &d) in clustering.assignment.iter().zip(demand) {
        totals[c] += d;
    }
    let sizes = clustering.sizes();
    Ok(clustering
        .assignment
        .iter()
        .zip(demand)
        .map(|(&c, &d)| if totals[c] > 0.0 { d / totals[c] } else { 1.0 / sizes[c] as f64 })
        .collect())
}

/// `point mass = cluster mass * share`.
pub fn allocate_to_points(
    cluster_pred: &SpatialSignature,
    clustering: &Clustering,
    points: &Arc<LocationSet>,
    shares: &[f64],
) -> Result<SpatialSignature> {
    let k = clustering.k();
    if cluster_pred.len() != k || shares.len() != clustering.assignment.len() || points.len() != shares.len() {
        return Err(GeotError::DimensionMismatch(
            "cluster predictions, shares and points disagree in size".into(),
        ));
    }
    let mut sums = vec![0.0; k];
    for (&c, &s) in clustering.assignment.iter().zip(shares) {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(GeotError::InvalidInput(format!("invalid share {s}")));
        }
        sums[c] += s;
    }
    if let Some(c) = sums.iter().position(|s| (s - 1.0).abs() > 1e-9) {
        return Err(GeotError::InvalidInput(format!(
            "shares of cluster {} sum to {}",
            clustering.centers.get(c).id,
            sums[c]
        )));
    }
    let masses = clustering
        .assignment
        .iter()
        .zip(shares)
        .map(|(&c, &s)| cluster_pred.masses()[c] * s)
        .collect();
    SpatialSignature::new_unchecked(points.clone(), masses)
}

/// One spatial scale: a clustering, predictions at its centers and the
/// shares used to push them down to points.
#[derive(Debug, Clone)]
pub struct ScaleInput {
    pub label: String,
    pub clustering: Clustering,
    pub cluster_pred: SpatialSignature,
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossScaleRow {
    pub scale: String,
    pub method: String,
    pub k: usize,
    pub mse_cluster: f64,
    pub mse_point: f64,
    pub ot_cluster: f64,
    pub ot_cluster_to_point: f64,
    pub ot_point: f64,
    /// `mse_cluster` divided by the mean number of members per cluster.
    pub mse_cluster_per_member: f64,
}

pub const CROSS_SCALE_HEADER: [&str; 8] = [
    "scale",
    "method",
    "mse_cluster",
    "mse_point",
    "ot_cluster",
    "ot_cluster_to_point",
    "ot_point",
    "mse_cluster_per_member",
];

fn method_name(m: &ClusterMethod) -> String {
    match m {
        ClusterMethod::KMeans { k, seed } => format!("kmeans(k={k};seed={seed})"),
        ClusterMethod::Agglomerative { cutoff, linkage } => {
            format!("agglomerative(cutoff={cutoff};{linkage:?})").to_lowercase()
        }
        ClusterMethod::External => "external".into(),
    }
}

/// Evaluates each scale three ways with partial OT: cluster vs aggregated
/// observations, cluster predictions vs point observations (asymmetric
/// center-to-point costs), and allocated point predictions vs points.
/// `phi` is resolved once from the point-level cost matrix and shared by all
/// three comparisons.
pub fn cross_scale_eval(
    scales: &[ScaleInput],
    point_obs: &SpatialSignature,
    power: CostPower,
    phi: PhiPolicy,
    exact: &ExactSolverConfig,
) -> Result<Vec<CrossScaleRow>> {
    let points = point_obs.locations().clone();
    let point_costs = euclidean_costs(&points, power)?;
    let phi = phi.resolve(&point_costs)?;
    let penalty = Penalty::Uniform(phi);
    scales
        .par_iter()
        .map(|s| {
            if s.clustering.assignment.len() != points.len() {
                return Err(GeotError::DimensionMismatch(format!(
                    "scale {} clusters {} locations, observations have {}",
                    s.label,
                    s.clustering.assignment.len(),
                    points.len()
                )));
            }
            let cluster_obs = aggregate_signature(point_obs, &s.clustering)?;
            let center_costs = euclidean_costs(&s.clustering.centers, power)?;
            let cp_costs: CostMatrix = match power {
                CostPower::One => cluster_point_costs(&s.clustering.centers, &points)?,
                CostPower::Two => {
                    crate::costs::euclidean_between(&s.clustering.centers, &points, power)?.into_asymmetric()
                }
            };
            let point_pred = allocate_to_points(&s.cluster_pred, &s.clustering, &points, &s.shares)?;

            let mse_cluster = pointwise_from_slices(s.cluster_pred.masses(), cluster_obs.masses())?.mse;
            let mse_point = pointwise_from_slices(point_pred.masses(), point_obs.masses())?.mse;
            let solve = |a: &[f64], b: &[f64], c: &CostMatrix, paired: bool| {
                solve_partial_masses(a, b, c, &penalty, exact, paired).map(|r| r.total)
            };
            let ot_cluster = solve(s.cluster_pred.masses(), cluster_obs.masses(), &center_costs, true)?;
            let ot_cluster_to_point = solve(s.cluster_pred.masses(), point_obs.masses(), &cp_costs, false)?;
            let ot_point = solve(point_pred.masses(), point_obs.masses(), &point_costs, true)?;
            let k = s.clustering.k();
            Ok(CrossScaleRow {
                scale: s.label.clone(),
                method: method_name(&s.clustering.method),
                k,
                mse_cluster,
                mse_point,
                ot_cluster,
                ot_cluster_to_point,
                ot_point,
                mse_cluster_per_member: mse_cluster * k as f64 / points.len() as f64,
            })
        })
        .collect()
}
