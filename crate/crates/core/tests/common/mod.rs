//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use geot_core::{CostMatrix, Location, LocationSet, SpatialSignature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimum of `<T, C>` over all integer couplings with the given integer
/// marginals, by exhaustive enumeration (memoised on remaining capacities).
pub fn brute_force_ot(p: &[u32], q: &[u32], costs: &[Vec<f64>]) -> f64 {
    assert_eq!(p.iter().sum::<u32>(), q.iter().sum::<u32>());
    let mut memo = HashMap::new();
    best(0, p, q.to_vec(), costs, &mut memo)
}

fn best(
    row: usize,
    p: &[u32],
    cap: Vec<u32>,
    costs: &[Vec<f64>],
    memo: &mut HashMap<(usize, Vec<u32>), f64>,
) -> f64 {
    if row == p.len() {
        return if cap.iter().all(|&c| c == 0) { 0.0 } else { f64::INFINITY };
    }
    if let Some(&v) = memo.get(&(row, cap.clone())) {
        return v;
    }
    let mut out = f64::INFINITY;
    let mut split = vec![0u32; cap.len()];
    enumerate_splits(p[row], 0, &cap, &mut split, &mut |split| {
        let here: f64 = split.iter().zip(&costs[row]).map(|(&t, &c)| t as f64 * c).sum();
        let rest: Vec<u32> = cap.iter().zip(split).map(|(c, t)| c - t).collect();
        let v = here + best(row + 1, p, rest, costs, memo);
        if v < out {
            out = v;
        }
    });
    memo.insert((row, cap), out);
    out
}

fn enumerate_splits(left: u32, col: usize, cap: &[u32], split: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
    if col == cap.len() {
        if left == 0 {
            visit(split);
        }
        return;
    }
    for t in 0..=left.min(cap[col]) {
        split[col] = t;
        enumerate_splits(left - t, col + 1, cap, split, visit);
    }
    split[col] = 0;
}

/// Two integer mass vectors with equal totals, entries in `0..=max`.
pub fn balanced_integer_masses(rng: &mut ChaCha8Rng, n: usize, m: usize, max: u32) -> (Vec<u32>, Vec<u32>) {
    loop {
        let mut p: Vec<u32> = (0..n).map(|_| rng.random_range(0..=max)).collect();
        let mut q: Vec<u32> = (0..m).map(|_| rng.random_range(0..=max)).collect();
        // move the larger side down until the totals agree
        let (sp, sq) = (p.iter().sum::<u32>(), q.iter().sum::<u32>());
        let (big, mut excess) = if sp > sq { (&mut p, sp - sq) } else { (&mut q, sq - sp) };
        for v in big.iter_mut() {
            let take = (*v).min(excess);
            *v -= take;
            excess -= take;
        }
        if p.iter().sum::<u32>() > 0 {
            return (p, q);
        }
    }
}

pub fn to_f64(v: &[u32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn random_integer_costs(rng: &mut ChaCha8Rng, n: usize, m: usize, lo: u32, hi: u32) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..m).map(|_| rng.random_range(lo..=hi) as f64).collect()).collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> CostMatrix {
    let cols = rows.first().map_or(0, |r| r.len());
    CostMatrix::new(rows.len(), cols, rows.concat()).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Arc<LocationSet> {
    Arc::new(
        LocationSet::new(
            (0..n)
                .map(|i| Location::xy(format!("p{i}"), rng.random::<f64>() * extent, rng.random::<f64>() * extent))
                .collect(),
        )
        .unwrap(),
    )
}

pub fn random_masses(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.5..5.0)).collect()
}

pub fn rescaled_to(masses: &[f64], total: f64) -> Vec<f64> {
    let s: f64 = masses.iter().sum();
    masses.iter().map(|m| m * total / s).collect()
}

/// The three-location example: location 1 overestimates by 90, location 3
/// underestimates by 90, and moving one unit from 1 to 3 costs 5.
pub fn three_location_costs() -> CostMatrix {
    CostMatrix::new(3, 3, vec![0.0, 3.0, 5.0, 3.0, 0.0, 6.0, 5.0, 6.0, 0.0]).unwrap()
}

pub fn three_locations() -> Arc<LocationSet> {
    Arc::new(
        LocationSet::new(vec![
            Location::xy("loc1", 0.0, 0.0),
            Location::xy("loc2", 0.0, 3.0),
            Location::xy("loc3", 5.0, 0.0),
        ])
        .unwrap(),
    )
}

pub fn signature(locs: &Arc<LocationSet>, masses: &[f64]) -> SpatialSignature {
    SpatialSignature::new(locs.clone(), masses.to_vec()).unwrap()
}

/// Moran's I straight from its definition, with a caller-chosen
/// normalizer for the weight sum.
pub fn morans_i_oracle(v: &[f64], w: &[Vec<f64>], abs_norm: bool) -> f64 {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut wsum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                num += w[i][j] * (v[i] - mean) * (v[j] - mean);
                wsum += w[i][j];
            }
        }
    }
    let den: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let norm = if abs_norm { wsum.abs() } else { wsum };
    n as f64 / norm * num / den
}

/// Plain kernel-space Sinkhorn (no log domain) for moderate `eps`; returns
/// the dense coupling after `iters` scaling rounds.
pub fn kernel_sinkhorn(p: &[f64], q: &[f64], c: &CostMatrix, eps: f64, iters: usize) -> Vec<Vec<f64>> {
    let (n, m) = (p.len(), q.len());
    let k: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| (-c.get(i, j) / eps).exp()).collect()).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    for _ in 0..iters {
        for i in 0..n {
            u[i] = p[i] / (0..m).map(|j| k[i][j] * v[j]).sum::<f64>();
        }
        for j in 0..m {
            v[j] = q[j] / (0..n).map(|i| k[i][j] * u[i]).sum::<f64>();
        }
    }
    (0..n).map(|i| (0..m).map(|j| u[i] * k[i][j] * v[j]).collect()).collect()
}

/// `<T, C> + eps * sum T log T` for a dense coupling.
pub fn entropic_objective(t: &[Vec<f64>], c: &CostMatrix, eps: f64) -> f64 {
    let mut out = 0.0;
    for (i, row) in t.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > 0.0 {
                out += x * c.get(i, j) + eps * x * x.ln();
            }
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
