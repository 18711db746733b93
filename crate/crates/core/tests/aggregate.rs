mod common;

use std::sync::Arc;

use common::*;
use geot_core::aggregate::*;
use geot_core::costs::CostPower;
use geot_core::partial::PhiPolicy;
use geot_core::{ExactSolverConfig, Location, LocationSet, SpatialSignature};
use proptest::prelude::*;
use rand::Rng;

fn chain(n: usize) -> LocationSet {
    LocationSet::new((0..n).map(|i| Location::xy(format!("p{i}"), i as f64, 0.0)).collect()).unwrap()
}

#[test]
fn kmeans_extremes() {
    let locs = random_points(&mut rng(1), 30, 10.0);
    let (all, trace) = kmeans_with_trace(&locs, 30, 0).unwrap();
    assert_eq!(all.k(), 30);
    assert_eq!(*trace.last().unwrap(), 0.0);
    let one = kmeans(&locs, 1, 0).unwrap();
    assert_eq!(one.assignment, vec![0; 30]);
    let mean_x = locs.iter().map(|l| l.coords[0]).sum::<f64>() / 30.0;
    assert!((one.centers.get(0).coords[0] - mean_x).abs() < 1e-12);
    assert!(kmeans(&locs, 0, 0).is_err());
    assert!(kmeans(&locs, 31, 0).is_err());
}

#[test]
fn kmeans_separates_blobs() {
    let mut r = rng(2);
    let mut pts = Vec::new();
    for (b, (cx, cy)) in [(0.0, 0.0), (100.0, 100.0)].into_iter().enumerate() {
        for i in 0..200 {
            let x = cx + r.random_range(-5.0..5.0);
            let y = cy + r.random_range(-5.0..5.0);
            pts.push(Location::xy(format!("b{b}_{i}"), x, y));
        }
    }
    let locs = LocationSet::new(pts).unwrap();
    for seed in 0..5 {
        let c = kmeans(&locs, 2, seed).unwrap();
        let first = c.assignment[0];
        let correct = (0..400).filter(|&i| (c.assignment[i] == first) == (i < 200)).count();
        assert!(correct as f64 / 400.0 >= 0.99, "seed {seed}: {correct}");
    }
}

#[test]
fn kmeans_objective_non_increasing() {
    for seed in 0..10 {
        let locs = random_points(&mut rng(seed), 200, 100.0);
        let (c, trace) = kmeans_with_trace(&locs, 7, seed).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{trace:?}");
        assert!(trace.len() <= KMEANS_MAX_ITERS);
        assert_eq!(kmeans(&locs, 7, seed).unwrap().assignment, c.assignment);
    }
}

#[test]
fn agglomerative_chain_linkages() {
    let locs = chain(5);
    let single = agglomerative(&locs, 1.5, Linkage::Single).unwrap();
    assert_eq!(single.k(), 1);
    // complete linkage on a unit chain pairs up neighbours
    let complete = agglomerative(&locs, 1.5, Linkage::Complete).unwrap();
    assert_eq!(complete.assignment, vec![0, 0, 1, 1, 2]);
    assert_eq!(agglomerative(&locs, 1.0, Linkage::Average).unwrap().k(), 5);
    assert_eq!(agglomerative(&locs, 1e9, Linkage::Average).unwrap().k(), 1);
    assert!(agglomerative(&locs, 0.0, Linkage::Single).is_err());
}

#[test]
fn allocation_examples() {
    let locs = chain(2);
    let points = Arc::new(locs.clone());
    let c = Clustering::from_labels(&locs, &[0, 0], ClusterMethod::External, |_| "c".into()).unwrap();
    let pred = SpatialSignature::new(c.centers.clone(), vec![10.0]).unwrap();
    assert_eq!(allocate_to_points(&pred, &c, &points, &[0.5, 0.5]).unwrap().masses(), &[5.0, 5.0]);
    let shares = shares_from_demand(&[8.0, 2.0], &c).unwrap();
    assert_eq!(allocate_to_points(&pred, &c, &points, &shares).unwrap().masses(), &[8.0, 2.0]);
    assert!(allocate_to_points(&pred, &c, &points, &[0.5, 0.4]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_conserves_mass(seed in any::<u64>(), n in 2usize..40, k in 1usize..6) {
        let mut r = rng(seed);
        let locs = random_points(&mut r, n, 50.0);
        let k = k.min(n);
        let c = kmeans(&locs, k, seed).unwrap();
        // integer masses keep every partial sum exact
        let masses: Vec<f64> = (0..n).map(|_| r.random_range(0..1000) as f64).collect();
        let sig = SpatialSignature::new(locs.clone(), masses.clone()).unwrap();
        let agg = aggregate_signature(&sig, &c).unwrap();
        prop_assert_eq!(agg.total(), sig.total());

        let shares = shares_from_demand(&masses, &c).unwrap();
        let back = allocate_to_points(&agg, &c, &locs, &shares).unwrap();
        prop_assert!((back.total() - sig.total()).abs() <= 1e-9 * sig.total().max(1.0));
        let again = aggregate_signature(&back, &c).unwrap();
        for (a, b) in again.masses().iter().zip(agg.masses()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }
}

fn grid(side: usize) -> Arc<LocationSet> {
    Arc::new(
        LocationSet::new(
            (0..side * side)
                .map(|i| Location::xy(format!("g{i}"), (i % side) as f64 + 0.5, (i / side) as f64 + 0.5))
                .collect(),
        )
        .unwrap(),
    )
}

/// Quadtree cell of each grid point at a given depth.
fn quadtree_labels(side: usize, depth: u32) -> Vec<usize> {
    let cells = 1usize << depth;
    (0..side * side)
        .map(|i| {
            let (x, y) = (i % side, i / side);
            (y * cells / side) * cells + x * cells / side
        })
        .collect()
}

fn scale(points: &LocationSet, obs: &SpatialSignature, labels: &[usize], pred: impl Fn(f64) -> f64) -> ScaleInput {
    let clustering = Clustering::from_labels(points, labels, ClusterMethod::External, |c| format!("q{c}")).unwrap();
    let agg = aggregate_signature(obs, &clustering).unwrap();
    let cluster_pred =
        SpatialSignature::new(clustering.centers.clone(), agg.masses().iter().map(|&m| pred(m)).collect()).unwrap();
    let shares = shares_from_demand(obs.masses(), &clustering).unwrap();
    ScaleInput { label: format!("K={}", clustering.k()), clustering, cluster_pred, shares }
}

#[test]
fn nested_partitions_bring_cluster_predictions_closer_to_points() {
    let side = 8;
    let points = grid(side);
    let mut r = rng(4);
    let obs = SpatialSignature::new(points.clone(), (0..64).map(|_| r.random_range(1..10) as f64).collect()).unwrap();
    let scales: Vec<ScaleInput> = (0..=3).map(|d| scale(&points, &obs, &quadtree_labels(side, d), |m| m)).collect();
    let rows = cross_scale_eval(&scales, &obs, CostPower::One, PhiPolicy::Explicit(0.0), &ExactSolverConfig::default()).unwrap();
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![1, 4, 16, 64]);
    assert!(rows.windows(2).all(|w| w[1].ot_cluster_to_point <= w[0].ot_cluster_to_point + 1e-9), "{rows:?}");
    assert!(rows[3].ot_cluster_to_point.abs() < 1e-9);
    assert!(rows.iter().all(|r| r.ot_cluster.abs() < 1e-9 && r.mse_cluster == 0.0));
}

#[test]
fn singleton_clusters_coincide_with_points() {
    let points = grid(4);
    let mut r = rng(6);
    let obs = SpatialSignature::new(points.clone(), (0..16).map(|_| r.random_range(1.0..10.0)).collect()).unwrap();
    let labels: Vec<usize> = (0..16).collect();
    let s = scale(&points, &obs, &labels, |m| m * 1.3 + 0.5);
    let rows = cross_scale_eval(&[s], &obs, CostPower::One, PhiPolicy::Quantile10, &ExactSolverConfig::default()).unwrap();
    let row = &rows[0];
    assert!((row.ot_cluster - row.ot_point).abs() < 1e-9 * row.ot_point);
    assert!((row.ot_cluster_to_point - row.ot_point).abs() < 1e-9 * row.ot_point);
    assert_eq!(row.mse_cluster, row.mse_point);
    assert_eq!(row.mse_cluster_per_member, row.mse_cluster);
}

#[test]
fn single_cluster_pays_only_for_imbalance() {
    let points = grid(3);
    let obs = SpatialSignature::new(points.clone(), vec![2.0; 9]).unwrap();
    let s = scale(&points, &obs, &[0; 9], |m| m + 5.0);
    let phi = 4.0;
    let rows = cross_scale_eval(&[s], &obs, CostPower::One, PhiPolicy::Explicit(phi), &ExactSolverConfig::default()).unwrap();
    assert!((rows[0].ot_cluster - phi * 5.0).abs() < 1e-9);
    assert_eq!(rows[0].method, "external");
}
