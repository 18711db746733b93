mod common;

use std::io::Write;

use common::*;
use geot_core::costs::*;
use geot_core::{CostMatrix, GeotError, Location, LocationSet};
use proptest::prelude::*;

fn pair(d: f64) -> LocationSet {
    LocationSet::new(vec![Location::xy("a", 0.0, 0.0), Location::xy("b", d, 0.0)]).unwrap()
}

#[test]
fn euclidean_examples() {
    assert_eq!(euclidean_costs(&pair(3.0), CostPower::One).unwrap().get(0, 1), 3.0);
    assert_eq!(euclidean_costs(&pair(3.0), CostPower::Two).unwrap().get(0, 1), 9.0);
    let locs = random_points(&mut rng(1), 100, 100.0);
    let c = euclidean_costs(&locs, CostPower::One).unwrap();
    assert!(c.max() <= 100.0 * 2f64.sqrt());
    assert!(c.is_symmetric());
    assert!((0..100).all(|i| c.get(i, i) == 0.0));
}

#[test]
fn capped_examples() {
    let base = CostMatrix::new(2, 2, vec![0.0, 1.5, 3.0, 0.0]).unwrap();
    let capped = capped_costs(&base, 2.0, 15.0).unwrap();
    assert_eq!(capped.data(), &[0.0, 1.5, 15.0, 0.0]);
    let tight = capped_costs(&base, 2.0, 2.0).unwrap();
    assert!(tight.max() <= 2.0);
    assert_eq!(capped_costs(&capped, 2.0, 15.0).unwrap(), capped);
    assert!(capped_costs(&base, 2.0, 1.0).is_err());
    assert!(capped_costs(&base, 0.0, 1.0).is_err());
}

#[test]
fn space_time_examples() {
    let c = CostMatrix::new(2, 2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
    let psi = space_time_costs(&c, &[0.0, 1.0], 1.0, DEFAULT_ENTRY_BUDGET).unwrap();
    let at = |i, k, j, l| {
        psi.get(
            SpaceTimeIndex { location: i, time: k }.flatten(2),
            SpaceTimeIndex { location: j, time: l }.flatten(2),
        )
    };
    assert_eq!(at(0, 0, 0, 1), 1.0);
    assert_eq!(at(0, 0, 0, 0), 0.0);
    let psi = space_time_costs(&c, &[0.0, 0.2], 1.0, DEFAULT_ENTRY_BUDGET).unwrap();
    assert_eq!(psi.get(0, 3), 0.5);
    let psi = space_time_costs(&c, &[0.0, 2.0], 1.0, DEFAULT_ENTRY_BUDGET).unwrap();
    assert_eq!(psi.get(0, 3), 2.0);
    assert!(psi.is_symmetric());
    let scaled = space_time_costs(&c, &[0.0, 2.0], 0.1, DEFAULT_ENTRY_BUDGET).unwrap();
    assert_eq!(scaled.get(0, 1), 0.2);
}

#[test]
fn space_time_single_step_is_identity() {
    let c = euclidean_costs(&random_points(&mut rng(4), 30, 10.0), CostPower::Two).unwrap();
    let psi = space_time_costs(&c, &[7.0], 3.0, DEFAULT_ENTRY_BUDGET).unwrap();
    assert_eq!(psi.rows(), 30);
    assert!(psi.data().iter().zip(c.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn space_time_asymmetric_input_stays_asymmetric() {
    let c = CostMatrix::new(2, 2, vec![0.0, 1.0, 2.0, 0.0]).unwrap();
    assert!(!c.is_symmetric());
    assert!(!space_time_costs(&c, &[0.0, 1.0], 1.0, 100).unwrap().is_symmetric());
}

#[test]
fn space_time_budget_error() {
    let c = euclidean_costs(&random_points(&mut rng(4), 10, 10.0), CostPower::One).unwrap();
    let err = space_time_costs(&c, &[0.0; 10], 1.0, 9_999).unwrap_err();
    assert_eq!(err, GeotError::SizeLimit { entries: 10_000, budget: 9_999 });
}

#[test]
fn cluster_point_costs_are_asymmetric_distances() {
    let centers = LocationSet::new(vec![Location::xy("c", 0.0, 0.0)]).unwrap();
    let points = LocationSet::new(vec![Location::xy("p", 0.0, 0.0)]).unwrap();
    let c = cluster_point_costs(&centers, &points).unwrap();
    assert_eq!(c.data(), &[0.0]);
    assert!(!c.is_symmetric());

    let pts = random_points(&mut rng(9), 8, 10.0);
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, l| (a.0 + l.coords[0], a.1 + l.coords[1]));
    let centroid = LocationSet::new(vec![Location::xy("k0", sx / 8.0, sy / 8.0)]).unwrap();
    let c = cluster_point_costs(&centroid, &pts).unwrap();
    for j in 0..8 {
        assert_eq!(c.get(0, j), centroid.get(0).distance(pts.get(j)));
    }
}

fn three() -> LocationSet {
    LocationSet::new(vec![Location::xy("a", 0.0, 0.0), Location::xy("b", 1.0, 0.0), Location::xy("c", 2.0, 0.0)]).unwrap()
}

fn write_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn load_complete_file() {
    let mut text = String::from("from_id,to_id,cost\n");
    for (a, b, c) in [("a", "b", 1), ("a", "c", 2), ("b", "a", 1), ("b", "c", 1), ("c", "a", 2), ("c", "b", 1)] {
        text += &format!("{a},{b},{c}\n");
    }
    for id in ["a", "b", "c"] {
        text += &format!("{id},{id},0\n");
    }
    let f = write_file(&text);
    let c = load_cost_matrix(f.path(), &three(), &three(), None).unwrap();
    assert_eq!(c.data(), &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
    assert!(c.is_symmetric());
}

#[test]
fn load_rejects_bad_rows() {
    let neg = write_file("from_id,to_id,cost\na,b,-1\n");
    assert!(matches!(load_cost_matrix(neg.path(), &three(), &three(), Some(1.0)), Err(GeotError::Parse { line: 2, .. })));
    let unknown = write_file("from_id,to_id,cost\na,b,1\nq,b,1\n");
    assert!(matches!(load_cost_matrix(unknown.path(), &three(), &three(), Some(1.0)), Err(GeotError::Parse { line: 3, .. })));
    let malformed = write_file("from_id,to_id,cost\na,b,x\n");
    assert!(matches!(load_cost_matrix(malformed.path(), &three(), &three(), Some(1.0)), Err(GeotError::Parse { line: 2, .. })));
    let header = write_file("a,b,c\n");
    assert!(matches!(load_cost_matrix(header.path(), &three(), &three(), Some(1.0)), Err(GeotError::Parse { line: 1, .. })));
    assert!(matches!(load_cost_matrix("/nonexistent/costs.csv", &three(), &three(), None), Err(GeotError::Io(_))));
}

#[test]
fn load_sparse_with_default() {
    let f = write_file("from_id,to_id,cost\na,b,1.5\nb,a,1.5\n");
    let c = load_cost_matrix(f.path(), &three(), &three(), Some(15.0)).unwrap();
    assert_eq!(c.data(), &[0.0, 1.5, 15.0, 1.5, 0.0, 15.0, 15.0, 15.0, 0.0]);
    let err = load_cost_matrix(f.path(), &three(), &three(), None).unwrap_err();
    assert!(matches!(err, GeotError::InvalidInput(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_triangle_inequality(seed in any::<u64>()) {
        let locs = random_points(&mut rng(seed), 12, 100.0);
        let c = euclidean_costs(&locs, CostPower::One).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                for k in 0..12 {
                    prop_assert!(c.get(i, j) <= c.get(i, k) + c.get(k, j) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn capping_idempotent(seed in any::<u64>(), cutoff in 1.0f64..50.0, extra in 0.0f64..50.0) {
        let c = euclidean_costs(&random_points(&mut rng(seed), 10, 100.0), CostPower::One).unwrap();
        let once = capped_costs(&c, cutoff, cutoff + extra).unwrap();
        prop_assert_eq!(capped_costs(&once, cutoff, cutoff + extra).unwrap(), once);
    }

    #[test]
    fn space_time_symmetric_for_symmetric_costs(seed in any::<u64>(), steps in 1usize..5) {
        let c = euclidean_costs(&random_points(&mut rng(seed), 6, 10.0), CostPower::One).unwrap();
        let times: Vec<f64> = (0..steps).map(|k| k as f64 * 3.3).collect();
        let psi = space_time_costs(&c, &times, 1.0, DEFAULT_ENTRY_BUDGET).unwrap();
        let n = psi.rows();
        for a in 0..n {
            prop_assert_eq!(psi.get(a, a), 0.0);
            for b in 0..n {
                prop_assert_eq!(psi.get(a, b), psi.get(b, a));
            }
        }
    }
}
