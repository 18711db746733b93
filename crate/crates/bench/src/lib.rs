//! Shared fixtures for the solver benchmarks.

use geot_core::runtime::{random_instance, RandomInstance};
use geot_core::CostMatrix;

/// Seeded random instance of size `n`; panics on invalid sizes.
pub fn instance(n: usize, seed: u64) -> RandomInstance {
    random_instance(n, seed).expect("valid instance size")
}

/// The three-location example with a single 90-unit move at cost 5.
pub fn three_location_example() -> (Vec<f64>, Vec<f64>, CostMatrix) {
    let costs = CostMatrix::new(3, 3, vec![0.0, 3.0, 5.0, 3.0, 0.0, 6.0, 5.0, 6.0, 0.0])
        .expect("valid costs");
    (vec![100.0, 50.0, 10.0], vec![10.0, 50.0, 100.0], costs)
}
