mod common;

use geot_core::synthetic::*;
use rand_distr::{Distribution, Normal};

#[test]
fn folded_mean_matches_monte_carlo() {
    let sigma = sigma_for(1.0, 1.2).unwrap();
    assert!((folded_normal_mean(1.0, sigma) - 1.2).abs() < 1e-12);
    let normal = Normal::new(1.0, sigma).unwrap();
    let mut rng = rng_for(17);
    let draws = 1_000_000;
    let mean = (0..draws).map(|_| f64::abs(normal.sample(&mut rng))).sum::<f64>() / draws as f64;
    assert!((mean - 1.2).abs() / 1.2 < 0.01, "{mean}");
}

#[test]
fn sigma_shrinks_as_mu_grows() {
    let sigmas: Vec<f64> = [0.0, 0.5, 1.0, 1.5].iter().map(|&mu| sigma_for(mu, 1.6).unwrap()).collect();
    assert!(sigmas.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(sigma_for(-1.0, 1.6).unwrap(), sigma_for(1.0, 1.6).unwrap());
}

fn half_means(s: &SyntheticSample, extent: f64) -> (f64, f64) {
    let (mut l, mut nl, mut r, mut nr) = (0.0, 0, 0.0, 0);
    for (loc, v) in s.locations.iter().zip(&s.residuals) {
        if loc.coords[0] < extent / 2.0 {
            l += v;
            nl += 1;
        } else {
            r += v;
            nr += 1;
        }
    }
    (l / nl as f64, r / nr as f64)
}

#[test]
fn halves_carry_opposite_bias() {
    let big = |mu| ImbalanceScenario { n: 20_000, ..ImbalanceScenario::with(mu, 5) };
    let s = generate(&big(0.0)).unwrap();
    let (l, r) = half_means(&s, 100.0);
    assert!(l.abs() < 0.1 && r.abs() < 0.1, "{l} {r}");
    let s = generate(&big(1.5)).unwrap();
    let (l, r) = half_means(&s, 100.0);
    assert!((l - 1.5).abs() < 0.1 && (r + 1.5).abs() < 0.1, "{l} {r}");
    let mean_abs = s.residuals.iter().map(|v| v.abs()).sum::<f64>() / s.residuals.len() as f64;
    assert!((mean_abs - 1.6).abs() / 1.6 < 0.05, "{mean_abs}");
}

#[test]
fn sample_mean_absolute_residual_near_target() {
    for mu in [0.0, 0.5, 1.0, 1.5] {
        let mut total = 0.0;
        for seed in 0..20 {
            let s = generate(&ImbalanceScenario::with(mu, seed)).unwrap();
            total += s.residuals.iter().map(|v| v.abs()).sum::<f64>() / 100.0;
        }
        assert!((total / 20.0 - 1.6).abs() / 1.6 < 0.05, "mu {mu}: {}", total / 20.0);
    }
}

#[test]
fn signatures_encode_residuals() {
    let s = generate(&ImbalanceScenario::with(1.0, 2)).unwrap();
    for i in 0..100 {
        let diff = s.obs.masses()[i] - s.pred.masses()[i];
        assert!((diff - s.residuals[i]).abs() < 1e-12);
        assert!(s.pred.masses()[i] >= 0.0 && s.obs.masses()[i] >= 0.0);
    }
    assert!(s.locations.iter().all(|l| (0.0..100.0).contains(&l.coords[0]) && (0.0..100.0).contains(&l.coords[1])));
}

#[test]
fn deterministic_per_seed() {
    let a = generate(&ImbalanceScenario::with(0.5, 11)).unwrap();
    let b = generate(&ImbalanceScenario::with(0.5, 11)).unwrap();
    let c = generate(&ImbalanceScenario::with(0.5, 12)).unwrap();
    assert_eq!(a.residuals, b.residuals);
    assert_eq!(a.pred.masses(), b.pred.masses());
    assert_ne!(a.residuals, c.residuals);
    assert_eq!(RNG_ALGORITHM, "ChaCha8");
}

#[test]
fn sweep_rows_ordered_and_written() {
    let rows = run_validation_sweep(&[0.0, 1.0], &[0, 1], &ImbalanceScenario::default()).unwrap();
    let keys: Vec<(f64, u64)> = rows.iter().map(|r| (r.mu, r.seed)).collect();
    assert_eq!(keys, vec![(0.0, 0), (0.0, 1), (1.0, 0), (1.0, 1)]);
    let again = run_validation_sweep(&[0.0, 1.0], &[0, 1], &ImbalanceScenario::default()).unwrap();
    assert_eq!(rows, again);
    let mut out = Vec::new();
    write_sweep_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("mu,seed,mse,ot_error,morans_i\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(sweep_correlation(&rows).is_some());
}
