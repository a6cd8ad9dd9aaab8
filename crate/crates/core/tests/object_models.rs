use std::f64::consts::PI;

use ambientsom::object_models::{sample_clustered_lumpy, sample_lumpy, ClusteredLumpyParams, LumpyParams};
use ambientsom::rng::stream;
use ambientsom::ObjectField;
use proptest::prelude::*;

fn lumpy64() -> LumpyParams {
    LumpyParams {
        mean_count: 20.0,
        amplitude: 1.0,
        width: 3.0,
        field_shape: vec![64, 64],
    }
}

fn spatial_mean(f: &ObjectField) -> f64 {
    f.values().iter().sum::<f64>() / f.len() as f64
}

#[test]
fn lumpy_ensemble_mean_matches_poisson_superposition() {
    let p = lumpy64();
    let m = 4096.0;
    // Each lump integrates to a·2πw² over the torus.
    let lump_mass = p.amplitude * 2.0 * PI * p.width * p.width / m;
    let expected = p.mean_count * lump_mass;
    assert!((expected - 0.276).abs() < 1e-3);
    let n = 10_000;
    let means: Vec<f64> = (0..n)
        .map(|i| spatial_mean(&sample_lumpy(&p, &mut stream(1, i)).unwrap()))
        .collect();
    let avg = means.iter().sum::<f64>() / n as f64;
    // The spatial mean is N·lump_mass with N Poisson, so its std is √N̄·lump_mass.
    let se = p.mean_count.sqrt() * lump_mass / (n as f64).sqrt();
    assert!((avg - expected).abs() < 3.0 * se, "{avg} vs {expected} ± {se}");
}

#[test]
fn lumpy_per_pixel_variance_matches_poisson_superposition() {
    let p = LumpyParams {
        field_shape: vec![32, 32],
        ..lumpy64()
    };
    let m = 1024.0;
    // Var f(r) = N̄/M ∫ a² exp(−|d|²/w²) = N̄·a²·πw²/M.
    let expected = p.mean_count * p.amplitude.powi(2) * PI * p.width.powi(2) / m;
    let n = 10_000;
    let mut sum = vec![0.0; 1024];
    let mut sq = vec![0.0; 1024];
    for i in 0..n {
        let f = sample_lumpy(&p, &mut stream(2, i)).unwrap();
        for (j, v) in f.values().iter().enumerate() {
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    let nf = n as f64;
    let var = (0..1024)
        .map(|j| (sq[j] - sum[j] * sum[j] / nf) / (nf - 1.0))
        .sum::<f64>()
        / 1024.0;
    assert!((var / expected - 1.0).abs() < 0.03, "{var} vs {expected}");
}

#[test]
fn clustered_ensemble_mean_matches_compound_poisson() {
    let p = ClusteredLumpyParams {
        mean_cluster_count: 5.0,
        mean_blobs_per_cluster: 4.0,
        cluster_spread: 4.0,
        amplitude: 1.0,
        width: 2.0,
        field_shape: vec![32, 32],
    };
    let lump_mass = p.amplitude * 2.0 * PI * p.width * p.width / 1024.0;
    let expected = p.mean_cluster_count * p.mean_blobs_per_cluster * lump_mass;
    let n = 10_000;
    let means: Vec<f64> = (0..n)
        .map(|i| spatial_mean(&sample_clustered_lumpy(&p, &mut stream(3, i)).unwrap()))
        .collect();
    let avg = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    assert!((avg - expected).abs() < 3.0 * se, "{avg} vs {expected} ± {se}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lumpy_fields_are_non_negative_and_seed_determined(seed in 0u64..10_000, count in 0.0f64..40.0) {
        let p = LumpyParams { mean_count: count, field_shape: vec![16, 16], ..lumpy64() };
        let a = sample_lumpy(&p, &mut stream(seed, 0)).unwrap();
        let b = sample_lumpy(&p, &mut stream(seed, 0)).unwrap();
        prop_assert!(a.values().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(a, b);
    }
}
