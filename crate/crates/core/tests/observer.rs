use ambientsom::imaging::{measure, reconstruct, ImagingConfig};
use ambientsom::object_models::{sample_lumpy, LumpyParams, SignalSpec};
use ambientsom::observer::*;
use ambientsom::rng::stream;
use ambientsom::{Error, ObjectField};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn iid_cov(dim: usize, var: f64) -> CovarianceEstimate {
    CovarianceEstimate {
        matrix: DMatrix::identity(dim, dim) * var,
        samples: 0,
        ridge: 0.0,
    }
}

fn lumpy(side: usize, dims: usize) -> LumpyParams {
    LumpyParams {
        mean_count: 20.0,
        amplitude: 1.0,
        width: 3.0,
        field_shape: vec![side; dims],
    }
}

/// Lattice points within distance 2 of the origin, counted by brute force.
fn lattice_count(dims: u32) -> usize {
    let r = -2i32..=2;
    match dims {
        2 => r
            .clone()
            .flat_map(|x| r.clone().map(move |y| x * x + y * y))
            .filter(|&d| d <= 4)
            .count(),
        _ => r
            .clone()
            .flat_map(|x| {
                r.clone().flat_map({
                    let r = r.clone();
                    move |y| r.clone().map(move |z| x * x + y * y + z * z)
                })
            })
            .filter(|&d| d <= 4)
            .count(),
    }
}

#[test]
fn roi_extraction() {
    let f3 = ObjectField::constant(vec![16, 16, 16], 2.5).unwrap();
    let v = extract_roi(&f3, &RoiSpec::cube(vec![8, 8, 8], 8)).unwrap();
    assert_eq!(v.len(), 512);
    assert!(v.iter().all(|&x| x == 2.5));
    let f2 = ObjectField::new(vec![10, 10], (0..100).map(|i| i as f64).collect()).unwrap();
    let v = extract_roi(&f2, &RoiSpec::cube(vec![5, 5], 8)).unwrap();
    assert_eq!(v.len(), 64);
    assert_eq!(v[0], 11.0);
    assert_eq!(v[8], 21.0);
    assert!(matches!(
        extract_roi(&f2, &RoiSpec::cube(vec![2, 5], 8)),
        Err(Error::Bounds(_))
    ));
    assert!(matches!(
        extract_roi(&f2, &RoiSpec::cube(vec![7, 5], 8)),
        Err(Error::Bounds(_))
    ));
}

#[test]
fn covariance_of_white_samples() {
    let sigma = 1.5;
    let mut rng = stream(1, 0);
    let samples: Vec<Vec<f64>> = (0..100_000)
        .map(|_| (0..64).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let k = estimate_covariance(&samples, 0.0).unwrap();
    let var = sigma * sigma;
    let se = var / (100_000f64).sqrt();
    for i in 0..64 {
        assert!((k.matrix[(i, i)] / var - 1.0).abs() < 0.02);
        for j in 0..i {
            assert!(k.matrix[(i, j)].abs() < 5.0 * se);
        }
    }
    assert_eq!(k.matrix, k.matrix.transpose());
}

#[test]
fn identical_samples_give_pure_ridge() {
    let samples = vec![vec![1.0, -2.0, 3.0]; 5];
    let k = estimate_covariance(&samples, 1e-6).unwrap();
    assert_eq!(k.matrix, DMatrix::identity(3, 3) * k.ridge);
    assert!(k.ridge > 0.0);
    assert!(matches!(
        estimate_covariance(&samples[..1], 1e-6),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn ridge_is_relative_to_the_trace() {
    let mut rng = stream(2, 0);
    let samples: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let raw = estimate_covariance(&samples, 0.0).unwrap();
    let ridged = estimate_covariance(&samples, 1e-3).unwrap();
    assert!((ridged.ridge - 1e-3 * raw.matrix.trace() / 4.0).abs() < 1e-15);
    let diff = &ridged.matrix - &raw.matrix;
    assert!((diff - DMatrix::identity(4, 4) * ridged.ridge).abs().max() < 1e-15);
}

proptest! {
    #[test]
    fn covariance_ignores_sample_order(seed in 0u64..1000) {
        let mut rng = stream(seed, 0);
        let mut samples: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let a = estimate_covariance(&samples, 1e-6).unwrap();
        samples.shuffle(&mut rng);
        let b = estimate_covariance(&samples, 1e-6).unwrap();
        prop_assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn snr_is_permutation_invariant(seed in 0u64..1000) {
        let mut rng = stream(seed, 1);
        let samples: Vec<Vec<f64>> = (0..30).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let k = estimate_covariance(&samples, 1e-6).unwrap();
        let s: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let sp: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let kp = CovarianceEstimate { matrix: DMatrix::from_fn(6, 6, |i, j| k.matrix[(perm[i], perm[j])]), ..k.clone() };
        let a = hotelling_snr(&s, &k).unwrap();
        let b = hotelling_snr(&sp, &kp).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }
}

#[test]
fn sphere_snr_closed_forms() {
    assert_eq!(lattice_count(3), 33);
    assert_eq!(lattice_count(2), 13);
    for (dims, count) in [(3usize, 33.0f64), (2, 13.0)] {
        let shape = vec![16; dims];
        for (a, sigma) in [(1.0, 2.0), (0.7, 0.3)] {
            let task = DetectionTask::centred(&shape, 2.0, a, sigma);
            let s = extract_roi(&task.signal.render(&shape).unwrap(), &task.roi).unwrap();
            assert_eq!(s.iter().filter(|&&v| v != 0.0).count() as f64, count);
            let snr = hotelling_snr(&s, &iid_cov(s.len(), sigma * sigma)).unwrap();
            assert!((snr - a * count.sqrt() / sigma).abs() < 1e-6);
        }
    }
    let task = DetectionTask::centred(&[16, 16, 16], 2.0, 1.0, 2.0);
    let s = extract_roi(&task.signal.render(&[16, 16, 16]).unwrap(), &task.roi).unwrap();
    let snr = hotelling_snr(&s, &iid_cov(512, 4.0)).unwrap();
    assert!((snr - 2.8723).abs() < 1e-4);
}

#[test]
fn snr_scale_laws_and_special_cases() {
    let mut rng = stream(3, 0);
    let samples: Vec<Vec<f64>> = (0..40).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
    let k = estimate_covariance(&samples, 1e-6).unwrap();
    let s: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
    let base = hotelling_snr(&s, &k).unwrap();
    for c in [-3.0, 0.5, 4.0] {
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        assert!((hotelling_snr(&scaled, &k).unwrap() - c.abs() * base).abs() < 1e-12 * base.max(1.0) * 10.0);
        let kc = CovarianceEstimate {
            matrix: &k.matrix * (c * c),
            ..k.clone()
        };
        assert!((hotelling_snr(&s, &kc).unwrap() - base / c.abs()).abs() < 1e-12 * base.max(1.0) * 10.0);
    }
    assert_eq!(hotelling_snr(&[0.0; 8], &k).unwrap(), 0.0);
    let diag = [0.5, 2.0, 4.0];
    let kd = CovarianceEstimate {
        matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&diag)),
        samples: 0,
        ridge: 0.0,
    };
    let sd = [1.0, -2.0, 3.0];
    let expected: f64 = sd.iter().zip(&diag).map(|(s, k)| s * s / k).sum::<f64>().sqrt();
    assert!((hotelling_snr(&sd, &kd).unwrap() - expected).abs() < 1e-12);
    let bad = CovarianceEstimate {
        matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, -1.0, 1.0])),
        samples: 0,
        ridge: 0.0,
    };
    assert!(matches!(hotelling_snr(&sd, &bad), Err(Error::Numerical(_))));
    assert!(matches!(hotelling_snr(&sd[..2], &kd), Err(Error::Parameter(_))));
}

#[test]
fn snr_study_without_object_variability_matches_closed_form() {
    for (dims, count) in [(3usize, 33.0f64), (2, 13.0)] {
        let shape = vec![16; dims];
        let f = ObjectField::constant(shape.clone(), 0.4).unwrap();
        let objects = vec![f; 10_000];
        let task = DetectionTask::centred(&shape, 2.0, 1.0, 2.0);
        let study = snr_study(&objects, &task, &mut stream(4, dims as u64)).unwrap();
        let expected = count.sqrt() / 2.0;
        assert!(
            (study.snr / expected - 1.0).abs() < 0.05,
            "{dims}D {} vs {expected}",
            study.snr
        );
        let decomposed = snr_decomposed(&objects, &task).unwrap();
        assert!((decomposed.snr / expected - 1.0).abs() < 1e-3);
    }
}

#[test]
fn snr_decreases_with_noise() {
    let params = lumpy(32, 2);
    let objects: Vec<_> = (0..2000)
        .map(|i| sample_lumpy(&params, &mut stream(5, i)).unwrap())
        .collect();
    let mut last = f64::INFINITY;
    for sigma in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let task = DetectionTask::centred(&[32, 32], 2.0, 0.5, sigma);
        let snr = snr_study(&objects, &task, &mut stream(6, 0)).unwrap().snr;
        assert!(snr < last, "σ = {sigma}: {snr} !< {last}");
        last = snr;
    }
}

#[test]
fn lumpy_snr_is_self_consistent() {
    let params = lumpy(32, 2);
    let task = DetectionTask::centred(&[32, 32], 2.0, 0.5, 0.2);
    let ensemble = |seed| -> Vec<ObjectField> {
        (0..10_000)
            .map(|i| sample_lumpy(&params, &mut stream(seed, i)).unwrap())
            .collect()
    };
    let a = snr_study(&ensemble(7), &task, &mut stream(8, 0)).unwrap().snr;
    let b = snr_study(&ensemble(9), &task, &mut stream(10, 0)).unwrap().snr;
    assert!((a / b - 1.0).abs() < 0.03, "{a} vs {b}");
}

fn stats_1d(mu: f64, var: f64) -> GaussianStats {
    GaussianStats::new(vec![mu], DMatrix::from_element(1, 1, var)).unwrap()
}

#[test]
fn frechet_one_dimensional_cases() {
    let d = |a, b| frechet_distance(&a, &b).unwrap();
    assert!(d(stats_1d(0.3, 2.0), stats_1d(0.3, 2.0)).abs() < 1e-8);
    assert!((d(stats_1d(0.0, 1.0), stats_1d(1.0, 1.0)) - 1.0).abs() < 1e-8);
    assert!((d(stats_1d(0.0, 1.0), stats_1d(0.0, 4.0)) - 1.0).abs() < 1e-8);
}

#[test]
fn frechet_matches_commuting_closed_form_and_is_symmetric() {
    // Diagonal covariances commute: the cross term is Σ √(a_i b_i).
    let a = GaussianStats::new(
        vec![0.0, 1.0, 2.0],
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, 4.0, 9.0])),
    )
    .unwrap();
    let b = GaussianStats::new(
        vec![1.0, 1.0, 0.0],
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[4.0, 1.0, 1.0])),
    )
    .unwrap();
    let expected = 1.0 + 4.0 + (1.0f64 - 2.0).powi(2) + (2.0f64 - 1.0).powi(2) + (3.0f64 - 1.0).powi(2);
    let ab = frechet_distance(&a, &b).unwrap();
    assert!((ab - expected).abs() < 1e-10);
    let mut rng = stream(11, 0);
    let xa: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let xb: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..4).map(|_| 2.0 * rng.random::<f64>()).collect())
        .collect();
    let (ga, gb) = (GaussianStats::fit(&xa).unwrap(), GaussianStats::fit(&xb).unwrap());
    let (x, y) = (frechet_distance(&ga, &gb).unwrap(), frechet_distance(&gb, &ga).unwrap());
    assert!((x - y).abs() < 1e-10 * x.max(1.0));
    assert!(frechet_distance(&ga, &ga).unwrap().abs() < 1e-8);
    assert!(matches!(frechet_distance(&a, &ga), Err(Error::Parameter(_))));
}

#[test]
fn slicing_geometry() {
    let f = ObjectField::new(vec![2, 3, 4], (0..24).map(|i| i as f64).collect()).unwrap();
    let ax = slices(&f, SliceAxis::Axial);
    assert_eq!(ax.len(), 2);
    assert_eq!(ax[1].shape(), &[3, 4]);
    assert_eq!(ax[1].get(&[0, 0]), 12.0);
    let co = slices(&f, SliceAxis::Coronal);
    assert_eq!(co.len(), 3);
    assert_eq!(co[2].shape(), &[2, 4]);
    assert_eq!(co[2].get(&[1, 3]), f.get(&[1, 2, 3]));
    let sa = slices(&f, SliceAxis::Sagittal);
    assert_eq!(sa.len(), 4);
    assert_eq!(sa[3].get(&[1, 2]), f.get(&[1, 2, 3]));
    let flat = ObjectField::zeros(vec![4, 4]).unwrap();
    assert_eq!(slices(&flat, SliceAxis::Sagittal), vec![flat]);
}

#[test]
fn pixel16_pools_to_256_features() {
    let f = ObjectField::new(vec![32, 32], (0..1024).map(|i| (i % 32) as f64).collect()).unwrap();
    let v = Pixel16.extract(&f).unwrap();
    assert_eq!(v.len(), 256);
    assert_eq!(v[0], 0.5);
    assert_eq!(v[15], 30.5);
    assert!(Pixel16.extract(&ObjectField::zeros(vec![8, 8]).unwrap()).is_err());
    assert!(extractor("inception").is_err());
}

#[test]
fn slice_fid_identity_and_mean_shift() {
    let params = lumpy(16, 3);
    let a: Vec<_> = (0..20)
        .map(|i| sample_lumpy(&params, &mut stream(12, i)).unwrap())
        .collect();
    for axis in SliceAxis::ALL {
        let same = slice_fid(&a, &a, axis, &Pixel16).unwrap();
        assert!(same.value.abs() < 1e-6);
        assert_eq!(same.slices_a, 320);
        assert!(same.warning.is_none());
        let delta = 0.05;
        let b: Vec<_> = a.iter().map(|f| f.map(|v| v + delta)).collect();
        let shifted = slice_fid(&a, &b, axis, &Pixel16).unwrap();
        assert!(
            (shifted.value - 256.0 * delta * delta).abs() < 1e-6,
            "{}",
            shifted.value
        );
    }
}

#[test]
fn slice_fid_grows_with_measurement_noise() {
    let params = lumpy(32, 2);
    let clean: Vec<_> = (0..400)
        .map(|i| sample_lumpy(&params, &mut stream(13, i)).unwrap())
        .collect();
    let mut last = 0.0;
    for sigma in [0.02, 0.05, 0.1, 0.2] {
        let imaging = ImagingConfig::new(2, sigma);
        let noisy: Vec<_> = clean
            .iter()
            .enumerate()
            .map(|(i, f)| reconstruct(&measure(f, &imaging, &mut stream(14, i as u64)).unwrap()).0)
            .collect();
        let fid = slice_fid(&clean, &noisy, SliceAxis::Axial, &Pixel16).unwrap().value;
        assert!(fid > last, "σ = {sigma}: {fid} !> {last}");
        last = fid;
    }
}

#[test]
fn too_few_slices_are_ridged_with_a_warning() {
    let params = lumpy(16, 2);
    let a: Vec<_> = (0..30)
        .map(|i| sample_lumpy(&params, &mut stream(15, i)).unwrap())
        .collect();
    let r = slice_fid(&a, &a, SliceAxis::Axial, &Pixel16).unwrap();
    assert!(r.warning.is_some());
    assert!(r.ridge > 0.0);
    assert!(r.value.abs() < 1e-6);
}

#[test]
fn white_noise_has_flat_power_spectrum() {
    let sigma = 0.7;
    let mut rng = stream(16, 0);
    let ens: Vec<_> = (0..300)
        .map(|_| {
            ObjectField::new(
                vec![32, 32],
                (0..1024)
                    .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let nps = noise_power_spectrum(&ens).unwrap();
    for (f, p) in nps.frequency.iter().zip(&nps.power).skip(1) {
        assert!((p / (sigma * sigma) - 1.0).abs() < 0.15, "f = {f}: {p}");
    }
    assert!((nps.band_power(0.75) / (sigma * sigma) - 1.0).abs() < 0.05);

    let smooth: Vec<_> = (0..300)
        .map(|i| sample_lumpy(&lumpy(32, 2), &mut stream(17, i)).unwrap())
        .collect();
    let s = noise_power_spectrum(&smooth).unwrap();
    assert!(s.band_power(0.75) < 1e-3 * s.power[1]);
}

#[test]
fn signal_spec_round_trips_through_task_config() {
    let task = DetectionTask::centred(&[32, 32], 2.0, 1.0, 0.1);
    let json = serde_json::to_string(&task).unwrap();
    let back: DetectionTask = serde_json::from_str(&json).unwrap();
    assert_eq!(back, task);
    assert_eq!(
        back.signal,
        SignalSpec {
            center: vec![16, 16],
            radius: 2.0,
            amplitude: 1.0
        }
    );
}

#[test]
fn streaming_moments_match_batch_fit() {
    let mut rng = stream(11, 0);
    let feats: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..6).map(|j| 5.0 + j as f64 + rng.random::<f64>()).collect())
        .collect();
    let mut m = FeatureMoments::new(6);
    for chunk in feats.chunks(37) {
        m.push_batch(chunk).unwrap();
    }
    let (a, b) = (m.stats().unwrap(), GaussianStats::fit(&feats).unwrap());
    assert_eq!(m.count(), 300);
    assert!((a.mean - b.mean).amax() < 1e-12);
    assert!((a.cov - b.cov).amax() < 1e-12);
}

#[test]
fn snr_accumulator_matches_snr_study() {
    let objs: Vec<ObjectField> = (0..200)
        .map(|i| sample_lumpy(&lumpy(16, 2), &mut stream(5, i)).unwrap())
        .collect();
    let task = DetectionTask::centred(&[16, 16], 2.0, 0.5, 0.1);
    let whole = snr_study(&objs, &task, &mut stream(6, 0)).unwrap().snr;
    let mut acc = SnrAccumulator::new(&task, &[16, 16]).unwrap();
    let mut rng = stream(6, 0);
    for f in &objs {
        acc.push(f, &mut rng).unwrap();
    }
    assert_eq!(acc.len(), 200);
    assert_eq!(acc.finish().unwrap().snr, whole);
}
