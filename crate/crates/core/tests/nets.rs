use ambientsom::nets::{
    from_fields, grow, Arch, DiscriminatorState, GeneratorState, LatentVector, NetConfig, StyleInputs, StyleSource,
};
use ambientsom::rng::stream;
use ambientsom::{Error, ObjectField, ReconImage};
use ambientsom_tensor::check::numerical_grad;
use ambientsom_tensor::{grad_values, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

fn small(arch: Arch, dims: usize, resolution: usize) -> NetConfig {
    NetConfig {
        arch,
        dims,
        resolution,
        latent_dim: 8,
        base_channels: 4,
        max_channels: 8,
        mapping_depth: 2,
        seed: 7,
        ..NetConfig::default()
    }
}

fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Nearest-neighbour 2× upsampling written out index by index.
fn upsample_nearest(f: &ObjectField) -> ObjectField {
    let shape: Vec<usize> = f.shape().iter().map(|s| s * 2).collect();
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|i| {
            let idx = ambientsom::field::unravel(i, &shape);
            let src: Vec<usize> = idx.iter().map(|v| v / 2).collect();
            f.get(&src)
        })
        .collect();
    ObjectField::new(shape, values).unwrap()
}

#[test]
fn resolution_law_holds_at_every_stage() {
    for (dims, res) in [(2, 32), (3, 16)] {
        let cfg = small(Arch::Progressive, dims, res);
        let mut gs = GeneratorState::<f32>::new(cfg.clone()).unwrap();
        let mut ds = DiscriminatorState::<f32>::new(cfg.clone()).unwrap();
        let z = LatentVector::sample(8, &mut stream(1, 0));
        for stage in 0..=cfg.levels() {
            assert_eq!(gs.stage, stage);
            let out = gs.generate(&z).unwrap();
            assert_eq!(out.shape(), vec![4 << stage; dims].as_slice());
            let score = ds.discriminate(&ReconImage(out)).unwrap();
            assert!(score.is_finite());
            if stage < cfg.levels() {
                (gs, ds) = grow(gs, ds).unwrap();
            }
        }
        assert!(matches!(grow(gs, ds), Err(Error::Schedule(_))));
    }
}

#[test]
fn grow_preserves_existing_parameters_bit_exact() {
    let cfg = small(Arch::Progressive, 2, 32);
    let gs = GeneratorState::<f32>::new(cfg.clone()).unwrap();
    let ds = DiscriminatorState::<f32>::new(cfg).unwrap();
    let (g_before, d_before) = (gs.params.clone(), ds.params.clone());
    let (gs, ds) = grow(gs, ds).unwrap();
    assert_eq!(gs.alpha, 0.0);
    assert_eq!(ds.alpha, 0.0);
    for (before, after) in [(&g_before, &gs.params), (&d_before, &ds.params)] {
        assert!(after.num_elements() > before.num_elements());
        for (name, p) in before.iter() {
            let q = after.get(name).unwrap();
            assert_eq!(p.value.shape(), q.value.shape());
            assert!(p
                .value
                .data()
                .iter()
                .zip(q.value.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn alpha_zero_matches_upsampled_previous_stage() {
    for dims in [2, 3] {
        let cfg = small(Arch::Progressive, dims, 16);
        let mut gs = GeneratorState::<f64>::new(cfg.clone()).unwrap();
        let mut ds = DiscriminatorState::<f64>::new(cfg.clone()).unwrap();
        let mut rng = stream(2, 0);
        let zs: Vec<_> = (0..3).map(|_| LatentVector::sample(8, &mut rng)).collect();
        for _ in 0..cfg.levels() {
            let before = gs.generate_batch(&zs).unwrap();
            (gs, ds) = grow(gs, ds).unwrap();
            let after = gs.generate_batch(&zs).unwrap();
            for (b, a) in before.iter().zip(&after) {
                assert!(upsample_nearest(b).max_abs_diff(a) < 1e-6);
            }
            gs.alpha = 1.0;
            ds.alpha = 1.0;
        }
    }
}

#[test]
fn output_is_continuous_in_alpha() {
    let cfg = small(Arch::Progressive, 2, 16);
    let gs = GeneratorState::<f32>::new(cfg.clone()).unwrap();
    let ds = DiscriminatorState::<f32>::new(cfg).unwrap();
    let (mut gs, _) = grow(gs, ds).unwrap();
    let z = LatentVector::sample(8, &mut stream(3, 0));
    for alpha in [0.0, 0.25, 0.5, 0.9999] {
        gs.alpha = alpha;
        let a = gs.generate(&z).unwrap();
        gs.alpha = alpha + 1e-4;
        let b = gs.generate(&z).unwrap();
        let vals = a.values();
        let range = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(a.max_abs_diff(&b) < 1e-2 * range, "alpha {alpha}");
    }
}

#[test]
fn discriminator_input_gradient_matches_finite_differences() {
    for (arch, dims, res) in [(Arch::Progressive, 2, 8), (Arch::Plain, 3, 8)] {
        let cfg = small(arch, dims, res);
        let gs = GeneratorState::<f64>::new(cfg.clone()).unwrap();
        let ds = DiscriminatorState::<f64>::new(cfg).unwrap();
        let (_, mut ds) = if arch == Arch::Progressive {
            grow(gs, ds).unwrap()
        } else {
            (gs, ds)
        };
        ds.alpha = 0.6;
        let mut rng = stream(4, dims as u64);
        let shape = [vec![1, 1], ds.input_shape()].concat();
        let n: usize = shape.iter().product();
        let x = Tensor::from_vec(shape.clone(), (0..n).map(|_| rng.sample(StandardNormal)).collect());
        let p = ds.params.bind(false);
        let xv = Var::param(x.clone());
        let analytic = grad_values(&ds.forward(&p, &xv).sum(), &[&xv]).remove(0);
        let numeric = numerical_grad(&x, 1e-6, |x| {
            let f = ObjectField::new(shape[2..].to_vec(), x.data().to_vec()).unwrap();
            ds.discriminate(&ReconImage(f)).unwrap()
        });
        let err = vec_rel_err(analytic.data(), numeric.data());
        assert!(err < 1e-3, "{arch} {dims}D relative error {err}");
    }
}

#[test]
fn discriminator_parameter_gradient_matches_finite_differences() {
    let cfg = small(Arch::Progressive, 2, 8);
    let ds = DiscriminatorState::<f64>::new(cfg).unwrap();
    let x = Var::constant(Tensor::from_vec(
        vec![2, 1, 4, 4],
        (0..32).map(|i| (i as f64 * 0.37).sin()).collect(),
    ));
    let name = "d0.conv.w";
    let p = ds.params.bind(true);
    let analytic = grad_values(&ds.forward(&p, &x).sum(), &[p.leaf(name)]).remove(0);
    let w0 = ds.params.get(name).unwrap().value.clone();
    let numeric = numerical_grad(&w0, 1e-6, |w| {
        let mut d = ds.clone();
        d.params.get_mut(name).unwrap().value = w.clone();
        d.forward(&d.params.bind(false), &x).value().sum()
    });
    assert!(vec_rel_err(analytic.data(), numeric.data()) < 1e-5);
}

#[test]
fn batch_scores_equal_single_scores_without_minibatch_stddev() {
    let cfg = NetConfig {
        minibatch_stddev: false,
        ..small(Arch::Plain, 2, 16)
    };
    let ds = DiscriminatorState::<f64>::new(cfg).unwrap();
    let mut rng = stream(5, 0);
    let xs: Vec<_> = (0..4)
        .map(|_| {
            let v = (0..256).map(|_| rng.sample(StandardNormal)).collect();
            ReconImage(ObjectField::new(vec![16, 16], v).unwrap())
        })
        .collect();
    let batch = ds.discriminate_batch(&xs).unwrap();
    assert_eq!(batch.len(), 4);
    for (x, b) in xs.iter().zip(&batch) {
        assert!((ds.discriminate(x).unwrap() - b).abs() < 1e-12);
    }
}

#[test]
fn shape_and_length_errors() {
    let cfg = small(Arch::Progressive, 2, 16);
    let gs = GeneratorState::<f32>::new(cfg.clone()).unwrap();
    let ds = DiscriminatorState::<f32>::new(cfg).unwrap();
    assert!(matches!(
        gs.generate(&LatentVector(vec![0.0; 3])),
        Err(Error::Parameter(_))
    ));
    let wrong = ReconImage(ObjectField::zeros(vec![8, 8]).unwrap());
    assert!(matches!(ds.discriminate(&wrong), Err(Error::Parameter(_))));
    assert!(matches!(
        gs.map_latent(&LatentVector(vec![0.0; 8])),
        Err(Error::Mode(_))
    ));
}

#[test]
fn generation_is_deterministic() {
    let cfg = small(Arch::Progressive, 3, 8);
    let gs = GeneratorState::<f32>::new(cfg).unwrap();
    let z = LatentVector::sample(8, &mut stream(6, 0));
    let a = gs.generate(&z).unwrap();
    let b = gs.generate(&z).unwrap();
    assert_eq!(a, b);
}

/// A 3-D generator whose kernels only act within slices, fed weights lifted
/// from a 2-D generator, must reproduce the 2-D output on every slice.
#[test]
fn lifted_2d_weights_give_slice_constant_3d_output() {
    let cfg2 = NetConfig {
        pixel_norm: true,
        ..small(Arch::Plain, 2, 8)
    };
    let cfg3 = NetConfig {
        dims: 3,
        ..cfg2.clone()
    };
    let g2 = GeneratorState::<f64>::new(cfg2).unwrap();
    let mut g3 = GeneratorState::<f64>::new(cfg3).unwrap();
    let names: Vec<String> = g3.params.names().cloned().collect();
    for name in names {
        let src = g2.params.get(&name).unwrap().clone();
        let dst = g3.params.get_mut(&name).unwrap();
        let eff: Vec<f64> = src.value.data().iter().map(|v| v * src.scale).collect();
        let s2 = src.value.shape().to_vec();
        let s3 = dst.value.shape().to_vec();
        let mut out = vec![0.0; dst.value.numel()];
        if name == "g0.dense.w" {
            // [k, c·16] → [k, c·64], replicated along the new leading axis.
            let (k, c) = (s2[0], s2[1] / 16);
            for i in 0..k {
                for ch in 0..c {
                    for d in 0..4 {
                        for hw in 0..16 {
                            out[i * s3[1] + ch * 64 + d * 16 + hw] = eff[i * s2[1] + ch * 16 + hw];
                        }
                    }
                }
            }
        } else if name == "g0.dense.b" {
            for ch in 0..s2[0] / 16 {
                for d in 0..4 {
                    for hw in 0..16 {
                        out[ch * 64 + d * 16 + hw] = eff[ch * 16 + hw];
                    }
                }
            }
        } else if s3.len() == 5 {
            // [o, i, k, k] → [o, i, k, k, k], non-zero only in the centre slice.
            let kk = s2[2] * s2[3];
            let kd = s3[2];
            for oi in 0..s2[0] * s2[1] {
                for j in 0..kk {
                    out[oi * kd * kk + (kd / 2) * kk + j] = eff[oi * kk + j];
                }
            }
        } else {
            out = eff;
        }
        dst.value = Tensor::from_vec(s3, out.iter().map(|v| v / dst.scale).collect());
    }
    let z = LatentVector::sample(8, &mut stream(8, 0));
    let a = g2.generate(&z).unwrap();
    let b = g3.generate(&z).unwrap();
    for d in 0..8 {
        for h in 0..8 {
            for w in 0..8 {
                assert!((b.get(&[d, h, w]) - a.get(&[h, w])).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn map_latent_jacobian_matches_finite_differences() {
    let cfg = small(Arch::Styled, 2, 8);
    let gs = GeneratorState::<f64>::new(cfg).unwrap();
    let mut rng = stream(9, 0);
    for _ in 0..5 {
        let z = Tensor::from_vec(vec![1, 8], (0..8).map(|_| rng.sample(StandardNormal)).collect());
        let u = Tensor::from_vec(vec![1, 8], (0..8).map(|_| rng.sample(StandardNormal)).collect());
        let zv = Var::param(z.clone());
        let w = gs.map_var(&gs.params.bind(false), &zv).unwrap();
        let analytic = grad_values(&w.mul(&Var::constant(u.clone())).sum(), &[&zv]).remove(0);
        let numeric = numerical_grad(&z, 1e-6, |z| {
            let w = gs.map_latent(&LatentVector(z.data().to_vec())).unwrap();
            w.iter().zip(u.data()).map(|(a, b)| a * b).sum()
        });
        assert!(vec_rel_err(analytic.data(), numeric.data()) < 1e-4);
    }
}

#[test]
fn styled_generator_behaviour() {
    let cfg = small(Arch::Styled, 2, 16);
    let mut gs = GeneratorState::<f64>::new(cfg.clone()).unwrap();
    let mut rng = stream(10, 0);
    let z = LatentVector::sample(8, &mut rng);
    let w = gs.map_latent(&z).unwrap();
    assert_eq!(w.len(), cfg.latent_dim);
    assert_eq!(w, gs.map_latent(&z).unwrap());

    // Zero noise reproduces the plain generate path.
    let zero = StyleInputs::zero_noise(&gs, StyleSource::Latent(z.clone()));
    let direct = gs.generate(&z).unwrap();
    assert_eq!(gs.generate_styled(&zero).unwrap(), direct);
    let mapped = StyleInputs::zero_noise(&gs, StyleSource::Mapped(w.clone()));
    assert!(gs.generate_styled(&mapped).unwrap().max_abs_diff(&direct) < 1e-12);

    // Noise strengths start at zero, so noise only matters once they move.
    let noisy = StyleInputs::random_noise(&gs, StyleSource::Mapped(w.clone()), &mut rng);
    assert_eq!(
        gs.generate_styled(&noisy).unwrap(),
        gs.generate_styled(&mapped).unwrap()
    );
    for name in ["s2.conv0.noise", "s2.conv1.noise"] {
        gs.params.get_mut(name).unwrap().value = Tensor::from_vec(vec![1], vec![0.5]);
    }
    let a = gs.generate_styled(&noisy).unwrap();
    assert!(a.max_abs_diff(&gs.generate_styled(&mapped).unwrap()) > 0.0);
    assert_eq!(a, gs.generate_styled(&noisy).unwrap());

    // Truncation at ψ = 1 is the identity.
    let mut t = noisy.clone();
    t.truncation = Some(1.0);
    assert!(gs.generate_styled(&t).unwrap().max_abs_diff(&a) < 1e-12);
    t.truncation = Some(0.0);
    assert!(matches!(gs.generate_styled(&t), Err(Error::Parameter(_))));

    let mut bad = noisy.clone();
    bad.noise_maps.pop();
    assert!(matches!(gs.generate_styled(&bad), Err(Error::Parameter(_))));
    let mut bad = noisy;
    bad.noise_maps[1] = ObjectField::zeros(vec![4, 4]).unwrap();
    assert!(matches!(gs.generate_styled(&bad), Err(Error::Parameter(_))));
}

#[test]
fn styled_generator_gradients_reach_every_parameter() {
    let cfg = small(Arch::Styled, 2, 8);
    let gs = GeneratorState::<f64>::new(cfg).unwrap();
    let mut rng = stream(11, 0);
    let z = Var::constant(Tensor::from_vec(
        vec![2, 8],
        (0..16).map(|_| rng.sample(StandardNormal)).collect(),
    ));
    let noise: Vec<_> = gs.sample_noise(2, &mut rng).into_iter().map(Var::constant).collect();
    let p = gs.params.bind(true);
    let out = gs.forward(&p, &z, Some(&noise));
    let leaves = p.trainable();
    let refs: Vec<_> = leaves.iter().map(|(_, v)| v).collect();
    let grads = grad_values(&out.square().sum(), &refs);
    for ((name, _), g) in leaves.iter().zip(&grads) {
        assert!(g.max_abs() > 0.0, "{name} received no gradient");
    }
    // The running style average is a buffer, not a trainable weight.
    assert!(leaves.iter().all(|(n, _)| n != "w_avg"));
}

#[test]
fn from_fields_round_trips() {
    let f = ObjectField::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let t = from_fields::<f64>(&[&f, &f]);
    assert_eq!(t.shape(), &[2, 1, 2, 2]);
    assert_eq!(ambientsom::nets::to_fields(&t), vec![f.clone(), f]);
}
