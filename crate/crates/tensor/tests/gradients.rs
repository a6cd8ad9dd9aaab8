use ambientsom_tensor::check::{numerical_grad, relative_error};
use ambientsom_tensor::{grad, grad_values, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Fixed random projection so vector-valued ops reduce to a scalar.
fn project(y: &Var<f64>, seed: u64) -> Var<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = Var::constant(random(y.shape(), &mut rng));
    y.mul(&p).sum()
}

/// Checks the analytic gradient of `f` with respect to each input.
fn check(inputs: &[Tensor<f64>], tol: f64, f: impl Fn(&[Var<f64>]) -> Var<f64>) {
    let vars: Vec<Var<f64>> = inputs.iter().cloned().map(Var::param).collect();
    let out = f(&vars);
    let refs: Vec<&Var<f64>> = vars.iter().collect();
    let analytic = grad_values(&out, &refs);
    for (i, x) in inputs.iter().enumerate() {
        let numeric = numerical_grad(x, 1e-6, |probe| {
            let vs: Vec<Var<f64>> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| Var::constant(if j == i { probe.clone() } else { t.clone() }))
                .collect();
            f(&vs).value().item()
        });
        for (a, n) in analytic[i].data().iter().zip(numeric.data()) {
            assert!(
                relative_error(*a, *n, 1e-3) < tol,
                "input {i}: analytic {a} numeric {n}"
            );
        }
    }
}

#[test]
fn elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[1, 4], &mut rng);
    let pos = a.map(|v| v.abs() + 0.5);
    check(&[a.clone(), b.clone()], 1e-6, |v| project(&v[0].add(&v[1]), 1));
    check(&[a.clone(), b.clone()], 1e-6, |v| project(&v[0].sub(&v[1]), 2));
    check(&[a.clone(), b.clone()], 1e-6, |v| project(&v[0].mul(&v[1]), 3));
    check(std::slice::from_ref(&pos), 1e-6, |v| project(&v[0].recip(), 4));
    check(std::slice::from_ref(&pos), 1e-6, |v| project(&v[0].sqrt(), 5));
    check(std::slice::from_ref(&pos), 1e-6, |v| project(&v[0].ln(), 6));
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].exp(), 7));
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].sigmoid(), 8));
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].softplus(), 9));
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].leaky_relu(0.2), 10));
    check(std::slice::from_ref(&a), 1e-6, |v| {
        project(&v[0].scale(-2.5).add_scalar(1.0).neg(), 11)
    });
}

#[test]
fn shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&[2, 3, 4], &mut rng);
    let b = random(&[2, 2, 4], &mut rng);
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].sum_to(&[1, 3, 1]), 1));
    check(std::slice::from_ref(&a), 1e-6, |v| {
        project(&v[0].mean_to(&[2, 1, 4]), 2)
    });
    check(&[random(&[3, 1], &mut rng)], 1e-6, |v| {
        project(&v[0].broadcast_to(&[2, 3, 4]), 3)
    });
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].reshape(&[6, 4]), 4));
    check(&[a.clone(), b.clone()], 1e-6, |v| project(&v[0].concat(&v[1], 1), 5));
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].narrow(1, 1, 2), 6));
    check(std::slice::from_ref(&a), 1e-6, |v| project(&v[0].pad_axis(2, 1, 7), 7));
}

#[test]
fn linear_algebra_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[3, 5], &mut rng);
    let b = random(&[5, 2], &mut rng);
    check(&[a.clone(), b], 1e-6, |v| project(&v[0].matmul(&v[1]), 1));
    check(&[a], 1e-6, |v| project(&v[0].transpose(), 2));
}

#[test]
fn convolution_family_2d_and_3d() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (xs, ws) in [
        (vec![2, 2, 5, 4], vec![3, 2, 3, 3]),
        (vec![1, 2, 3, 4, 3], vec![2, 2, 3, 3, 3]),
    ] {
        let x = random(&xs, &mut rng);
        let w = random(&ws, &mut rng);
        let mut gs = xs.clone();
        gs[1] = ws[0];
        let g = random(&gs, &mut rng);
        check(&[x.clone(), w.clone()], 1e-6, |v| project(&v[0].conv(&v[1]), 1));
        check(&[g.clone(), w.clone()], 1e-6, |v| {
            project(&v[0].conv_input_grad(&v[1]), 2)
        });
        let wsh = ws.clone();
        check(&[x.clone(), g.clone()], 1e-6, move |v| {
            project(&v[0].conv_weight_grad(&v[1], &wsh), 3)
        });
    }
}

#[test]
fn resampling_and_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    check(&[random(&[2, 2, 3, 4], &mut rng)], 1e-6, |v| {
        project(&v[0].upsample2(), 1)
    });
    check(&[random(&[1, 2, 4, 2, 6], &mut rng)], 1e-6, |v| {
        project(&v[0].downsample2(), 2)
    });
    check(&[random(&[2, 1, 4, 6], &mut rng)], 1e-6, |v| project(&v[0].dft(2), 3));
    check(&[random(&[2, 4, 6, 2], &mut rng)], 1e-6, |v| {
        project(&v[0].idft_real(2), 4)
    });
    check(&[random(&[1, 1, 4, 2, 4], &mut rng)], 1e-6, |v| {
        project(&v[0].dft(3).idft_real(3), 5)
    });
}

/// Small conv net with leaky ReLU, pooling and a dense head.
fn small_critic(x: &Var<f64>, w1: &Var<f64>, w2: &Var<f64>, dense: &Var<f64>) -> Var<f64> {
    let h = x.conv(w1).leaky_relu(0.2).downsample2();
    let h = h.conv(w2).softplus();
    let flat = h.reshape(&[h.shape()[0], h.shape()[1..].iter().product()]);
    flat.matmul(dense).sum()
}

#[test]
fn double_backward_gradient_penalty() {
    // ∂/∂θ ‖∇ₓ D(x; θ)‖², checked against finite differences of the
    // first-order gradient.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 1, 4, 4], &mut rng);
    let w1 = random(&[3, 1, 3, 3], &mut rng);
    let w2 = random(&[2, 3, 3, 3], &mut rng);
    let dense = random(&[8, 1], &mut rng);
    let penalty = |x: &Tensor<f64>, w1: &Tensor<f64>, w2: &Tensor<f64>, dense: &Tensor<f64>, create: bool| {
        let xv = Var::param(x.clone());
        let (a, b, c) = (
            Var::param(w1.clone()),
            Var::param(w2.clone()),
            Var::param(dense.clone()),
        );
        let out = small_critic(&xv, &a, &b, &c);
        let gx = grad(&out, &[&xv], None, create)[0].clone().unwrap();
        let p = gx.square().sum();
        (p, a, b, c)
    };
    let (p, a, b, c) = penalty(&x, &w1, &w2, &dense, true);
    let analytic = grad_values(&p, &[&a, &b, &c]);
    let numeric_w1 = numerical_grad(&w1, 1e-6, |t| penalty(&x, t, &w2, &dense, false).0.value().item());
    let numeric_w2 = numerical_grad(&w2, 1e-6, |t| penalty(&x, &w1, t, &dense, false).0.value().item());
    let numeric_d = numerical_grad(&dense, 1e-6, |t| penalty(&x, &w1, &w2, t, false).0.value().item());
    for (an, nu) in analytic.iter().zip([numeric_w1, numeric_w2, numeric_d]) {
        for (a, n) in an.data().iter().zip(nu.data()) {
            assert!(relative_error(*a, *n, 1e-3) < 1e-5, "analytic {a} numeric {n}");
        }
    }
}

#[test]
fn unrelated_inputs_get_no_gradient() {
    let a = Var::param(Tensor::<f64>::ones(vec![2]));
    let b = Var::param(Tensor::<f64>::ones(vec![2]));
    let out = a.square().sum();
    let g = grad(&out, &[&a, &b], None, false);
    assert!(g[0].is_some() && g[1].is_none());
    assert_eq!(g[0].as_ref().unwrap().value().data(), &[2.0, 2.0]);
}

proptest! {
    #[test]
    fn sum_to_is_adjoint_of_broadcast(rows in 1usize..4, cols in 1usize..5, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let big = random(&[rows, 3, cols], &mut rng);
        let small = random(&[3, 1], &mut rng);
        let lhs = big.mul(&small.broadcast_to(&[rows, 3, cols])).sum();
        let rhs = big.sum_to(&[3, 1]).mul(&small).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }
}
