//! Compare reverse-mode gradients with central finite differences, in f64,
//! through the discriminator and through the ambient chain
//! generator → DFT → noise → inverse DFT.
//!
//!     cargo run --example gradient_check

use ambientsom::imaging::ImagingConfig;
use ambientsom::nets::{Arch, DiscriminatorState, GeneratorState, NetConfig};
use ambientsom::rng::stream;
use ambientsom::training::ambient_chain;
use ambientsom::{ObjectField, ReconImage};
use ambientsom_tensor::check::numerical_grad;
use ambientsom_tensor::{grad_values, Tensor, Var};

fn main() -> ambientsom::Result<()> {
    let net = NetConfig {
        arch: Arch::Plain,
        resolution: 8,
        latent_dim: 8,
        base_channels: 4,
        max_channels: 8,
        seed: 1,
        ..NetConfig::default()
    };

    let ds = DiscriminatorState::<f64>::new(net.clone())?;
    let x = Tensor::from_vec(vec![1, 1, 8, 8], (0..64).map(|i| (i as f64 * 0.31).cos()).collect());
    let xv = Var::param(x.clone());
    let analytic = grad_values(&ds.forward(&ds.params.bind(false), &xv).sum(), &[&xv]).remove(0);
    let numeric = numerical_grad(&x, 1e-6, |x| {
        let f = ObjectField::new(vec![8, 8], x.data().to_vec()).unwrap();
        ds.discriminate(&ReconImage(f)).unwrap()
    });
    println!(
        "discriminator input gradient: max |autograd − FD| = {:.2e} (scale {:.2e})",
        analytic.max_abs_diff(&numeric),
        numeric.max_abs()
    );

    let gs = GeneratorState::<f64>::new(net)?;
    let imaging = ImagingConfig::new(2, 0.2);
    let z = Tensor::from_vec(vec![2, 8], (0..16).map(|i| (i as f64 * 0.53).sin()).collect());
    let probe = Tensor::from_vec(vec![2, 1, 8, 8], (0..128).map(|i| (i as f64 * 0.7).sin()).collect());
    let objective = |g: &GeneratorState<f64>, trainable: bool| {
        let p = g.params.bind(trainable);
        let out = g.forward(&p, &Var::constant(z.clone()), None);
        // The same noise stream every call keeps the objective smooth.
        let r = ambient_chain(&out, &imaging, 8, &mut stream(5, 0)).unwrap();
        (p, r.mul(&Var::constant(probe.clone())).sum())
    };
    let name = gs.params.iter().map(|(n, _)| n.clone()).next().expect("parameters");
    let (p, s) = objective(&gs, true);
    let analytic = grad_values(&s, &[p.leaf(&name)]).remove(0);
    let w0 = gs.params.get(&name).unwrap().value.clone();
    let numeric = numerical_grad(&w0, 1e-6, |w| {
        let mut g = gs.clone();
        g.params.get_mut(&name).unwrap().value = w.clone();
        objective(&g, false).1.value().item()
    });
    println!(
        "ambient chain gradient of {name}: relative error {:.2e}",
        analytic.max_abs_diff(&numeric) / numeric.max_abs()
    );
    Ok(())
}
