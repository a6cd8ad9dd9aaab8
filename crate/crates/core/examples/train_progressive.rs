//! Progressive training on noisy 16×16 lumpy measurements: both the
//! baseline (fit the reconstructions) and the ambient variant (fit through
//! the imaging operator), then a checkpoint round trip and resume.
//!
//!     cargo run --example train_progressive

use ambientsom::imaging::{measure, ImagingConfig};
use ambientsom::nets::checkpoint::Checkpoint;
use ambientsom::nets::{Arch, NetConfig};
use ambientsom::object_models::{sample_lumpy, LumpyParams};
use ambientsom::rng::stream;
use ambientsom::training::{TrainConfig, TrainData, TrainMode, Trainer};

fn main() -> ambientsom::Result<()> {
    let params = LumpyParams {
        mean_count: 6.0,
        amplitude: 1.0,
        width: 1.5,
        field_shape: vec![16, 16],
    };
    let imaging = ImagingConfig::new(2, 0.2);
    let measurements = (0..256)
        .map(|i| {
            let mut rng = stream(1, i);
            measure(&sample_lumpy(&params, &mut rng)?, &imaging, &mut rng)
        })
        .collect::<ambientsom::Result<Vec<_>>>()?;

    let net = NetConfig {
        arch: Arch::Progressive,
        resolution: 16,
        latent_dim: 16,
        base_channels: 8,
        max_channels: 16,
        seed: 2,
        ..NetConfig::default()
    };
    for mode in [TrainMode::Baseline, TrainMode::Ambient] {
        let cfg = TrainConfig {
            mode,
            batch_size: vec![16],
            images_per_stage: 1600,
            ema_decay: Some(0.99),
            imaging: imaging.clone(),
            seed: 3,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(&net, &cfg, TrainData::Measurements(measurements.clone()), "example")?;
        println!("{mode}: {} images over {} stages", t.total_images(), cfg.stages(&net));
        while !t.finished() {
            let r = t.step()?;
            if r.step % 50 == 0 {
                println!(
                    "  step {:4} stage {} alpha {:.2}  d {:.3}  g {:.3}",
                    r.step, r.stage, r.alpha, r.d_loss, r.g_loss
                );
            }
        }
        println!("  grew at steps {:?}", t.grow_events);
    }

    // Checkpoints restore the full training state.
    let cfg = TrainConfig {
        batch_size: vec![16],
        images_per_stage: 800,
        imaging,
        seed: 4,
        ..TrainConfig::default()
    };
    let data = TrainData::Measurements(measurements);
    let mut a = Trainer::new(&net, &cfg, data.clone(), "example")?;
    for _ in 0..20 {
        a.step()?;
    }
    let dir = std::env::temp_dir().join("ambientsom-example-ckpt");
    a.checkpoint().save(&dir)?;
    let mut b = Trainer::resume(&Checkpoint::load(&dir)?, &cfg, data, "example")?;
    let (ra, rb) = (a.step()?, b.step()?);
    println!("resumed step {} matches: {}", rb.step, ra.same_run(&rb));
    Ok(())
}
