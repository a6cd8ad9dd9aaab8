//! Task-based and distributional image quality: Hotelling observer SNR for
//! a known disc signal, slice FID against clean objects, and the residual
//! noise power spectrum.
//!
//!     cargo run --example observer_metrics

use ambientsom::imaging::{measure, reconstruct, ImagingConfig};
use ambientsom::object_models::{LumpyParams, ObjectModel};
use ambientsom::observer::{noise_power_spectrum, slice_fid, snr_study, DetectionTask, Pixel16, SliceAxis};
use ambientsom::rng::stream;
use ambientsom::ObjectField;

fn noisy(ens: &[ObjectField], sigma: f64) -> ambientsom::Result<Vec<ObjectField>> {
    let cfg = ImagingConfig::new(ens[0].dims(), sigma);
    ens.iter()
        .enumerate()
        .map(|(i, f)| Ok(reconstruct(&measure(f, &cfg, &mut stream(9, i as u64))?).into_field()))
        .collect()
}

fn main() -> ambientsom::Result<()> {
    let model = ObjectModel::Lumpy(LumpyParams {
        mean_count: 20.0,
        amplitude: 1.0,
        width: 3.0,
        field_shape: vec![32, 32],
    });
    let truth = model.sample_ensemble(3000, 1)?;
    let again = model.sample_ensemble(3000, 2)?;

    let task = DetectionTask::centred(&[32, 32], 2.0, 0.3, 0.2);
    let snr = |ens: &[ObjectField]| snr_study(ens, &task, &mut stream(5, 0)).map(|s| s.snr);
    println!("Hotelling SNR, 8×8 ROI around a radius-2 disc");
    println!("  ground truth        {:.4}", snr(&truth)?);
    println!("  independent redraw  {:.4}", snr(&again)?);
    for sigma in [0.1, 0.3] {
        println!("  recon σ = {sigma:<4}       {:.4}", snr(&noisy(&truth, sigma)?)?);
    }

    println!("pixel16 slice FID against the ground truth");
    println!(
        "  redraw      {:.5}",
        slice_fid(&again, &truth, SliceAxis::Axial, &Pixel16)?.value
    );
    for sigma in [0.1, 0.3] {
        let r = slice_fid(&noisy(&again, sigma)?, &truth, SliceAxis::Axial, &Pixel16)?;
        println!("  recon σ = {sigma:<4} {:.5}", r.value);
    }

    let clean = noise_power_spectrum(&truth)?;
    let rough = noise_power_spectrum(&noisy(&truth, 0.3)?)?;
    println!("residual power in the top frequency quartile");
    println!(
        "  clean {:.3e}   σ = 0.3 {:.3e}",
        clean.band_power(0.75),
        rough.band_power(0.75)
    );

    // Volumes are compared slice by slice along each axis.
    let vol = ObjectModel::Lumpy(LumpyParams {
        mean_count: 40.0,
        amplitude: 1.0,
        width: 2.0,
        field_shape: vec![16, 16, 16],
    });
    let (a, b) = (vol.sample_ensemble(200, 3)?, vol.sample_ensemble(200, 4)?);
    for axis in SliceAxis::ALL {
        println!("3-D {axis:<8} FID {:.5}", slice_fid(&a, &b, axis, &Pixel16)?.value);
    }
    Ok(())
}
