//! Draw lumpy, clustered lumpy and constant objects and compare ensemble
//! moments with their closed forms; write one object as a PGM image.
//!
//!     cargo run --example object_models

use ambientsom::object_models::{
    insert_signal, ClusteredLumpyParams, LumpyParams, Normalization, ObjectModel, SignalSpec,
};
use ambientsom::ObjectField;

fn moments(ens: &[ObjectField]) -> (f64, f64) {
    let n = ens.len() as f64;
    let len = ens[0].len();
    let mut mean = vec![0.0; len];
    let mut sq = vec![0.0; len];
    for f in ens {
        for (i, v) in f.values().iter().enumerate() {
            mean[i] += v / n;
            sq[i] += v * v / n;
        }
    }
    let var = mean
        .iter()
        .zip(&sq)
        .map(|(m, s)| (s - m * m) * n / (n - 1.0))
        .sum::<f64>()
        / len as f64;
    (mean.iter().sum::<f64>() / len as f64, var)
}

fn write_pgm(path: &str, f: &ObjectField) -> std::io::Result<()> {
    let (h, w) = (f.shape()[0], f.shape()[1]);
    let norm = Normalization::fit_unit_range(std::slice::from_ref(f));
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        norm.apply(f)
            .values()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::write(path, out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lumpy = LumpyParams {
        mean_count: 20.0,
        amplitude: 1.0,
        width: 3.0,
        field_shape: vec![64, 64],
    };
    let ens = ObjectModel::Lumpy(lumpy.clone()).sample_ensemble(2000, 1)?;
    let (mean, var) = moments(&ens);
    println!("lumpy 64x64 over {} draws", ens.len());
    println!("  mean     {mean:.4}  (closed form {:.4})", lumpy.analytic_mean());
    println!("  variance {var:.4}  (closed form {:.4})", lumpy.analytic_variance());

    let clustered = ClusteredLumpyParams {
        mean_cluster_count: 5.0,
        mean_blobs_per_cluster: 4.0,
        cluster_spread: 4.0,
        amplitude: 1.0,
        width: 2.0,
        field_shape: vec![64, 64],
    };
    let ens_c = ObjectModel::ClusteredLumpy(clustered.clone()).sample_ensemble(2000, 2)?;
    println!(
        "clustered lumpy mean {:.4} (closed form {:.4})",
        moments(&ens_c).0,
        clustered.analytic_mean()
    );

    let flat = ObjectModel::Constant {
        value: 0.5,
        field_shape: vec![8, 8, 8],
    }
    .sample_ensemble(3, 3)?;
    println!("constant 8^3 mean {:.3}", flat[0].mean());

    // A radius-2 disc covers 13 pixels, so the sum grows by 13·a.
    let sig = SignalSpec {
        center: vec![32, 32],
        radius: 2.0,
        amplitude: 0.5,
    };
    let with = insert_signal(&ens[0], &sig)?;
    println!("signal adds {:.3} to the sum (13·a = 6.5)", with.sum() - ens[0].sum());

    write_pgm("lumpy.pgm", &ens[0])?;
    write_pgm("clustered.pgm", &ens_c[0])?;
    println!("wrote lumpy.pgm and clustered.pgm");
    Ok(())
}
