//! Train a small style-based generator, then render a latents × noise-draws
//! grid: rows share a mapped style, columns share a noise draw.
//!
//!     cargo run --example style_mix -- [out_dir]

use std::path::PathBuf;

use ambientsom::harness::{
    simulate_dataset, style_mix_grid, style_stats, train_mode, Dataset, ExperimentConfig, StyleMixOptions,
};
use ambientsom::training::TrainMode;

const CONFIG: &str = r#"
name = "styled16"

[objects]
count = 256
seed = 1
[objects.model]
kind = "lumpy"
mean_count = 6.0
amplitude = 1.0
width = 1.5
field_shape = [16, 16]

[imaging]
dims = 2
noise_std = 0.05

[model]
arch = "styled"
resolution = 16
latent_dim = 16
base_channels = 8
max_channels = 16
mapping_depth = 2
seed = 2

[train]
batch_size = [16]
images_per_stage = 4800
seed = 3

[eval]
modes = ["ambient"]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "style-mix-example".into());
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    simulate_dataset(&cfg, &out.join("data"))?;
    let ds = Dataset::open(&out.join("data"))?;
    let t = train_mode(&cfg, &ds, &out.join("run"), TrainMode::Ambient, None)?;
    println!("trained {} steps", t.state.step);

    let opts = StyleMixOptions::new(6, 5, 7);
    let ckpt = out.join("run/ambient/checkpoints/final");
    let grid = style_mix_grid(&ckpt, &opts, &out.join("grid"))?;
    println!(
        "wrote {} ({}×{} px, {} rows × {} cols)",
        out.join("grid/grid.png").display(),
        grid.meta.width,
        grid.meta.height,
        grid.meta.rows,
        grid.meta.cols
    );
    let s = style_stats(&grid.fields)?;
    println!(
        "coarse correlation within rows {:.3}, between rows {:.3}; smallest within-row difference {:.2e}",
        s.within, s.between, s.min_within_diff
    );

    // Truncation pulls every row towards the average style, so the first
    // column varies less from row to row.
    let spread = |fields: &[Vec<ambientsom::ObjectField>]| {
        let col: Vec<&[f64]> = fields.iter().map(|row| row[0].values()).collect();
        let n = col.len() as f64;
        (0..col[0].len())
            .map(|i| {
                let m = col.iter().map(|c| c[i]).sum::<f64>() / n;
                col.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / n
            })
            .sum::<f64>()
            / col[0].len() as f64
    };
    let truncated = StyleMixOptions {
        truncation: Some(0.5),
        ..opts
    };
    let t_grid = style_mix_grid(&ckpt, &truncated, &out.join("grid-truncated"))?;
    println!(
        "variance across latents: {:.3e} untruncated, {:.3e} at truncation 0.5",
        spread(&grid.fields),
        spread(&t_grid.fields)
    );
    Ok(())
}
