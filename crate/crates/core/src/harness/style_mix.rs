use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pipeline::load_sampler;
use crate::nets::checkpoint::write_atomic;
use crate::nets::{Arch, LatentVector, StyleInputs, StyleSource};
use crate::observer::{slices, SliceAxis};
use crate::rng::{derive_seed, stream};
use crate::{Error, ObjectField, Result};

/// Pixels between grid cells. There is no outer border.
pub const GUTTER: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleMixOptions {
    pub n_latents: usize,
    pub n_noise: usize,
    pub seed: u64,
    pub truncation: Option<f64>,
    /// Use all-zero noise maps in every column.
    pub zero_noise: bool,
}

impl StyleMixOptions {
    pub fn new(n_latents: usize, n_noise: usize, seed: u64) -> Self {
        Self {
            n_latents,
            n_noise,
            seed,
            truncation: None,
            zero_noise: false,
        }
    }
}

/// Metadata written next to the grid image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub rows: usize,
    pub cols: usize,
    pub cell: usize,
    pub gutter: usize,
    pub width: usize,
    pub height: usize,
    /// Display mapping: `byte = 255·(v − lo)/(hi − lo)`, clamped.
    pub display_lo: f64,
    pub display_hi: f64,
    /// Shape of each raw field in `fields.f32` (row-major, rows then cols).
    pub field_shape: Vec<usize>,
    pub config_hash: String,
    pub options: StyleMixOptions,
}

pub struct StyleGrid {
    pub meta: GridMeta,
    /// `fields[row][col]`.
    pub fields: Vec<Vec<ObjectField>>,
    pub latents: Vec<LatentVector>,
}

/// Pixel size of a grid of `rows × cols` cells of side `cell`.
pub fn grid_dimensions(rows: usize, cols: usize, cell: usize) -> (usize, usize) {
    (
        cols * cell + cols.saturating_sub(1) * GUTTER,
        rows * cell + rows.saturating_sub(1) * GUTTER,
    )
}

/// Row `i` shares the mapped style of latent `i`; column `j` uses noise
/// draw `j` (the same draw in every row).
pub fn style_mix_fields(ckpt_dir: &Path, opts: &StyleMixOptions) -> Result<StyleGrid> {
    let (ck, gs) = load_sampler(ckpt_dir)?;
    if gs.config.arch != Arch::Styled {
        return Err(Error::Mode(format!(
            "style mixing needs a styled checkpoint, {} is {}",
            ckpt_dir.display(),
            gs.config.arch
        )));
    }
    if opts.n_latents == 0 || opts.n_noise == 0 {
        return Err(Error::param("grid needs at least one row and one column"));
    }
    let zseed = derive_seed(opts.seed, "style-latents");
    let nseed = derive_seed(opts.seed, "style-noise");
    let latents: Vec<LatentVector> = (0..opts.n_latents)
        .map(|i| LatentVector::sample(gs.latent_dim(), &mut stream(zseed, i as u64)))
        .collect();
    let noise: Vec<Vec<ObjectField>> = (0..opts.n_noise)
        .map(|j| {
            let style = StyleSource::Mapped(vec![0.0; gs.latent_dim()]);
            let inputs = if opts.zero_noise {
                StyleInputs::zero_noise(&gs, style)
            } else {
                StyleInputs::random_noise(&gs, style, &mut stream(nseed, j as u64))
            };
            inputs.noise_maps
        })
        .collect();
    let mut fields = Vec::with_capacity(opts.n_latents);
    for z in &latents {
        let w = gs.map_latent(z)?;
        let row = noise
            .iter()
            .map(|maps| {
                gs.generate_styled(&StyleInputs {
                    style: StyleSource::Mapped(w.clone()),
                    noise_maps: maps.clone(),
                    truncation: opts.truncation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        fields.push(row);
    }
    let cell = gs.side();
    let (width, height) = grid_dimensions(opts.n_latents, opts.n_noise, cell);
    let (lo, hi) = fields
        .iter()
        .flatten()
        .flat_map(|f| f.values().iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(StyleGrid {
        meta: GridMeta {
            rows: opts.n_latents,
            cols: opts.n_noise,
            cell,
            gutter: GUTTER,
            width,
            height,
            display_lo: lo,
            display_hi: hi,
            field_shape: gs.output_shape(),
            config_hash: ck.sidecar.config_hash.clone(),
            options: opts.clone(),
        },
        fields,
        latents,
    })
}

/// The 2-D image shown for a field: itself, or the central axial slice.
fn display_slice(f: &ObjectField) -> ObjectField {
    if f.dims() == 2 {
        return f.clone();
    }
    let mut s = slices(f, SliceAxis::Axial);
    let mid = s.len() / 2;
    s.swap_remove(mid)
}

/// 8-bit grayscale rendering of the grid; gutters are black.
pub fn render_grid(grid: &StyleGrid) -> Vec<u8> {
    let m = &grid.meta;
    let mut img = vec![0u8; m.width * m.height];
    let range = if m.display_hi > m.display_lo {
        m.display_hi - m.display_lo
    } else {
        1.0
    };
    for (r, row) in grid.fields.iter().enumerate() {
        for (c, f) in row.iter().enumerate() {
            let s = display_slice(f);
            let (x0, y0) = (c * (m.cell + GUTTER), r * (m.cell + GUTTER));
            for y in 0..m.cell {
                for x in 0..m.cell {
                    let v = (s.get(&[y, x]) - m.display_lo) / range;
                    img[(y0 + y) * m.width + x0 + x] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
    }
    img
}

fn encode_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let err = |e: png::EncodingError| Error::Numerical(format!("png encoding: {e}"));
        let mut w = enc.write_header().map_err(err)?;
        w.write_image_data(pixels).map_err(err)?;
    }
    Ok(out)
}

/// Writes `grid.png`, `grid.json` and the raw `fields.f32` into `out`.
pub fn style_mix_grid(ckpt_dir: &Path, opts: &StyleMixOptions, out: &Path) -> Result<StyleGrid> {
    let grid = style_mix_fields(ckpt_dir, opts)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let png = encode_png(grid.meta.width, grid.meta.height, &render_grid(&grid))?;
    write_atomic(&out.join("grid.png"), &png)?;
    let raw: Vec<u8> = grid
        .fields
        .iter()
        .flatten()
        .flat_map(|f| f.values().iter())
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    write_atomic(&out.join("fields.f32"), &raw)?;
    let json = serde_json::to_vec_pretty(&grid.meta).expect("grid metadata serialises");
    write_atomic(&out.join("grid.json"), &json)?;
    Ok(grid)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        // Two constant images: identical or unrelated.
        return if a == b { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

/// Correlation summary of a style-mix grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleStats {
    /// Mean correlation of 8×-downsampled images within a row.
    pub within: f64,
    /// Mean correlation of 8×-downsampled images from different rows.
    pub between: f64,
    /// Smallest full-resolution max-abs difference between two cells of the
    /// same row.
    pub min_within_diff: f64,
}

pub fn style_stats(fields: &[Vec<ObjectField>]) -> Result<StyleStats> {
    let small: Vec<Vec<Vec<f64>>> = fields
        .iter()
        .map(|row| row.iter().map(|f| f.downsample(3).into_values()).collect())
        .collect();
    let cells: Vec<(usize, &Vec<f64>)> = small
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().map(move |v| (r, v)))
        .collect();
    let (mut w, mut nw, mut b, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let c = pearson(cells[i].1, cells[j].1);
            if cells[i].0 == cells[j].0 {
                w += c;
                nw += 1;
            } else {
                b += c;
                nb += 1;
            }
        }
    }
    if nw == 0 || nb == 0 {
        return Err(Error::param("need at least two rows and two columns"));
    }
    let mut min_diff = f64::INFINITY;
    for row in fields {
        for i in 0..row.len() {
            for j in i + 1..row.len() {
                min_diff = min_diff.min(row[i].max_abs_diff(&row[j]));
            }
        }
    }
    Ok(StyleStats {
        within: w / nw as f64,
        between: b / nb as f64,
        min_within_diff: min_diff,
    })
}
