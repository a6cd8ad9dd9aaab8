use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::{detection_task, Dataset};
use crate::nets::checkpoint::{write_atomic, Checkpoint};
use crate::nets::{GeneratorState, LatentVector};
use crate::object_models::SignalSpec;
use crate::observer::{
    extractor, fid_from_stats, noise_power_spectrum, slice_features, slice_fid, snr_study, FeatureMoments, SliceAxis,
    SnrAccumulator, SpectrumAccumulator,
};
use crate::rng::{derive_seed, stream, Stream};
use crate::training::{TrainData, TrainMode, Trainer, METRICS_FILE};
use crate::{Error, ObjectField, Result};

pub const REPORT_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Directory of one training mode inside a run directory.
pub fn mode_dir(run_dir: &Path, mode: TrainMode) -> PathBuf {
    run_dir.join(mode.to_string())
}

/// The final checkpoint of a mode.
pub fn final_checkpoint(run_dir: &Path, mode: TrainMode) -> PathBuf {
    mode_dir(run_dir, mode).join("checkpoints").join("final")
}

/// Writes the effective configuration next to the run outputs.
pub fn archive_config(cfg: &ExperimentConfig, run_dir: &Path) -> Result<()> {
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let text = format!("# config hash {}\n{}", cfg.hash(), cfg.to_toml());
    write_atomic(&run_dir.join(CONFIG_FILE), text.as_bytes())
}

/// Trains one mode on a dataset, optionally resuming from a checkpoint.
/// Fails before training when the dataset does not match `cfg`.
pub fn train_mode(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    run_dir: &Path,
    mode: TrainMode,
    resume: Option<&Path>,
) -> Result<Trainer> {
    dataset.check_config(cfg)?;
    archive_config(cfg, run_dir)?;
    let tc = cfg.train_config(mode);
    let data = TrainData::Measurements(dataset.measurements()?);
    let hash = cfg.hash();
    let mut trainer = match resume {
        Some(dir) => {
            let ck = Checkpoint::load(dir)?;
            if ck.sidecar.mode != mode.to_string() {
                return Err(Error::Config(format!(
                    "checkpoint is a {} run, not {mode}",
                    ck.sidecar.mode
                )));
            }
            Trainer::resume(&ck, &tc, data, &hash)?
        }
        None => Trainer::new(&cfg.model, &tc, data, &hash)?,
    };
    trainer.set_output(&mode_dir(run_dir, mode))?;
    trainer.run()?;
    Ok(trainer)
}

/// Loads a checkpoint's sampling generator (EMA weights when present).
pub fn load_sampler(dir: &Path) -> Result<(Checkpoint, GeneratorState<f32>)> {
    let ck = Checkpoint::load(dir)?;
    let mut gs = ck.generator()?;
    if let Some(ema) = ck.groups.get("ema") {
        gs.params = ema.clone();
    }
    Ok((ck, gs))
}

/// Draws `count` samples; latent `i` comes from its own stream, styled noise
/// from one stream per batch, so results do not depend on thread count.
pub fn sample_generator(gs: &GeneratorState<f32>, count: usize, batch: usize, seed: u64) -> Result<Vec<ObjectField>> {
    let mut out = Vec::with_capacity(count);
    for (b, start) in (0..count).step_by(batch.max(1)).enumerate() {
        out.extend(sample_batch(gs, start..(start + batch).min(count), b, seed)?);
    }
    Ok(out)
}

fn sample_batch(
    gs: &GeneratorState<f32>,
    range: Range<usize>,
    batch_index: usize,
    seed: u64,
) -> Result<Vec<ObjectField>> {
    let zseed = derive_seed(seed, "eval-latents");
    let nseed = derive_seed(seed, "eval-noise");
    let zs: Vec<LatentVector> = range
        .map(|i| LatentVector::sample(gs.latent_dim(), &mut stream(zseed, i as u64)))
        .collect();
    gs.sample_batch(&zs, &mut stream(nseed, batch_index as u64))
}

fn axis_label(axis: SliceAxis, dims: usize) -> String {
    if dims == 3 {
        axis.to_string()
    } else {
        "2d".into()
    }
}

fn axes_for(dims: usize) -> &'static [SliceAxis] {
    if dims == 3 {
        &SliceAxis::ALL
    } else {
        &SliceAxis::ALL[..1]
    }
}

/// Streaming statistics of one ensemble: slice-feature moments per axis,
/// noisy ROI vectors for the detection task and the residual spectrum.
/// Members are pushed in chunks and then dropped.
pub struct EnsembleSummary {
    pub count: usize,
    dims: usize,
    extractor: String,
    moments: Vec<(SliceAxis, FeatureMoments)>,
    snr: SnrAccumulator,
    spectrum: SpectrumAccumulator,
    rng: Stream,
}

impl EnsembleSummary {
    /// The task noise comes from a fixed stream, so every ensemble sees the
    /// same draws in the same order.
    pub fn new(cfg: &ExperimentConfig, shape: &[usize], signal: &SignalSpec) -> Result<Self> {
        let ex = extractor(&cfg.eval.extractor)?;
        let task = detection_task(cfg, shape, signal.amplitude);
        Ok(Self {
            count: 0,
            dims: shape.len(),
            extractor: cfg.eval.extractor.clone(),
            moments: axes_for(shape.len())
                .iter()
                .map(|&a| (a, FeatureMoments::new(ex.dim())))
                .collect(),
            snr: SnrAccumulator::new(&task, shape)?,
            spectrum: SpectrumAccumulator::new(shape),
            rng: stream(derive_seed(cfg.eval.seed, "eval-task-noise"), 0),
        })
    }

    pub fn push(&mut self, chunk: &[ObjectField]) -> Result<()> {
        let ex = extractor(&self.extractor)?;
        for (axis, m) in &mut self.moments {
            let feats = chunk
                .par_iter()
                .map(|f| slice_features(f, *axis, ex.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            m.push_batch(&feats.concat())?;
        }
        for f in chunk {
            self.snr.push(f, &mut self.rng)?;
            self.spectrum.push(f)?;
        }
        self.count += chunk.len();
        Ok(())
    }

    pub fn snr(&self) -> Result<f64> {
        Ok(self.snr.finish()?.snr)
    }

    /// Mean residual power above `high_band`·Nyquist.
    pub fn high_band_power(&self, high_band: f64) -> Result<f64> {
        Ok(self.spectrum.finish()?.band_power(high_band))
    }

    /// Slice FID against a reference summary, one entry per axis.
    pub fn fid(&self, reference: &EnsembleSummary) -> Result<Vec<AxisFid>> {
        if self.dims != reference.dims || self.extractor != reference.extractor {
            return Err(Error::param("summaries differ in dimensionality or extractor"));
        }
        let ex = extractor(&self.extractor)?;
        self.moments
            .iter()
            .zip(&reference.moments)
            .map(|((axis, a), (_, b))| {
                let r = fid_from_stats(a.stats()?, b.stats()?, (a.count(), b.count()), Some(*axis), ex.as_ref())?;
                Ok(AxisFid {
                    axis: axis_label(*axis, self.dims),
                    value: r.value,
                    warning: r.warning,
                })
            })
            .collect()
    }
}

/// Summary of an in-memory ensemble.
pub fn summarize_fields(
    cfg: &ExperimentConfig,
    fields: &[ObjectField],
    signal: &SignalSpec,
) -> Result<EnsembleSummary> {
    let first = fields.first().ok_or_else(|| Error::param("empty ensemble"))?;
    let mut s = EnsembleSummary::new(cfg, first.shape(), signal)?;
    for chunk in fields.chunks(cfg.eval.batch.max(1)) {
        s.push(chunk)?;
    }
    Ok(s)
}

/// Summary of `eval.samples` generator draws, identical to summarising
/// [`sample_generator`] output.
pub fn summarize_generator(
    cfg: &ExperimentConfig,
    gs: &GeneratorState<f32>,
    signal: &SignalSpec,
) -> Result<EnsembleSummary> {
    let (count, batch) = (cfg.eval.samples, cfg.eval.batch.max(1));
    let mut s = EnsembleSummary::new(cfg, &gs.output_shape(), signal)?;
    for (b, start) in (0..count).step_by(batch).enumerate() {
        s.push(&sample_batch(gs, start..(start + batch).min(count), b, cfg.eval.seed)?)?;
    }
    Ok(s)
}

/// Summary of `eval.samples` fresh draws from the configured object model,
/// normalised like the dataset. These are the ground-truth ensemble: they
/// are independent of the training objects and not limited by their count.
pub fn summarize_truth(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<EnsembleSummary> {
    let model = &cfg.objects.model;
    model.validate()?;
    let norm = dataset.manifest.normalization;
    let seed = derive_seed(cfg.eval.seed, "eval-truth");
    let (count, batch) = (cfg.eval.samples, cfg.eval.batch.max(1));
    let mut s = EnsembleSummary::new(cfg, &dataset.manifest.shape, &dataset.manifest.signal)?;
    for start in (0..count).step_by(batch) {
        let chunk = (start..(start + batch).min(count))
            .into_par_iter()
            .map(|i| Ok(norm.apply(&model.sample(&mut stream(seed, i as u64))?)))
            .collect::<Result<Vec<_>>>()?;
        s.push(&chunk)?;
    }
    Ok(s)
}

/// Slice FID against the ground truth, one entry per axis (one for 2-D).
pub fn fid_per_axis(samples: &[ObjectField], truth: &[ObjectField], extractor_name: &str) -> Result<Vec<AxisFid>> {
    let ex = extractor(extractor_name)?;
    let dims = truth.first().ok_or_else(|| Error::param("empty ensemble"))?.dims();
    axes_for(dims)
        .iter()
        .map(|&axis| {
            let r = slice_fid(samples, truth, axis, ex.as_ref())?;
            Ok(AxisFid {
                axis: axis_label(axis, dims),
                value: r.value,
                warning: r.warning,
            })
        })
        .collect()
}

/// Hotelling SNR of the configured task over an in-memory ensemble.
pub fn ensemble_snr(cfg: &ExperimentConfig, ensemble: &[ObjectField], signal: &SignalSpec) -> Result<f64> {
    let first = ensemble.first().ok_or_else(|| Error::param("empty ensemble"))?;
    let task = detection_task(cfg, first.shape(), signal.amplitude);
    let mut rng = stream(derive_seed(cfg.eval.seed, "eval-task-noise"), 0);
    Ok(snr_study(ensemble, &task, &mut rng)?.snr)
}

/// Mean residual power above `high_band`·Nyquist.
pub fn high_band_power(ensemble: &[ObjectField], high_band: f64) -> Result<f64> {
    Ok(noise_power_spectrum(ensemble)?.band_power(high_band))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFid {
    pub axis: String,
    pub value: f64,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub mode: TrainMode,
    pub arch: String,
    pub step: u64,
    pub checkpoint_hash: String,
    pub samples: usize,
    pub fid: Vec<AxisFid>,
    pub snr: f64,
    /// `|snr − ground-truth snr|`.
    pub snr_error: f64,
    pub high_band_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub samples: usize,
    pub snr: f64,
    pub high_band_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub config_hash: String,
    pub dataset_hash: String,
    pub dims: usize,
    pub extractor: String,
    pub signal: SignalSpec,
    pub task_noise_std: f64,
    pub ground_truth: GroundTruthRow,
    pub rows: Vec<ModelRow>,
}

impl Report {
    pub fn row(&self, mode: TrainMode) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
        let version = v.get("format_version").and_then(|x| x.as_u64());
        if version != Some(REPORT_VERSION as u64) {
            return Err(Error::Integrity(format!(
                "{}: unsupported report version {version:?}",
                path.display()
            )));
        }
        serde_json::from_value(v).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
    }

    /// Plain-text table: one row per model, FID columns per axis, then SNR.
    pub fn table(&self) -> String {
        let axes: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.fid.iter().map(|f| f.axis.as_str()).collect())
            .unwrap_or_default();
        let labels: Vec<String> = self.rows.iter().map(|r| format!("{} ({})", r.mode, r.arch)).collect();
        let w = labels.iter().map(|l| l.len()).chain([12]).max().unwrap_or(12);
        let mut s = String::new();
        let _ = write!(s, "{:<w$}", "model");
        for a in &axes {
            let _ = write!(s, " {:>12}", format!("FID {a}"));
        }
        let _ = writeln!(s, " {:>10} {:>12}", "SNR_HO", "HF power");
        for (r, label) in self.rows.iter().zip(&labels) {
            let _ = write!(s, "{label:<w$}");
            for f in &r.fid {
                let _ = write!(s, " {:>12.4}", f.value);
            }
            let _ = writeln!(s, " {:>10.4} {:>12.4e}", r.snr, r.high_band_power);
        }
        let _ = write!(s, "{:<w$}", "ground truth");
        for _ in &axes {
            let _ = write!(s, " {:>12}", "-");
        }
        let _ = writeln!(
            s,
            " {:>10.4} {:>12.4e}",
            self.ground_truth.snr, self.ground_truth.high_band_power
        );
        s
    }
}

/// Evaluates one checkpoint against the ground-truth summary.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    ckpt_dir: &Path,
    truth: &EnsembleSummary,
    signal: &SignalSpec,
) -> Result<ModelRow> {
    let (ck, gs) = load_sampler(ckpt_dir)?;
    if ck.sidecar.config_hash != cfg.hash() {
        return Err(Error::Integrity(format!(
            "checkpoint {} has config hash {}, expected {}",
            ckpt_dir.display(),
            ck.sidecar.config_hash,
            cfg.hash()
        )));
    }
    let mode = match ck.sidecar.mode.as_str() {
        "ambient" => TrainMode::Ambient,
        "baseline" => TrainMode::Baseline,
        other => return Err(Error::Integrity(format!("unknown checkpoint mode {other:?}"))),
    };
    let summary = summarize_generator(cfg, &gs, signal)?;
    let snr = summary.snr()?;
    Ok(ModelRow {
        mode,
        arch: ck.sidecar.arch.to_string(),
        step: ck.sidecar.step,
        checkpoint_hash: ck.sidecar.blob_sha256.clone(),
        samples: summary.count,
        fid: summary.fid(truth)?,
        snr,
        snr_error: (snr - truth.snr()?).abs(),
        high_band_power: summary.high_band_power(cfg.eval.high_band)?,
    })
}

/// Builds the report from the final checkpoints already in `run_dir`,
/// without training, and writes `report.json` and `report.txt`.
pub fn evaluate_run(cfg: &ExperimentConfig, dataset: &Dataset, run_dir: &Path) -> Result<Report> {
    dataset.check_config(cfg)?;
    let signal = dataset.manifest.signal.clone();
    let truth = summarize_truth(cfg, dataset)?;
    let ground_truth = GroundTruthRow {
        samples: truth.count,
        snr: truth.snr()?,
        high_band_power: truth.high_band_power(cfg.eval.high_band)?,
    };
    let rows = cfg
        .eval
        .modes
        .iter()
        .map(|&m| evaluate_checkpoint(cfg, &final_checkpoint(run_dir, m), &truth, &signal))
        .collect::<Result<Vec<_>>>()?;
    let report = Report {
        format_version: REPORT_VERSION,
        config_hash: cfg.hash(),
        dataset_hash: cfg.dataset_hash(),
        dims: cfg.model.dims,
        extractor: cfg.eval.extractor.clone(),
        signal,
        task_noise_std: cfg.task_noise_std(),
        ground_truth,
        rows,
    };
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let json = serde_json::to_vec_pretty(&report).expect("report serialises");
    write_atomic(&run_dir.join(REPORT_FILE), &json)?;
    write_atomic(&run_dir.join("report.txt"), report.table().as_bytes())?;
    Ok(report)
}

/// Trains every configured mode on the dataset, then evaluates.
pub fn run_pipeline(cfg: &ExperimentConfig, dataset_dir: &Path, run_dir: &Path) -> Result<Report> {
    let dataset = Dataset::open(dataset_dir)?;
    dataset.check_config(cfg)?;
    for &mode in &cfg.eval.modes {
        let dir = mode_dir(run_dir, mode);
        // A rerun starts from a clean log.
        let log = dir.join(METRICS_FILE);
        if log.exists() {
            fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
        }
        train_mode(cfg, &dataset, run_dir, mode, None)?;
    }
    evaluate_run(cfg, &dataset, run_dir)
}
