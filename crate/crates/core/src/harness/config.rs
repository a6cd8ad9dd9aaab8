use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging::ImagingConfig;
use crate::nets::NetConfig;
use crate::object_models::ObjectModel;
use crate::observer::{DEFAULT_RIDGE_SCALE, DEFAULT_ROI_SIDE};
use crate::training::{TrainConfig, TrainMode};
use crate::{Error, Result};

/// Detection-task settings. The amplitude is calibrated at simulation time
/// when left unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub radius: f64,
    pub amplitude: Option<f64>,
    /// Ground-truth Hotelling SNR the calibrated amplitude aims for.
    pub target_snr: f64,
    pub roi_side: usize,
    /// Image-domain noise std of the task; defaults to the imaging noise.
    pub noise_std: Option<f64>,
    pub ridge_scale: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            radius: 2.0,
            amplitude: None,
            target_snr: 2.0,
            roi_side: DEFAULT_ROI_SIDE,
            noise_std: None,
            ridge_scale: DEFAULT_RIDGE_SCALE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectsConfig {
    pub model: ObjectModel,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rescale the ensemble to [0, 1] before imaging.
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default = "yes")]
    pub emit_objects: bool,
    #[serde(default = "yes")]
    pub emit_recon: bool,
    #[serde(default)]
    pub signal: SignalConfig,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Generated samples per model.
    pub samples: usize,
    pub extractor: String,
    pub seed: u64,
    pub batch: usize,
    pub modes: Vec<TrainMode>,
    /// Lower edge of the high-frequency band as a fraction of Nyquist.
    pub high_band: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            extractor: "pixel16".into(),
            seed: 0,
            batch: 64,
            modes: vec![TrainMode::Baseline, TrainMode::Ambient],
            high_band: 0.75,
        }
    }
}

/// One file that determines a whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub objects: ObjectsConfig,
    pub imaging: ImagingConfig,
    #[serde(default)]
    pub model: NetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn sha256_json(v: &serde_json::Value) -> String {
    // serde_json maps are sorted, so this is canonical.
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `key=value` overrides (dotted keys, TOML
    /// literal values; bare words are taken as strings).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.objects;
        o.model.validate().map_err(config_err)?;
        if o.count == 0 {
            return Err(Error::Config("objects.count must be positive".into()));
        }
        let shape = o.model.field_shape();
        if shape.len() != self.imaging.dims || self.model.dims != self.imaging.dims {
            return Err(Error::Config(format!(
                "objects are {}-D, imaging {}-D, model {}-D",
                shape.len(),
                self.imaging.dims,
                self.model.dims
            )));
        }
        if shape.iter().any(|&s| s != self.model.resolution) {
            return Err(Error::Config(format!(
                "object shape {shape:?} does not match model resolution {}",
                self.model.resolution
            )));
        }
        let s = &o.signal;
        if !(s.radius > 0.0 && s.target_snr > 0.0 && s.roi_side > 0 && s.ridge_scale >= 0.0) {
            return Err(Error::Config(
                "signal radius, target_snr and roi_side must be positive".into(),
            ));
        }
        if s.roi_side > self.model.resolution {
            return Err(Error::Config("roi_side exceeds the field".into()));
        }
        if matches!(s.amplitude, Some(a) if !(a >= 0.0)) || matches!(s.noise_std, Some(n) if !(n >= 0.0)) {
            return Err(Error::Config("signal amplitude and noise_std must be >= 0".into()));
        }
        let e = &self.eval;
        if e.samples < 2 || e.batch == 0 || !(0.0..1.0).contains(&e.high_band) {
            return Err(Error::Config(
                "eval needs samples >= 2, batch > 0, high_band in [0, 1)".into(),
            ));
        }
        crate::observer::extractor(&e.extractor).map_err(config_err)?;
        self.train_config(self.train.mode).validate(&self.model)
    }

    /// Training settings for `mode` with the imaging operator filled in.
    pub fn train_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            mode,
            imaging: self.imaging.clone(),
            ..self.train.clone()
        }
    }

    /// Task noise in image units.
    pub fn task_noise_std(&self) -> f64 {
        self.objects.signal.noise_std.unwrap_or(self.imaging.noise_std)
    }

    /// Hash of everything that determines a dataset.
    pub fn dataset_hash(&self) -> String {
        sha256_json(&serde_json::json!({ "objects": self.objects, "imaging": self.imaging }))
    }

    /// Hash of the whole configuration. The training mode and the step cap
    /// are left out: one config drives both modes, and a run may be resumed
    /// with a later stopping point.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.train.mode = TrainMode::Ambient;
        c.train.max_steps = None;
        sha256_json(&serde_json::to_value(&c).expect("config serialises"))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").expect("probe key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c=value` in a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
