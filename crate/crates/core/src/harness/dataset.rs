//! Dataset directories: a JSON manifest per domain plus one little-endian
//! `f32` payload of concatenated samples.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ObjectsConfig};
use crate::imaging::{measure, reconstruct, ImagingConfig, Measurement};
use crate::nets::checkpoint::write_atomic;
use crate::object_models::{Normalization, SignalSpec};
use crate::observer::{snr_study, DetectionTask, RoiSpec};
use crate::rng::{derive_seed, stream};
use crate::{Error, ObjectField, ReconImage, Result};

/// Major version of the manifest schema; readers reject anything else.
pub const MANIFEST_VERSION: u32 = 1;
/// The primary (measurement) manifest of a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Object,
    Measurement,
    Recon,
}

impl Domain {
    fn files(self) -> (&'static str, &'static str) {
        match self {
            Domain::Measurement => (MANIFEST_FILE, "measurements.bin"),
            Domain::Object => ("objects.json", "objects.bin"),
            Domain::Recon => ("recon.json", "recon.bin"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dtype {
    Float32,
    /// Interleaved real/imaginary `f32` pairs.
    ComplexAsFloat32Pairs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub domain: Domain,
    pub dims: usize,
    pub shape: Vec<usize>,
    pub count: usize,
    pub dtype: Dtype,
    pub endianness: String,
    /// Maps raw object values `v` to stored values `v·scale + offset`.
    pub normalization: Normalization,
    pub objects: ObjectsConfig,
    /// `noise_std` is the std of each real and imaginary k-space component.
    pub imaging: ImagingConfig,
    /// The detection task signal with its calibrated amplitude.
    pub signal: SignalSpec,
    pub seed: u64,
    pub payload: String,
    /// SHA-256 of the payload bytes.
    pub content_hash: String,
    pub config_hash: String,
    pub dataset_hash: String,
    /// Manifests of the other domains emitted alongside this one.
    pub linked: BTreeMap<Domain, String>,
}

impl DatasetManifest {
    fn element_bytes(&self) -> usize {
        match self.dtype {
            Dtype::Float32 => 4,
            Dtype::ComplexAsFloat32Pairs => 8,
        }
    }

    pub fn payload_bytes(&self) -> usize {
        self.count * self.shape.iter().product::<usize>() * self.element_bytes()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
        let version = v.get("format_version").and_then(|x| x.as_u64());
        if version != Some(MANIFEST_VERSION as u64) {
            return Err(Error::Integrity(format!(
                "{}: unsupported manifest version {version:?}",
                path.display()
            )));
        }
        serde_json::from_value(v).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
    }
}

fn encode_real<'a>(fields: impl Iterator<Item = &'a ObjectField>) -> Vec<u8> {
    fields
        .flat_map(|f| f.values().iter())
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

fn encode_complex(ms: &[Measurement]) -> Vec<u8> {
    ms.iter()
        .flat_map(|m| m.values().iter())
        .flat_map(|c| {
            let mut b = [0u8; 8];
            b[..4].copy_from_slice(&(c.re as f32).to_le_bytes());
            b[4..].copy_from_slice(&(c.im as f32).to_le_bytes());
            b
        })
        .collect()
}

fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect()
}

/// Calibrates the signal amplitude so the ground-truth Hotelling SNR equals
/// the target. SNR is linear in the amplitude for a fixed covariance.
pub fn calibrate_signal(cfg: &ExperimentConfig, objects: &[ObjectField]) -> Result<SignalSpec> {
    let task = detection_task(cfg, objects[0].shape(), 1.0);
    let amplitude = match cfg.objects.signal.amplitude {
        Some(a) => a,
        None => {
            let mut rng = stream(derive_seed(cfg.objects.seed, "calibration"), 0);
            let unit = snr_study(objects, &task, &mut rng)?.snr;
            if !(unit > 0.0 && unit.is_finite()) {
                return Err(Error::Numerical(format!("unit-amplitude SNR is {unit}")));
            }
            cfg.objects.signal.target_snr / unit
        }
    };
    Ok(SignalSpec {
        amplitude,
        ..task.signal
    })
}

/// The configured detection task, centred in a field of `shape`.
pub fn detection_task(cfg: &ExperimentConfig, shape: &[usize], amplitude: f64) -> DetectionTask {
    let s = &cfg.objects.signal;
    let center: Vec<usize> = shape.iter().map(|n| n / 2).collect();
    DetectionTask {
        signal: SignalSpec {
            center: center.clone(),
            radius: s.radius,
            amplitude,
        },
        roi: RoiSpec::cube(center, s.roi_side),
        noise_std: cfg.task_noise_std(),
        ridge_scale: s.ridge_scale,
    }
}

/// Everything [`simulate_dataset`] computed, kept in memory.
pub struct SimulatedDataset {
    pub manifest: DatasetManifest,
    pub objects: Vec<ObjectField>,
    pub measurements: Vec<Measurement>,
    pub recons: Vec<ReconImage>,
}

/// Samples objects, normalises them, measures and reconstructs, then writes
/// the measurement manifest and payload into `dir`, plus objects and recons
/// when enabled.
pub fn simulate_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<SimulatedDataset> {
    cfg.validate()?;
    let o = &cfg.objects;
    let raw = o.model.sample_ensemble(o.count, derive_seed(o.seed, "objects"))?;
    let normalization = if o.normalize {
        Normalization::fit_unit_range(&raw)
    } else {
        Normalization::default()
    };
    let objects: Vec<ObjectField> = raw.iter().map(|f| normalization.apply(f)).collect();
    let noise_seed = derive_seed(o.seed, "noise");
    let measurements = objects
        .par_iter()
        .enumerate()
        .map(|(i, f)| measure(f, &cfg.imaging, &mut stream(noise_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let recons: Vec<ReconImage> = measurements.par_iter().map(reconstruct).collect();
    let signal = calibrate_signal(cfg, &objects)?;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut emitted = vec![(Domain::Measurement, encode_complex(&measurements))];
    if o.emit_objects {
        emitted.push((Domain::Object, encode_real(objects.iter())));
    }
    if o.emit_recon {
        emitted.push((Domain::Recon, encode_real(recons.iter().map(|r| &r.0))));
    }
    let linked: BTreeMap<Domain, String> = emitted.iter().map(|(d, _)| (*d, d.files().0.to_string())).collect();
    let mut primary = None;
    for (domain, bytes) in emitted {
        let (manifest_file, payload_file) = domain.files();
        let manifest = DatasetManifest {
            format_version: MANIFEST_VERSION,
            domain,
            dims: cfg.imaging.dims,
            shape: o.model.field_shape().to_vec(),
            count: o.count,
            dtype: if domain == Domain::Measurement {
                Dtype::ComplexAsFloat32Pairs
            } else {
                Dtype::Float32
            },
            endianness: "little".into(),
            normalization,
            objects: o.clone(),
            imaging: cfg.imaging.clone(),
            signal: signal.clone(),
            seed: o.seed,
            payload: payload_file.into(),
            content_hash: hex::encode(Sha256::digest(&bytes)),
            config_hash: cfg.hash(),
            dataset_hash: cfg.dataset_hash(),
            linked: linked
                .iter()
                .filter(|(d, _)| **d != domain)
                .map(|(d, f)| (*d, f.clone()))
                .collect(),
        };
        debug_assert_eq!(bytes.len(), manifest.payload_bytes());
        write_atomic(&dir.join(payload_file), &bytes)?;
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
        write_atomic(&dir.join(manifest_file), &json)?;
        if domain == Domain::Measurement {
            primary = Some(manifest);
        }
    }
    Ok(SimulatedDataset {
        manifest: primary.expect("measurement manifest is always written"),
        objects,
        measurements,
        recons,
    })
}

/// A dataset directory opened through its primary manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: DatasetManifest::read(&dir.join(MANIFEST_FILE))?,
        })
    }

    /// Fails unless the dataset was generated from `cfg`'s object and
    /// imaging sections.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        let want = cfg.dataset_hash();
        if self.manifest.dataset_hash != want {
            return Err(Error::Integrity(format!(
                "dataset {} was generated from a different configuration (hash {} vs {want})",
                self.dir.display(),
                self.manifest.dataset_hash
            )));
        }
        Ok(())
    }

    pub fn domain_manifest(&self, domain: Domain) -> Result<DatasetManifest> {
        if domain == self.manifest.domain {
            return Ok(self.manifest.clone());
        }
        let file = self
            .manifest
            .linked
            .get(&domain)
            .ok_or_else(|| Error::Integrity(format!("dataset {} has no {domain:?} payload", self.dir.display())))?;
        let m = DatasetManifest::read(&self.dir.join(file))?;
        if m.domain != domain || m.dataset_hash != self.manifest.dataset_hash {
            return Err(Error::Integrity(format!("{file} does not belong to this dataset")));
        }
        Ok(m)
    }

    /// Reads and verifies a payload (length and hash).
    pub fn payload(&self, domain: Domain) -> Result<(DatasetManifest, Vec<u8>)> {
        let m = self.domain_manifest(domain)?;
        let path = self.dir.join(&m.payload);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != m.payload_bytes() {
            return Err(Error::Integrity(format!(
                "{}: {} bytes, manifest implies {}",
                path.display(),
                bytes.len(),
                m.payload_bytes()
            )));
        }
        let hash = hex::encode(Sha256::digest(&bytes));
        if hash != m.content_hash {
            return Err(Error::Integrity(format!("{}: content hash mismatch", path.display())));
        }
        Ok((m, bytes))
    }

    fn real_fields(&self, domain: Domain) -> Result<Vec<ObjectField>> {
        let (m, bytes) = self.payload(domain)?;
        let per: usize = m.shape.iter().product();
        decode_f32(&bytes)
            .chunks_exact(per)
            .map(|c| ObjectField::new(m.shape.clone(), c.to_vec()))
            .collect()
    }

    /// Normalised ground-truth objects.
    pub fn objects(&self) -> Result<Vec<ObjectField>> {
        self.real_fields(Domain::Object)
    }

    pub fn recons(&self) -> Result<Vec<ReconImage>> {
        Ok(self.real_fields(Domain::Recon)?.into_iter().map(ReconImage).collect())
    }

    pub fn measurements(&self) -> Result<Vec<Measurement>> {
        let (m, bytes) = self.payload(Domain::Measurement)?;
        let per: usize = m.shape.iter().product();
        decode_f32(&bytes)
            .chunks_exact(2 * per)
            .map(|c| {
                let values = c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                Measurement::new(m.shape.clone(), values)
            })
            .collect()
    }
}
