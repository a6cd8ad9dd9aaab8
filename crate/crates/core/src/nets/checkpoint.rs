//! On-disk checkpoints: a JSON sidecar describing every stored tensor plus a
//! little-endian `f32` blob. The sidecar is parsed and checked (format
//! version, blob length, blob hash) before any tensor is decoded.

use std::fs;
use std::path::{Path, PathBuf};

use ambientsom_tensor::Tensor;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Arch, DiscriminatorState, GeneratorState, NetConfig, Param, ParamStore};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SIDECAR_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "params.f32";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub scale: f64,
    pub trainable: bool,
    /// Element offset into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub format_version: u32,
    /// Training mode (`ambient` / `baseline`) or empty for bare networks.
    pub mode: String,
    pub arch: Arch,
    pub dims: usize,
    pub latent_dim: usize,
    pub stage: usize,
    pub alpha: f64,
    pub channels: Vec<usize>,
    pub step: u64,
    pub config_hash: String,
    pub net: NetConfig,
    /// Free-form extras (optimizer settings, images seen, …).
    pub extra: serde_json::Value,
    /// Named parameter groups, e.g. `generator`, `discriminator`, `adam.m.generator`.
    pub groups: IndexMap<String, Vec<TensorEntry>>,
    pub blob_elements: usize,
    pub blob_sha256: String,
}

/// A decoded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub sidecar: Sidecar,
    pub groups: IndexMap<String, ParamStore<f32>>,
}

impl Checkpoint {
    pub fn new(
        gs: &GeneratorState<f32>,
        ds: &DiscriminatorState<f32>,
        mode: &str,
        step: u64,
        config_hash: &str,
    ) -> Self {
        let mut groups = IndexMap::new();
        groups.insert("generator".to_string(), gs.params.clone());
        groups.insert("discriminator".to_string(), ds.params.clone());
        Self {
            sidecar: Sidecar {
                format_version: FORMAT_VERSION,
                mode: mode.to_string(),
                arch: gs.config.arch,
                dims: gs.config.dims,
                latent_dim: gs.config.latent_dim,
                stage: gs.stage,
                alpha: gs.alpha,
                channels: gs.config.channel_schedule(),
                step,
                config_hash: config_hash.to_string(),
                net: gs.config.clone(),
                extra: serde_json::Value::Null,
                groups: IndexMap::new(),
                blob_elements: 0,
                blob_sha256: String::new(),
            },
            groups,
        }
    }

    pub fn group(&self, name: &str) -> Result<&ParamStore<f32>> {
        self.groups
            .get(name)
            .ok_or_else(|| Error::Integrity(format!("checkpoint has no parameter group {name}")))
    }

    pub fn generator(&self) -> Result<GeneratorState<f32>> {
        Ok(GeneratorState {
            config: self.sidecar.net.clone(),
            params: self.group("generator")?.clone(),
            stage: self.sidecar.stage,
            alpha: self.sidecar.alpha,
        })
    }

    pub fn discriminator(&self) -> Result<DiscriminatorState<f32>> {
        Ok(DiscriminatorState {
            config: self.sidecar.net.clone(),
            params: self.group("discriminator")?.clone(),
            stage: self.sidecar.stage,
            alpha: self.sidecar.alpha,
        })
    }

    /// Writes `checkpoint.json` and `params.f32` into `dir` (created if
    /// needed). Files are written to temporaries and renamed into place.
    pub fn save(&self, dir: &Path) -> Result<Sidecar> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut sidecar = self.sidecar.clone();
        sidecar.groups.clear();
        let mut blob = Vec::new();
        let mut offset = 0;
        for (group, store) in &self.groups {
            let mut entries = Vec::new();
            for (name, p) in store.iter() {
                entries.push(TensorEntry {
                    name: name.clone(),
                    shape: p.value.shape().to_vec(),
                    scale: p.scale,
                    trainable: p.trainable,
                    offset,
                });
                offset += p.value.numel();
                for v in p.value.data() {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
            sidecar.groups.insert(group.clone(), entries);
        }
        sidecar.blob_elements = offset;
        sidecar.blob_sha256 = hex::encode(Sha256::digest(&blob));
        write_atomic(&dir.join(BLOB_FILE), &blob)?;
        let text = serde_json::to_vec_pretty(&sidecar).expect("sidecar serialises");
        write_atomic(&dir.join(SIDECAR_FILE), &text)?;
        Ok(sidecar)
    }

    /// Reads only the sidecar.
    pub fn read_sidecar(dir: &Path) -> Result<Sidecar> {
        let path = dir.join(SIDECAR_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_slice(&text)
            .map_err(|e| Error::Integrity(format!("{}: malformed sidecar: {e}", path.display())))?;
        if sidecar.format_version != FORMAT_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported checkpoint format version {}",
                sidecar.format_version
            )));
        }
        sidecar.net.validate()?;
        if sidecar.net.arch != sidecar.arch
            || sidecar.net.dims != sidecar.dims
            || sidecar.net.latent_dim != sidecar.latent_dim
            || sidecar.net.channel_schedule() != sidecar.channels
        {
            return Err(Error::Integrity(
                "sidecar fields disagree with its network config".into(),
            ));
        }
        if sidecar.stage > sidecar.net.levels() || !(0.0..=1.0).contains(&sidecar.alpha) {
            return Err(Error::Integrity(format!(
                "stage {} / alpha {} out of range",
                sidecar.stage, sidecar.alpha
            )));
        }
        Ok(sidecar)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let sidecar = Self::read_sidecar(dir)?;
        let path = dir.join(BLOB_FILE);
        let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if blob.len() != sidecar.blob_elements * 4 {
            return Err(Error::Integrity(format!(
                "blob holds {} bytes, sidecar expects {}",
                blob.len(),
                sidecar.blob_elements * 4
            )));
        }
        if hex::encode(Sha256::digest(&blob)) != sidecar.blob_sha256 {
            return Err(Error::Integrity(format!("{}: hash mismatch", path.display())));
        }
        let values: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut groups = IndexMap::new();
        for (group, entries) in &sidecar.groups {
            let mut store = ParamStore::new();
            for e in entries {
                let n: usize = e.shape.iter().product();
                let end = e.offset + n;
                if end > values.len() {
                    return Err(Error::Integrity(format!("tensor {} overruns the blob", e.name)));
                }
                store.insert(
                    e.name.clone(),
                    Param {
                        value: Tensor::from_vec(e.shape.clone(), values[e.offset..end].to_vec()),
                        scale: e.scale,
                        trainable: e.trainable,
                    },
                );
            }
            groups.insert(group.clone(), store);
        }
        Ok(Self { sidecar, groups })
    }
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    );
    tmp.set_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
