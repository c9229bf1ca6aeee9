//! A complete learned style: appearance networks plus environment lighting,
//! with a flat parameter view and a binary checkpoint format.
//!
//! Checkpoint layout (little-endian):
//! `magic[8] | version u32 | sha256(config)[32] | config_len u64 | config
//! (TOML) | 4 x (len u64 | f64 values)` where the four arrays are the SVBRDF
//! encoding matrix, the normal encoding matrix, the network parameters and
//! the raw environment parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::appearance::{Appearance, AppearanceConfig, PositionalEncoding, NORMAL_INPUTS};
use crate::lighting::{init_envmap, EnvironmentMap, LightingError, DEFAULT_LOBES, DEFAULT_TOTAL_ENERGY, PARAMS_PER_LOBE};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SGSTYLE\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a style checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint config hash mismatch")]
    HashMismatch,
    #[error("checkpoint config: {0}")]
    Config(String),
    #[error("checkpoint arrays do not match the stored config")]
    Layout,
    #[error(transparent)]
    Lighting(#[from] LightingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub lobes: usize,
    pub initial_energy: f64,
    pub appearance: AppearanceConfig,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            lobes: DEFAULT_LOBES,
            initial_energy: DEFAULT_TOTAL_ENERGY,
            appearance: AppearanceConfig::default(),
        }
    }
}

/// Named subset of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamClass {
    pub name: String,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Style {
    pub appearance: Appearance,
    pub env: EnvironmentMap,
}

impl Style {
    pub fn new<R: Rng + ?Sized>(config: &StyleConfig, rng: &mut R) -> Result<Self, LightingError> {
        let appearance = Appearance::new(config.appearance, rng);
        let env = init_envmap(config.lobes, config.initial_energy, rng)?;
        Ok(Self { appearance, env })
    }

    pub fn config(&self) -> StyleConfig {
        StyleConfig {
            lobes: self.env.lobe_count(),
            initial_energy: DEFAULT_TOTAL_ENERGY,
            appearance: *self.appearance.config(),
        }
    }

    /// Index of the first environment parameter in the flat layout.
    pub fn env_offset(&self) -> usize {
        self.appearance.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.appearance.param_count() + self.env.raw().len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.appearance.params();
        p.extend_from_slice(self.env.raw());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let split = self.env_offset();
        self.appearance.set_params(&params[..split]);
        self.env.raw_mut().copy_from_slice(&params[split..]);
    }

    /// Network blocks followed by light axes, sharpness and amplitudes.
    pub fn param_classes(&self) -> Vec<ParamClass> {
        let mut classes: Vec<ParamClass> = self
            .appearance
            .param_blocks()
            .into_iter()
            .map(|b| ParamClass {
                name: b.name.to_string(),
                indices: b.range.collect(),
            })
            .collect();
        let off = self.env_offset();
        for (name, fields) in [("light_axis", 0..3), ("light_sharpness", 3..4), ("light_amplitude", 4..7)] {
            let indices = (0..self.env.lobe_count())
                .flat_map(|k| fields.clone().map(move |f| off + k * PARAMS_PER_LOBE + f))
                .collect();
            classes.push(ParamClass {
                name: name.to_string(),
                indices,
            });
        }
        classes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = toml::to_string(&self.config()).expect("style config serializes");
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(config.as_bytes()));
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        let arrays: [&[f64]; 4] = [
            self.appearance.brdf_encoding().matrix(),
            self.appearance.normal_encoding().matrix(),
            &self.appearance.params(),
            self.env.raw(),
        ];
        for a in arrays {
            out.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let len = read_u64(&mut r)? as usize;
        if len > r.len() {
            return Err(CheckpointError::Layout);
        }
        let (config_bytes, rest) = r.split_at(len);
        r = rest;
        if Sha256::digest(config_bytes).as_slice() != hash {
            return Err(CheckpointError::HashMismatch);
        }
        let text = std::str::from_utf8(config_bytes).map_err(|e| CheckpointError::Config(e.to_string()))?;
        let config: StyleConfig = toml::from_str(text).map_err(|e| CheckpointError::Config(e.to_string()))?;
        let mut arrays = Vec::with_capacity(4);
        for _ in 0..4 {
            let n = read_u64(&mut r)? as usize;
            if n.checked_mul(8).map_or(true, |b| b > r.len()) {
                return Err(CheckpointError::Layout);
            }
            let vals: Vec<f64> = r[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            r = &r[n * 8..];
            arrays.push(vals);
        }
        let env_raw = arrays.pop().expect("four arrays");
        let params = arrays.pop().expect("four arrays");
        let normal_m = arrays.pop().expect("four arrays");
        let brdf_m = arrays.pop().expect("four arrays");
        let encoding = |dim: usize, m: Vec<f64>| {
            if m.is_empty() {
                Ok(PositionalEncoding::identity(dim))
            } else if m.len() % dim == 0 {
                Ok(PositionalEncoding::from_matrix(dim, m))
            } else {
                Err(CheckpointError::Layout)
            }
        };
        let brdf_pe = encoding(3, brdf_m)?;
        let normal_pe = encoding(NORMAL_INPUTS, normal_m)?;
        let probe =
            Appearance::expected_param_count(&config.appearance, brdf_pe.output_dim(), normal_pe.output_dim());
        if probe != params.len() || env_raw.len() != config.lobes * PARAMS_PER_LOBE {
            return Err(CheckpointError::Layout);
        }
        let appearance = Appearance::from_parts(config.appearance, brdf_pe, normal_pe, &params);
        let env = EnvironmentMap::from_raw(env_raw)?;
        Ok(Self { appearance, env })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::EncodingConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> StyleConfig {
        StyleConfig {
            lobes: 3,
            appearance: AppearanceConfig {
                hidden_width: 8,
                brdf_encoding: EncodingConfig::gaussian(4, 2.0),
                normal_encoding: EncodingConfig::disabled(),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let style = Style::new(&small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        style.save(&path).unwrap();
        let back = Style::load(&path).unwrap();
        assert_eq!(back, style);
        let (a, b) = (style.params(), back.params());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back.to_bytes(), style.to_bytes());
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let style = Style::new(&small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let bytes = style.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Style::from_bytes(&bad), Err(CheckpointError::BadMagic)));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Style::from_bytes(&bad), Err(CheckpointError::Version(9))));
        let mut bad = bytes.clone();
        bad[60] ^= 1;
        assert!(matches!(Style::from_bytes(&bad), Err(CheckpointError::HashMismatch)));
        assert!(Style::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn param_classes_partition_the_layout() {
        let style = Style::new(&small(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut all: Vec<usize> = style.param_classes().into_iter().flat_map(|c| c.indices).collect();
        all.sort_unstable();
        assert_eq!(all, (0..style.param_count()).collect::<Vec<_>>());
    }
}
