//! Model container: `CACKPT01`, a little-endian u64 index length, a JSON
//! index, then every tensor as little-endian f32 in index order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ActionClass, InteractionClass};
use crate::encoders::{CattleActModel, EncoderConfig, Normalization};
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CACKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOrder {
    pub action: Vec<String>,
    pub interaction: Vec<String>,
}

impl ClassOrder {
    pub fn current() -> Self {
        Self {
            action: ActionClass::NAMES.iter().map(|s| s.to_string()).collect(),
            interaction: InteractionClass::NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset within the data section.
    pub offset: u64,
    /// Number of f32 values.
    pub len: u64,
}

/// Everything stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `pretrain` or `joint`.
    pub stage: String,
    pub step: u64,
    /// Training config echo.
    pub train_config: serde_json::Value,
    pub metrics: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Index {
    config: EncoderConfig,
    class_order: ClassOrder,
    d: usize,
    normalization: Normalization,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: CattleActModel,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(model: CattleActModel, meta: CheckpointMeta) -> Self {
        Self { model, meta }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        for (_, name, value) in self.model.params.iter() {
            let (r, c) = value.dim();
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: [r, c],
                offset: data.len() as u64,
                len: value.len() as u64,
            });
            for x in value.iter() {
                data.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        let index = Index {
            config: self.model.config.clone(),
            class_order: ClassOrder::current(),
            d: self.model.d(),
            normalization: self.model.normalization,
            meta: self.meta.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&index)?;
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CheckpointMismatch(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a cattleact checkpoint (bad magic)"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes.get(16..16 + n).ok_or_else(|| corrupt("truncated index"))?;
        let index: Index = serde_json::from_slice(json)?;
        if index.class_order != ClassOrder::current() {
            return Err(Error::CheckpointMismatch(format!(
                "class order {:?} differs from {:?}",
                index.class_order,
                ClassOrder::current()
            )));
        }
        if index.d != index.config.d {
            return Err(corrupt("index D disagrees with config D"));
        }
        let data = &bytes[16 + n..];
        let mut params = ParamStore::new();
        for t in &index.tensors {
            let start = t.offset as usize;
            let end = start + 4 * t.len as usize;
            if t.shape[0] * t.shape[1] != t.len as usize {
                return Err(corrupt("tensor shape and length disagree"));
            }
            let raw = data.get(start..end).ok_or_else(|| corrupt("truncated tensor data"))?;
            let values: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            params.add(
                t.name.clone(),
                Array2::from_shape_vec((t.shape[0], t.shape[1]), values).expect("checked"),
            );
        }
        let model = CattleActModel::from_parts(index.config, params, index.normalization)?;
        Ok(Self {
            model,
            meta: index.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and insists on embedding dimension `d`.
    pub fn load_expecting(path: &Path, d: usize) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.model.d() != d {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint D = {}, expected {d}",
                ck.model.d()
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn small() -> CattleActModel {
        let cfg = EncoderConfig {
            input_size: 32,
            interaction_input_size: 40,
            d: 8,
            n_attention_heads: 2,
            token_dim: 4,
            conv_kernel: 32,
            conv_stride: 8,
            conv_channels: 2,
            seed: 1,
            ..EncoderConfig::default()
        };
        CattleActModel::new(cfg, Normalization { mean: [0.3, 0.4, 0.5], std: [0.2, 0.21, 0.22] }).unwrap()
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            stage: "joint".into(),
            step: 17,
            train_config: serde_json::json!({"lr": 0.001}),
            metrics: serde_json::json!({"val_macro_f1": 0.8125}),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = Checkpoint::new(small(), meta());
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.meta, ck.meta);
        let img = Image::filled(30, 30, [0.2, 0.7, 0.4]);
        assert_eq!(
            back.model.encode_action(&img).unwrap(),
            ck.model.encode_action(&img).unwrap()
        );
    }

    #[test]
    fn mismatches_fail_loudly() {
        let ck = Checkpoint::new(small(), meta());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        ck.save(&p).unwrap();
        assert!(matches!(Checkpoint::load_expecting(&p, 256), Err(Error::CheckpointMismatch(_))));
        assert!(Checkpoint::load_expecting(&p, 8).is_ok());

        let text = String::from_utf8_lossy(&ck.to_bytes().unwrap()).replace("\"grazing\"", "\"walking\"");
        assert!(matches!(Checkpoint::from_bytes(text.as_bytes()), Err(Error::CheckpointMismatch(_))));
        assert!(matches!(Checkpoint::from_bytes(b"garbage!garbage!"), Err(Error::CheckpointMismatch(_))));
        assert!(matches!(Checkpoint::load(&dir.path().join("none")), Err(Error::MissingFile(_))));
    }
}
