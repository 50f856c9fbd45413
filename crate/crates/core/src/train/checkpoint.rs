//! Single-file checkpoint.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "RGCK"
//!      4     2  version (1)
//!      6     1  tag (0 = best, 1 = last)
//!      7     1  reserved (0)
//!      8     4  metadata length in bytes
//!     12     4  tensor count (3 × parameters: values, first and second moments)
//!     16     …  metadata JSON
//!      …     …  tensors, each: rank u32, dims u64…, f64 values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ChannelNormalizer;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{ByteReader, Tensor};
use crate::wiring::Wiring;

use super::config::TrainConfig;
use super::optim::{Adam, AdamScalars, PlateauScheduler};

pub const MAGIC: &[u8; 4] = b"RGCK";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointTag {
    Best,
    Last,
}

impl CheckpointTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckpointTag::Best => "best",
            CheckpointTag::Last => "last",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub outputs: usize,
    pub normalizer: ChannelNormalizer,
    pub wiring: Option<Wiring>,
    pub optimizer: AdamScalars,
    pub scheduler: PlateauScheduler,
    /// Validation count at which the snapshot was taken.
    pub validation: usize,
    /// Validation ρ of the snapshot; absent if it was not finite.
    pub val_rho: Option<f64>,
    pub param_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: CheckpointTag,
    pub meta: CheckpointMeta,
    pub params: Vec<Tensor>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

pub struct Snapshot<'a> {
    pub config: &'a TrainConfig,
    pub model: &'a Model,
    pub adam: &'a Adam,
    pub scheduler: &'a PlateauScheduler,
    pub normalizer: &'a ChannelNormalizer,
    pub validation: usize,
    pub val_rho: f64,
}

impl Checkpoint {
    pub fn capture(tag: CheckpointTag, s: Snapshot<'_>) -> Self {
        let entries = s.model.params.entries();
        Self {
            tag,
            meta: CheckpointMeta {
                config: s.config.clone(),
                outputs: s.model.outputs(),
                normalizer: s.normalizer.clone(),
                wiring: s.model.wiring().cloned(),
                optimizer: s.adam.scalars,
                scheduler: s.scheduler.clone(),
                validation: s.validation,
                val_rho: s.val_rho.is_finite().then_some(s.val_rho),
                param_names: entries.iter().map(|e| e.name.clone()).collect(),
            },
            params: entries
                .iter()
                .map(|e| Tensor::new(e.tensor.shape().to_vec(), e.tensor.data().to_vec()).expect("param shape"))
                .collect(),
            m: s.adam.m.clone(),
            v: s.adam.v.clone(),
        }
    }

    pub fn val_rho(&self) -> f64 {
        self.meta.val_rho.unwrap_or(f64::NAN)
    }

    /// Rebuilds the model with the stored weights.
    pub fn model(&self) -> Result<Model> {
        let cfg = self.meta.config.model_config(self.meta.outputs);
        let mut model = match &self.meta.wiring {
            Some(w) => Model::with_wiring(cfg, w.clone())?,
            None => Model::new(cfg)?,
        };
        let entries = model.params.entries_mut();
        if entries.len() != self.params.len() {
            return Err(Error::Format {
                offset: HEADER_LEN,
                reason: format!("checkpoint has {} tensors, model needs {}", self.params.len(), entries.len()),
            });
        }
        for ((e, t), name) in entries.iter_mut().zip(&self.params).zip(&self.meta.param_names) {
            if &e.name != name || e.tensor.shape() != t.shape() {
                return Err(Error::Format {
                    offset: HEADER_LEN,
                    reason: format!("parameter `{name}` {:?} does not match model `{}` {:?}", t.shape(), e.name, e.tensor.shape()),
                });
            }
            e.tensor.data_mut().copy_from_slice(t.data());
        }
        Ok(model)
    }

    pub fn optimizer(&self) -> Adam {
        Adam {
            scalars: self.meta.optimizer,
            m: self.m.clone(),
            v: self.v.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.tag {
            CheckpointTag::Best => 0,
            CheckpointTag::Last => 1,
        });
        out.push(0);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&((self.params.len() * 3) as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for t in &self.params {
            t.write_to(&mut out);
        }
        for (buf, t) in self.m.iter().chain(&self.v).zip(self.params.iter().cycle()) {
            Tensor::new(t.shape().to_vec(), buf.clone()).expect("moment shape").write_to(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        let fmt = |offset: usize, reason: String| Error::Format { offset, reason };
        if rd.take(4)? != MAGIC {
            return Err(fmt(0, "bad checkpoint magic".into()));
        }
        let version = rd.u16()?;
        if version != VERSION {
            return Err(fmt(4, format!("unsupported checkpoint version {version}")));
        }
        let tag = match rd.u8()? {
            0 => CheckpointTag::Best,
            1 => CheckpointTag::Last,
            other => return Err(fmt(6, format!("unknown checkpoint tag {other}"))),
        };
        rd.u8()?;
        let meta_len = rd.u32()? as usize;
        let count = rd.u32()? as usize;
        let meta_bytes = rd.take(meta_len)?;
        let meta: CheckpointMeta =
            serde_json::from_slice(meta_bytes).map_err(|e| fmt(HEADER_LEN, format!("metadata: {e}")))?;
        let n = meta.param_names.len();
        if count != 3 * n {
            return Err(fmt(12, format!("tensor count {count} does not match {n} parameters")));
        }
        let mut tensors = Vec::new();
        for _ in 0..count {
            tensors.push(Tensor::read_from(&mut rd)?);
        }
        if rd.remaining() != 0 {
            return Err(fmt(rd.offset(), format!("{} trailing bytes", rd.remaining())));
        }
        let v: Vec<Vec<f64>> = tensors.split_off(2 * n).into_iter().map(Tensor::into_data).collect();
        let m: Vec<Vec<f64>> = tensors.split_off(n).into_iter().map(Tensor::into_data).collect();
        for (i, t) in tensors.iter().enumerate() {
            if m[i].len() != t.numel() || v[i].len() != t.numel() {
                return Err(fmt(HEADER_LEN + meta_len, format!("moment buffers of `{}` do not match", meta.param_names[i])));
            }
        }
        Ok(Self {
            tag,
            meta,
            params: tensors,
            m,
            v,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
