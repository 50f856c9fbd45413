//! Declarative training configuration (TOML).
//!
//! A file may name other files in an `include` key (string or array). Included
//! files are merged first, in order; keys of the including file win. Paths are
//! relative to the including file; `preset:NAME` refers to a shipped preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::cfc::CfcConfig;
use crate::error::{Error, Result};
use crate::layers::EncoderConfig;
use crate::ltc::LtcConfig;
use crate::model::{ConvNetConfig, ModelConfig, ModelKind};
use crate::sequence::SequencePlan;

use super::loss::LossKind;
use super::optim::SchedulerConfig;

/// How often validation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValidateEvery {
    /// After this many training samples.
    Samples(usize),
    Epoch(EpochKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochKeyword {
    Epoch,
}

impl ValidateEvery {
    pub const EPOCH: ValidateEvery = ValidateEvery::Epoch(EpochKeyword::Epoch);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Optional run label; empty means the derived `Model_LOSS-N` name.
    pub name: String,
    pub model: ModelKind,
    pub plan: SequencePlan,
    pub batch_size: usize,
    /// Samples per forward/backward chunk. Gradients of the chunks are summed,
    /// so this bounds memory without changing the update.
    pub micro_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub encoder_lr: f64,
    pub predictor_lr: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub validate_every: ValidateEvery,
    pub scheduler: SchedulerConfig,
    pub latent_size: usize,
    pub hidden_size: usize,
    /// Global gradient-norm bound for recurrent models; 0 disables.
    pub grad_clip: f64,
    /// Batch size used for validation and test inference.
    pub eval_batch: usize,
    pub encoder: EncoderConfig,
    pub convnet: ConvNetConfig,
    pub ltc: LtcConfig,
    pub cfc: CfcConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            model: ModelKind::Cfc,
            plan: SequencePlan::default(),
            batch_size: 4096,
            micro_batch: 256,
            max_epochs: 50,
            patience: 7,
            encoder_lr: 0.001,
            predictor_lr: 0.002,
            loss: LossKind::Mse,
            seed: 0,
            validate_every: ValidateEvery::EPOCH,
            scheduler: SchedulerConfig::default(),
            latent_size: 32,
            hidden_size: 16,
            grad_clip: 5.0,
            eval_batch: 256,
            encoder: EncoderConfig::default(),
            convnet: ConvNetConfig::default(),
            ltc: LtcConfig::default(),
            cfc: CfcConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.micro_batch == 0 || self.eval_batch == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.encoder_lr > 0.0) || !(self.predictor_lr > 0.0) {
            return bad(format!(
                "learning rates must be positive, got {} and {}",
                self.encoder_lr, self.predictor_lr
            ));
        }
        if matches!(self.validate_every, ValidateEvery::Samples(0)) {
            return bad("validate_every must be positive".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative".into());
        }
        self.plan.validate()?;
        self.ltc.validate()?;
        Ok(())
    }

    pub fn model_config(&self, outputs: usize) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            plan: self.plan,
            outputs,
            latent_size: self.latent_size,
            hidden_size: self.hidden_size,
            encoder: self.encoder.clone(),
            convnet: self.convnet.clone(),
            ltc: self.ltc,
            cfc: self.cfc,
            seed: self.seed,
        }
    }

    /// `ConvNet_MSE-40` style label; multi-scale plans use `CfC_2x20`.
    pub fn variant_label(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        let model = self.model.display();
        if self.plan.m > 1 || self.plan.w > 0 {
            format!("{model}_{}", self.plan.label())
        } else {
            format!("{model}_{}-{}", self.loss.label(), self.plan.n)
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value = resolve_includes(parse(text)?, None, 0)?;
        from_value(value)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let value = resolve_includes(parse(&text)?, path.parent(), 0)?;
        from_value(value)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("full-convnet", include_str!("../../presets/full-convnet.toml")),
    ("full-lstm", include_str!("../../presets/full-lstm.toml")),
    ("full-ltc", include_str!("../../presets/full-ltc.toml")),
    ("full-cfc", include_str!("../../presets/full-cfc.toml")),
    ("loss-mse-40", include_str!("../../presets/loss-mse-40.toml")),
    ("loss-mse-20", include_str!("../../presets/loss-mse-20.toml")),
    ("loss-mae-40", include_str!("../../presets/loss-mae-40.toml")),
    ("loss-mae-20", include_str!("../../presets/loss-mae-20.toml")),
    ("multiscale-1x40", include_str!("../../presets/multiscale-1x40.toml")),
    ("multiscale-2x20", include_str!("../../presets/multiscale-2x20.toml")),
    ("multiscale-4x10", include_str!("../../presets/multiscale-4x10.toml")),
    ("multiscale-8x5", include_str!("../../presets/multiscale-8x5.toml")),
    ("small-lr", include_str!("../../presets/small-lr.toml")),
    ("desk", include_str!("../../presets/desk.toml")),
];

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })
}

pub fn preset(name: &str) -> Result<TrainConfig> {
    TrainConfig::from_toml_str(preset_source(name)?)
}

fn parse(text: &str) -> Result<Value> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    Ok(Value::Table(table))
}

const MAX_INCLUDE_DEPTH: usize = 16;

fn resolve_includes(mut value: Value, base: Option<&Path>, depth: usize) -> Result<Value> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::Config("include chain too deep (cycle?)".into()));
    }
    let table = value.as_table_mut().expect("top level is a table");
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(Error::Config(format!("include entries must be strings, got {other}"))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(Error::Config(format!("include must be a string or array, got {other}"))),
    };
    let mut merged = Value::Table(toml::Table::new());
    for inc in includes {
        let included = if let Some(name) = inc.strip_prefix("preset:") {
            resolve_includes(parse(preset_source(name)?)?, None, depth + 1)?
        } else {
            let path: PathBuf = match base {
                Some(b) => b.join(&inc),
                None => PathBuf::from(&inc),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read include {}: {e}", path.display())))?;
            resolve_includes(parse(&text)?, path.parent(), depth + 1)?
        };
        merge(&mut merged, included);
    }
    merge(&mut merged, value);
    Ok(merged)
}

/// Deep merge; tables merge key by key, anything else is replaced.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Dotted paths present in `user` but absent from `reference`.
fn unknown_keys(user: &Value, reference: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Table(u), Value::Table(r)) = (user, reference) {
        for (k, v) in u {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match r.get(k) {
                None => out.push(path),
                Some(rv) => unknown_keys(v, rv, &path, out),
            }
        }
    }
}

fn from_value(value: Value) -> Result<TrainConfig> {
    let reference = Value::try_from(TrainConfig::default()).expect("default serializes");
    let mut unknown = Vec::new();
    unknown_keys(&value, &reference, "", &mut unknown);
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::UnknownKeys(unknown));
    }
    let cfg: TrainConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
