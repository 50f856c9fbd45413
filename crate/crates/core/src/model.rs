//! The four architectures behind one [`Model`] type.

use serde::{Deserialize, Serialize};

use crate::cfc::{CfcConfig, WiredCfc};
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Activation, Conv2dLayer, DenseLayer, Encoder, EncoderConfig, LstmCell, Parametrized, FRAME_SIDE};
use crate::ltc::{LtcCell, LtcConfig};
use crate::params::{stream_rng, Bound, ParamGroup, ParamSet};
use crate::sequence::SequencePlan;
use crate::tensor::Tensor;
use crate::wiring::{build_ncp, Wiring, WiringSpec};

pub const PIXELS: usize = FRAME_SIDE * FRAME_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    ConvNet,
    Lstm,
    Ltc,
    Cfc,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::ConvNet, ModelKind::Lstm, ModelKind::Ltc, ModelKind::Cfc];

    /// Display name as used in result tables.
    pub fn display(self) -> &'static str {
        match self {
            ModelKind::ConvNet => "ConvNet",
            ModelKind::Lstm => "LSTM",
            ModelKind::Ltc => "LTC",
            ModelKind::Cfc => "CfC",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != ModelKind::ConvNet
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "convnet" => Ok(ModelKind::ConvNet),
            "lstm" => Ok(ModelKind::Lstm),
            "ltc" => Ok(ModelKind::Ltc),
            "cfc" => Ok(ModelKind::Cfc),
            other => Err(invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Baseline stack: conv → relu → conv → relu → flatten → dense(n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvNetConfig {
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for ConvNetConfig {
    fn default() -> Self {
        Self {
            filters: vec![8, 8],
            kernels: vec![15, 11],
            strides: vec![1, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub plan: SequencePlan,
    pub outputs: usize,
    pub latent_size: usize,
    pub hidden_size: usize,
    pub encoder: EncoderConfig,
    pub convnet: ConvNetConfig,
    pub ltc: LtcConfig,
    pub cfc: CfcConfig,
    /// Seeds parameter initialisation and wiring.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Arch {
    ConvNet {
        convs: Vec<Conv2dLayer>,
        dense: DenseLayer,
    },
    Lstm {
        encoder: Encoder,
        cell: LstmCell,
        hidden: DenseLayer,
        readout: DenseLayer,
    },
    Ltc {
        encoder: Encoder,
        cell: LtcCell,
    },
    Cfc {
        encoder: Encoder,
        cell: WiredCfc,
    },
}

/// Whether the output ReLU is applied (inference) or not (training).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub arch: Arch,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Rebuilds a model around an existing wiring (checkpoint restore).
    pub fn with_wiring(config: ModelConfig, wiring: Wiring) -> Result<Self> {
        Self::build(config, Some(wiring))
    }

    fn build(config: ModelConfig, wiring: Option<Wiring>) -> Result<Self> {
        config.plan.validate()?;
        if config.outputs == 0 {
            return Err(invalid("model needs at least one output channel"));
        }
        let mut rng = stream_rng(config.seed, 1);
        let mut set = ParamSet::new();
        let n_frames = config.plan.n;
        let latent = config.latent_size;
        let make_wiring = |wiring: Option<Wiring>| -> Result<Wiring> {
            let w = match wiring {
                Some(w) => w,
                None => build_ncp(&WiringSpec::auto(latent, config.hidden_size, config.outputs), config.seed)?,
            };
            if w.spec.sensory != latent || w.spec.motor != config.outputs {
                return Err(invalid("wiring does not match latent size and outputs"));
            }
            Ok(w)
        };
        let arch = match config.kind {
            ModelKind::ConvNet => {
                if config.plan.m != 1 {
                    return Err(invalid("ConvNet consumes a single frame stack (m = 1)"));
                }
                let c = &config.convnet;
                if c.filters.is_empty() || c.filters.len() != c.kernels.len() || c.filters.len() != c.strides.len() {
                    return Err(invalid("convnet filters, kernels and strides must have equal non-zero length"));
                }
                let mut convs = Vec::new();
                let mut in_c = n_frames;
                let mut side = FRAME_SIDE;
                for (i, ((&f, &k), &s)) in c.filters.iter().zip(&c.kernels).zip(&c.strides).enumerate() {
                    if k > side {
                        return Err(invalid(format!("kernel {k} larger than {side}px feature map")));
                    }
                    let conv = Conv2dLayer::new(&mut set, &mut rng, &format!("convnet.conv{i}"), ParamGroup::Encoder, in_c, f, k, s, 0)?;
                    side = conv.out_size(side);
                    in_c = f;
                    convs.push(conv);
                }
                let dense = DenseLayer::new(
                    &mut set,
                    &mut rng,
                    "convnet.dense",
                    ParamGroup::Predictor,
                    in_c * side * side,
                    config.outputs,
                    Activation::None,
                );
                Arch::ConvNet { convs, dense }
            }
            ModelKind::Lstm => {
                let encoder = Encoder::new(&mut set, &mut rng, &config.encoder, n_frames, latent)?;
                let h = config.hidden_size;
                let cell = LstmCell::new(&mut set, &mut rng, "lstm", latent, h);
                let hidden = DenseLayer::new(&mut set, &mut rng, "lstm.dense0", ParamGroup::Predictor, h, h, Activation::Relu);
                let readout = DenseLayer::new(&mut set, &mut rng, "lstm.dense1", ParamGroup::Predictor, h, config.outputs, Activation::None);
                Arch::Lstm {
                    encoder,
                    cell,
                    hidden,
                    readout,
                }
            }
            ModelKind::Ltc => {
                let encoder = Encoder::new(&mut set, &mut rng, &config.encoder, n_frames, latent)?;
                let cell = LtcCell::new(&mut set, &mut rng, make_wiring(wiring)?, config.ltc)?;
                Arch::Ltc { encoder, cell }
            }
            ModelKind::Cfc => {
                let encoder = Encoder::new(&mut set, &mut rng, &config.encoder, n_frames, latent)?;
                let cell = WiredCfc::new(&mut set, &mut rng, make_wiring(wiring)?, config.cfc)?;
                Arch::Cfc { encoder, cell }
            }
        };
        Ok(Self {
            config,
            params: set,
            arch,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn plan(&self) -> SequencePlan {
        self.config.plan
    }

    pub fn outputs(&self) -> usize {
        self.config.outputs
    }

    pub fn wiring(&self) -> Option<&Wiring> {
        match &self.arch {
            Arch::Ltc { cell, .. } => Some(&cell.wiring),
            Arch::Cfc { cell, .. } => Some(&cell.wiring),
            _ => None,
        }
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// Multi-scale forward pass over `frames: [B, T, 50, 50]` (pixel values
    /// already scaled) with `T = m·n − (m−1)·w`. Each subsequence is encoded
    /// and fed to the recurrent cell in order; the final readout is returned.
    /// In [`Mode::Infer`] the output is rectified.
    pub fn run_sequence(&self, g: &mut Graph, p: &Bound, frames: &Tensor, mode: Mode) -> Result<Var> {
        let plan = self.config.plan;
        let s = frames.shape();
        if s.len() != 4 || s[2] != FRAME_SIDE || s[3] != FRAME_SIDE {
            return Err(Error::Shape {
                op: "run_sequence",
                lhs: s.to_vec(),
                rhs: vec![0, plan.total_frames(), FRAME_SIDE, FRAME_SIDE],
            });
        }
        if s[1] != plan.total_frames() {
            return Err(Error::FrameCount {
                expected: plan.total_frames(),
                got: s[1],
            });
        }
        let batch = s[0];
        let stacks: Vec<Var> = (0..plan.m)
            .map(|k| subsequence(g, frames, plan.subsequence_start(k), plan.n))
            .collect::<Result<_>>()?;

        let out = match &self.arch {
            Arch::ConvNet { convs, dense } => {
                let mut x = stacks[0];
                for conv in convs {
                    x = conv.forward(g, p, x)?;
                    x = g.relu(x);
                }
                let flat = g.value(x).len() / batch;
                let x = g.reshape(x, &[batch, flat])?;
                dense.forward(g, p, x)?
            }
            Arch::Lstm {
                encoder,
                cell,
                hidden,
                readout,
            } => {
                let hsz = cell.hidden;
                let mut h = g.constant(&[batch, hsz], vec![0.0; batch * hsz])?;
                let mut c = g.constant(&[batch, hsz], vec![0.0; batch * hsz])?;
                for &stack in &stacks {
                    let z = encoder.forward(g, p, stack)?;
                    (h, c) = cell.step(g, p, z, h, c)?;
                }
                let r = hidden.forward(g, p, h)?;
                let r = g.add(r, h)?;
                readout.forward(g, p, r)?
            }
            Arch::Ltc { encoder, cell } => {
                let vars = cell.vars(g, p)?;
                let q = cell.units();
                let mut x = g.constant(&[batch, q], vec![0.0; batch * q])?;
                for &stack in &stacks {
                    let z = encoder.forward(g, p, stack)?;
                    x = cell.step(g, p, &vars, x, z)?;
                }
                cell.readout(g, p, x)?
            }
            Arch::Cfc { encoder, cell } => {
                let q = cell.units();
                let mut x = g.constant(&[batch, q], vec![0.0; batch * q])?;
                for &stack in &stacks {
                    let z = encoder.forward(g, p, stack)?;
                    x = cell.step(g, p, x, z, cell.config.elapsed)?;
                }
                cell.readout(g, p, x)?
            }
        };
        Ok(match mode {
            Mode::Train => out,
            Mode::Infer => g.relu(out),
        })
    }

    /// Inference-mode predictions `[B, outputs]` (normalised target space).
    pub fn predict(&self, frames: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let y = self.run_sequence(&mut g, &p, frames, Mode::Infer)?;
        Ok(g.value(y).to_vec())
    }

    /// Number of learnables per architectural part, for reporting.
    pub fn param_breakdown(&self) -> Vec<(&'static str, usize)> {
        let set = &self.params;
        match &self.arch {
            Arch::ConvNet { convs, dense } => vec![
                ("conv", convs.iter().map(|c| c.count_params(set)).sum()),
                ("dense", dense.count_params(set)),
            ],
            Arch::Lstm {
                encoder,
                cell,
                hidden,
                readout,
            } => vec![
                ("encoder", encoder.count_params(set)),
                ("lstm", cell.count_params(set)),
                ("dense", hidden.count_params(set) + readout.count_params(set)),
            ],
            Arch::Ltc { encoder, cell } => vec![("encoder", encoder.count_params(set)), ("ltc", cell.count_params(set))],
            Arch::Cfc { encoder, cell } => vec![("encoder", encoder.count_params(set)), ("cfc", cell.count_params(set))],
        }
    }
}

/// Channels `start..start+len` of `[B, T, 50, 50]` as a graph constant.
fn subsequence(g: &mut Graph, frames: &Tensor, start: usize, len: usize) -> Result<Var> {
    let s = frames.shape();
    let (batch, t) = (s[0], s[1]);
    let mut data = Vec::with_capacity(batch * len * PIXELS);
    for b in 0..batch {
        let base = (b * t + start) * PIXELS;
        data.extend_from_slice(&frames.data()[base..base + len * PIXELS]);
    }
    g.constant(&[batch, len, FRAME_SIDE, FRAME_SIDE], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config(kind: ModelKind, plan: SequencePlan) -> ModelConfig {
        ModelConfig {
            kind,
            plan,
            outputs: 3,
            latent_size: 8,
            hidden_size: 6,
            encoder: EncoderConfig {
                channels: vec![2, 2],
                kernel: 3,
                pooled_blocks: 2,
                stem_stride: 1,
            },
            convnet: ConvNetConfig {
                filters: vec![2, 2],
                kernels: vec![9, 5],
                strides: vec![2, 1],
            },
            ltc: LtcConfig::default(),
            cfc: CfcConfig::default(),
            seed: 5,
        }
    }

    fn frames(batch: usize, t: usize, seed: u64) -> Tensor {
        let data = (0..batch * t * PIXELS)
            .map(|i| (((i as u64).wrapping_mul(2654435761).wrapping_add(seed)) % 256) as f64 / 255.0)
            .collect();
        Tensor::new(vec![batch, t, FRAME_SIDE, FRAME_SIDE], data).unwrap()
    }

    #[test]
    fn frame_count_mismatch_names_expected() {
        let m = Model::new(config(ModelKind::Cfc, SequencePlan::new(2, 5, 0).unwrap())).unwrap();
        let err = m.predict(&frames(1, 9, 0)).unwrap_err();
        assert!(err.to_string().contains("expected 10 frames"), "{err}");
    }

    #[test]
    fn inference_outputs_are_non_negative() {
        for kind in ModelKind::ALL {
            let plan = SequencePlan::new(1, 4, 0).unwrap();
            let m = Model::new(config(kind, plan)).unwrap();
            let y = m.predict(&frames(3, 4, 1)).unwrap();
            assert_eq!(y.len(), 9);
            assert!(y.iter().all(|&v| v >= 0.0 && v.is_finite()), "{kind:?}");
        }
    }

    #[test]
    fn batch_composition_does_not_change_predictions() {
        for kind in ModelKind::ALL {
            let plan = if kind == ModelKind::ConvNet {
                SequencePlan::new(1, 6, 0).unwrap()
            } else {
                SequencePlan::new(2, 4, 1).unwrap()
            };
            let m = Model::new(config(kind, plan)).unwrap();
            let t = plan.total_frames();
            let all = frames(3, t, 9);
            let joint = m.predict(&all).unwrap();
            for b in 0..3 {
                let one = Tensor::new(
                    vec![1, t, FRAME_SIDE, FRAME_SIDE],
                    all.data()[b * t * PIXELS..(b + 1) * t * PIXELS].to_vec(),
                )
                .unwrap();
                let alone = m.predict(&one).unwrap();
                for (a, j) in alone.iter().zip(&joint[b * 3..(b + 1) * 3]) {
                    assert_eq!(a.to_bits(), j.to_bits(), "{kind:?} sample {b}");
                }
            }
        }
    }

    #[test]
    fn convnet_requires_single_stack() {
        assert!(Model::new(config(ModelKind::ConvNet, SequencePlan::new(2, 4, 0).unwrap())).is_err());
    }

    #[test]
    fn default_architecture_sizes() {
        let mut cfg = config(ModelKind::Ltc, SequencePlan::default());
        cfg.outputs = 9;
        cfg.latent_size = 32;
        cfg.hidden_size = 16;
        cfg.encoder = EncoderConfig::default();
        let ltc = Model::new(cfg.clone()).unwrap();
        let count = ltc.count_params();
        // Same order of magnitude as the 49,442 reported for the 9-cell LTC.
        assert!((10_000..500_000).contains(&count), "{count}");
        cfg.kind = ModelKind::ConvNet;
        cfg.convnet = ConvNetConfig::default();
        let conv = Model::new(cfg).unwrap();
        let expected = (40 * 8 * 225 + 8) + (8 * 8 * 121 + 8) + (8 * 26 * 26 * 9 + 9);
        assert_eq!(conv.count_params(), expected);
    }
}
