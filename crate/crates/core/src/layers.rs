//! Building blocks shared by all architectures: dense and convolutional
//! layers, the convolutional frame encoder, and an LSTM cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{filled, orthogonal, xavier_uniform, Bound, ParamGroup, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Frame side length of every stimulus.
pub const FRAME_SIDE: usize = 50;

/// Anything owning parameters inside a [`ParamSet`].
pub trait Parametrized {
    fn param_ids(&self) -> Vec<ParamId>;

    /// Exact number of learnable scalars.
    fn count_params(&self, set: &ParamSet) -> usize {
        self.param_ids().into_iter().map(|id| set.get(id).numel()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::None => x,
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        set: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        inputs: usize,
        outputs: usize,
        activation: Activation,
    ) -> Self {
        let weight = set.add(
            format!("{name}.weight"),
            group,
            xavier_uniform(rng, &[inputs, outputs], inputs, outputs),
        );
        let bias = set.add(format!("{name}.bias"), group, Tensor::zeros(&[outputs]));
        Self {
            weight,
            bias,
            inputs,
            outputs,
            activation,
        }
    }

    /// `x: [B, in]` → `[B, out]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.weight])?;
        let y = g.add(y, p[self.bias])?;
        Ok(self.activation.apply(g, y))
    }
}

impl Parametrized for DenseLayer {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        set: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
            return Err(invalid("conv2d needs positive channels, kernel and stride"));
        }
        let area = kernel * kernel;
        let kernels = set.add(
            format!("{name}.kernels"),
            group,
            xavier_uniform(
                rng,
                &[out_channels, in_channels, kernel, kernel],
                in_channels * area,
                out_channels * area,
            ),
        );
        let bias = set.add(format!("{name}.bias"), group, Tensor::zeros(&[out_channels]));
        Ok(Self {
            kernels,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn out_size(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// `x: [B, in_c, H, W]` → `[B, out_c, H', W']`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::Shape {
                op: "conv2d",
                lhs: s.to_vec(),
                rhs: vec![self.out_channels, self.in_channels, self.kernel, self.kernel],
            });
        }
        g.conv2d(x, p[self.kernels], p[self.bias], self.stride, self.padding)
    }
}

impl Parametrized for Conv2dLayer {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.kernels, self.bias]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Output channels of each encoding block.
    pub channels: Vec<usize>,
    pub kernel: usize,
    /// Number of leading blocks followed by 2×2 max pooling.
    pub pooled_blocks: usize,
    /// Stride of the first convolution (1 keeps full resolution).
    pub stem_stride: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32, 48, 64],
            kernel: 3,
            pooled_blocks: 3,
            stem_stride: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodingBlock {
    pub conv: Conv2dLayer,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    pub pool: bool,
}

/// Convolutional frame-stack encoder: `[B, N, 50, 50]` → `[B, L]`.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub blocks: Vec<EncodingBlock>,
    pub head: DenseLayer,
    pub frames: usize,
    pub latent: usize,
}

impl Encoder {
    pub fn new(
        set: &mut ParamSet,
        rng: &mut impl Rng,
        cfg: &EncoderConfig,
        frames: usize,
        latent: usize,
    ) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.kernel.is_multiple_of(2) {
            return Err(invalid("encoder needs at least one block and an odd kernel"));
        }
        let mut blocks = Vec::with_capacity(cfg.channels.len());
        let mut in_c = frames;
        let mut side = FRAME_SIDE;
        for (i, &out_c) in cfg.channels.iter().enumerate() {
            let name = format!("encoder.block{i}");
            let stride = if i == 0 { cfg.stem_stride.max(1) } else { 1 };
            let conv = Conv2dLayer::new(set, rng, &name, ParamGroup::Encoder, in_c, out_c, cfg.kernel, stride, cfg.kernel / 2)?;
            side = conv.out_size(side);
            let norm_gain = set.add(format!("{name}.norm.gain"), ParamGroup::Encoder, filled(&[out_c], 1.0));
            let norm_bias = set.add(format!("{name}.norm.bias"), ParamGroup::Encoder, Tensor::zeros(&[out_c]));
            let pool = i < cfg.pooled_blocks;
            if pool {
                side /= 2;
            }
            if side == 0 {
                return Err(invalid("too many pooled blocks for 50×50 frames"));
            }
            blocks.push(EncodingBlock {
                conv,
                norm_gain,
                norm_bias,
                pool,
            });
            in_c = out_c;
        }
        let flat = in_c * side * side;
        let head = DenseLayer::new(set, rng, "encoder.head", ParamGroup::Encoder, flat, latent, Activation::None);
        Ok(Self {
            blocks,
            head,
            frames,
            latent,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, frames: Var) -> Result<Var> {
        let s = g.shape(frames).to_vec();
        if s.len() != 4 || s[1] != self.frames || s[2] != FRAME_SIDE || s[3] != FRAME_SIDE {
            return Err(Error::Shape {
                op: "encoder",
                lhs: s,
                rhs: vec![0, self.frames, FRAME_SIDE, FRAME_SIDE],
            });
        }
        let batch = s[0];
        let mut x = frames;
        for block in &self.blocks {
            x = block.conv.forward(g, p, x)?;
            x = g.layer_norm(x, p[block.norm_gain], p[block.norm_bias])?;
            x = g.relu(x);
            if block.pool {
                x = g.max_pool2(x)?;
            }
        }
        let flat = g.value(x).len() / batch;
        let x = g.reshape(x, &[batch, flat])?;
        self.head.forward(g, p, x)
    }
}

impl Parametrized for Encoder {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for b in &self.blocks {
            ids.extend(b.conv.param_ids());
            ids.push(b.norm_gain);
            ids.push(b.norm_bias);
        }
        ids.extend(self.head.param_ids());
        ids
    }
}

/// One gate of the LSTM: input weights, recurrent weights, bias.
#[derive(Debug, Clone)]
pub struct Gate {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub cell_gate: Gate,
    pub output_gate: Gate,
    pub inputs: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(set: &mut ParamSet, rng: &mut impl Rng, name: &str, inputs: usize, hidden: usize) -> Self {
        let mut gate = |gname: &str| Gate {
            input: set.add(
                format!("{name}.{gname}.input"),
                ParamGroup::Predictor,
                xavier_uniform(rng, &[inputs, hidden], inputs, hidden),
            ),
            recurrent: set.add(
                format!("{name}.{gname}.recurrent"),
                ParamGroup::Predictor,
                orthogonal(rng, hidden, hidden),
            ),
            bias: set.add(format!("{name}.{gname}.bias"), ParamGroup::Predictor, Tensor::zeros(&[hidden])),
        };
        let input_gate = gate("input_gate");
        let forget_gate = gate("forget_gate");
        let cell_gate = gate("cell_gate");
        let output_gate = gate("output_gate");
        Self {
            input_gate,
            forget_gate,
            cell_gate,
            output_gate,
            inputs,
            hidden,
        }
    }

    fn preactivation(&self, g: &mut Graph, p: &Bound, gate: &Gate, x: Var, h: Var) -> Result<Var> {
        let a = g.matmul(x, p[gate.input])?;
        let b = g.matmul(h, p[gate.recurrent])?;
        let s = g.add(a, b)?;
        g.add(s, p[gate.bias])
    }

    /// One step: returns `(h', c')` with `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let i = self.preactivation(g, p, &self.input_gate, x, h)?;
        let i = g.sigmoid(i);
        let f = self.preactivation(g, p, &self.forget_gate, x, h)?;
        let f = g.sigmoid(f);
        let cand = self.preactivation(g, p, &self.cell_gate, x, h)?;
        let cand = g.tanh(cand);
        let o = self.preactivation(g, p, &self.output_gate, x, h)?;
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}

impl Parametrized for LstmCell {
    fn param_ids(&self) -> Vec<ParamId> {
        [&self.input_gate, &self.forget_gate, &self.cell_gate, &self.output_gate]
            .iter()
            .flat_map(|gt| [gt.input, gt.recurrent, gt.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::stream_rng;

    #[test]
    fn dense_param_count() {
        let mut set = ParamSet::new();
        let mut rng = stream_rng(0, 0);
        let d = DenseLayer::new(&mut set, &mut rng, "d", ParamGroup::Predictor, 32, 9, Activation::None);
        assert_eq!(d.count_params(&set), 297);
        for (i, o) in [(1, 1), (7, 3), (100, 2)] {
            let d = DenseLayer::new(&mut set, &mut rng, "e", ParamGroup::Predictor, i, o, Activation::Relu);
            assert_eq!(d.count_params(&set), i * o + o);
        }
    }

    #[test]
    fn identity_kernel_and_box_sum() {
        let mut set = ParamSet::new();
        let mut rng = stream_rng(0, 0);
        let conv = Conv2dLayer::new(&mut set, &mut rng, "c", ParamGroup::Encoder, 2, 2, 1, 1, 0).unwrap();
        // 1×1 kernel: out channel o copies in channel o
        set.get_mut(conv.kernels).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let mut g = Graph::new();
        let p = set.bind(&mut g);
        let xs: Vec<f64> = (0..2 * 9).map(|v| v as f64).collect();
        let x = g.constant(&[1, 2, 3, 3], xs.clone()).unwrap();
        let y = conv.forward(&mut g, &p, x).unwrap();
        assert_eq!(g.value(y), xs.as_slice());

        let box3 = Conv2dLayer::new(&mut set, &mut rng, "b", ParamGroup::Encoder, 1, 1, 3, 1, 0).unwrap();
        set.get_mut(box3.kernels).data_mut().fill(1.0);
        let mut g = Graph::new();
        let p = set.bind(&mut g);
        let x = g.constant(&[1, 1, 5, 5], vec![2.5; 25]).unwrap();
        let y = box3.forward(&mut g, &p, x).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 3, 3]);
        assert!(g.value(y).iter().all(|&v| (v - 22.5).abs() < 1e-12));
    }

    #[test]
    fn conv_channel_mismatch_errors() {
        let mut set = ParamSet::new();
        let mut rng = stream_rng(0, 0);
        let conv = Conv2dLayer::new(&mut set, &mut rng, "c", ParamGroup::Encoder, 3, 2, 3, 1, 1).unwrap();
        let mut g = Graph::new();
        let p = set.bind(&mut g);
        let x = g.constant(&[1, 2, 5, 5], vec![0.0; 50]).unwrap();
        assert!(conv.forward(&mut g, &p, x).is_err());
    }

    #[test]
    fn encoder_shapes() {
        let mut rng = stream_rng(1, 0);
        for (b, n) in [(4, 40), (1, 20), (2, 5)] {
            let mut set = ParamSet::new();
            let enc = Encoder::new(&mut set, &mut rng, &EncoderConfig::default(), n, 32).unwrap();
            let mut g = Graph::new();
            let p = set.bind(&mut g);
            let x = g
                .constant(&[b, n, FRAME_SIDE, FRAME_SIDE], vec![0.0; b * n * FRAME_SIDE * FRAME_SIDE])
                .unwrap();
            let y = enc.forward(&mut g, &p, x).unwrap();
            assert_eq!(g.shape(y), &[b, 32]);
            assert!(g.value(y).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn encoder_rejects_wrong_spatial_size() {
        let mut rng = stream_rng(1, 0);
        let mut set = ParamSet::new();
        let enc = Encoder::new(&mut set, &mut rng, &EncoderConfig::default(), 5, 32).unwrap();
        let mut g = Graph::new();
        let p = set.bind(&mut g);
        let x = g.constant(&[1, 5, 40, 40], vec![0.0; 5 * 1600]).unwrap();
        assert!(enc.forward(&mut g, &p, x).is_err());
    }

    #[test]
    fn lstm_zero_weights() {
        let mut set = ParamSet::new();
        let mut rng = stream_rng(0, 0);
        let cell = LstmCell::new(&mut set, &mut rng, "lstm", 2, 1);
        for id in cell.param_ids() {
            set.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new();
        let p = set.bind(&mut g);
        let x = g.constant(&[1, 2], vec![0.3, -0.7]).unwrap();
        let h = g.constant(&[1, 1], vec![0.0]).unwrap();
        let c0 = g.constant(&[1, 1], vec![0.0]).unwrap();
        let (h1, c1) = cell.step(&mut g, &p, x, h, c0).unwrap();
        assert_eq!(g.value(h1), &[0.0]);
        assert_eq!(g.value(c1), &[0.0]);

        let c2 = g.constant(&[1, 1], vec![2.0]).unwrap();
        let (h2, c3) = cell.step(&mut g, &p, x, h, c2).unwrap();
        assert_eq!(g.value(c3), &[1.0]);
        assert!((g.value(h2)[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((g.value(h2)[0] - 0.3808).abs() < 1e-4);
    }
}
