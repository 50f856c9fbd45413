//! Closed-form continuous-time cell.
//!
//! Instead of integrating an ODE, the state after elapsed time `t` is a gated
//! interpolation of two learned targets:
//!
//! ```text
//! x' = σ(−f·s·t) ⊙ g + (1 − σ(−f·s·t)) ⊙ h
//! ```
//!
//! with heads `f` (linear), `g`, `h` (tanh) over `[input ⊕ state]` and a
//! learned per-neuron time scale `s` (initialised to 1).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::layers::Parametrized;
use crate::params::{filled, orthogonal, xavier_uniform, Bound, ParamGroup, ParamId, ParamSet};
use crate::tensor::Tensor;
use crate::wiring::Wiring;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfcConfig {
    /// Elapsed time fed to the gate per recurrent step.
    pub elapsed: f64,
}

impl Default for CfcConfig {
    fn default() -> Self {
        Self { elapsed: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Head {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
}

/// One CfC cell; `input_mask` (`[inputs, hidden]`) restricts input weights.
#[derive(Debug, Clone)]
pub struct CfcCell {
    pub f: Head,
    pub g: Head,
    pub h: Head,
    pub time_scale: ParamId,
    pub inputs: usize,
    pub hidden: usize,
    input_mask: Option<Tensor>,
}

/// Intermediate values of one step, exposed for inspection.
#[derive(Debug, Clone, Copy)]
pub struct CfcParts {
    pub f: Var,
    pub g: Var,
    pub h: Var,
    pub gate: Var,
    pub out: Var,
}

impl CfcCell {
    pub fn new(
        set: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        inputs: usize,
        hidden: usize,
        input_mask: Option<Vec<f64>>,
    ) -> Result<Self> {
        let input_mask = match input_mask {
            Some(m) if m.len() != inputs * hidden => return Err(invalid("CfC input mask has wrong size")),
            Some(m) => Some(Tensor::new(vec![inputs, hidden], m)?),
            None => None,
        };
        let grp = ParamGroup::Predictor;
        let mut head = |hname: &str| Head {
            input: set.add(
                format!("{name}.{hname}.input"),
                grp,
                xavier_uniform(rng, &[inputs, hidden], inputs, hidden),
            ),
            recurrent: set.add(format!("{name}.{hname}.recurrent"), grp, orthogonal(rng, hidden, hidden)),
            bias: set.add(format!("{name}.{hname}.bias"), grp, Tensor::zeros(&[hidden])),
        };
        let f = head("f");
        let g = head("g");
        let h = head("h");
        let time_scale = set.add(format!("{name}.time_scale"), grp, filled(&[hidden], 1.0));
        Ok(Self {
            f,
            g,
            h,
            time_scale,
            inputs,
            hidden,
            input_mask,
        })
    }

    fn head(&self, gr: &mut Graph, p: &Bound, head: &Head, x: Var, u: Var) -> Result<Var> {
        let w = match &self.input_mask {
            Some(mask) => {
                let m = gr.leaf(mask);
                gr.mul(p[head.input], m)?
            }
            None => p[head.input],
        };
        let a = gr.matmul(u, w)?;
        let b = gr.matmul(x, p[head.recurrent])?;
        let s = gr.add(a, b)?;
        gr.add(s, p[head.bias])
    }

    /// Full step returning every intermediate. `x: [B, hidden]`, `u: [B, inputs]`.
    pub fn step_parts(&self, gr: &mut Graph, p: &Bound, x: Var, u: Var, t: f64) -> Result<CfcParts> {
        if !(t >= 0.0) {
            return Err(invalid(format!("elapsed time must be non-negative, got {t}")));
        }
        let f = self.head(gr, p, &self.f, x, u)?;
        let g = self.head(gr, p, &self.g, x, u)?;
        let g = gr.tanh(g);
        let h = self.head(gr, p, &self.h, x, u)?;
        let h = gr.tanh(h);
        let ft = gr.mul(f, p[self.time_scale])?;
        let ft = gr.scale(ft, -t);
        let gate = gr.sigmoid(ft);
        // σ·g + (1−σ)·h written as h + σ·(g − h)
        let diff = gr.sub(g, h)?;
        let mix = gr.mul(gate, diff)?;
        let out = gr.add(h, mix)?;
        Ok(CfcParts { f, g, h, gate, out })
    }

    pub fn step(&self, gr: &mut Graph, p: &Bound, x: Var, u: Var, t: f64) -> Result<Var> {
        Ok(self.step_parts(gr, p, x, u, t)?.out)
    }
}

impl Parametrized for CfcCell {
    fn param_ids(&self) -> Vec<ParamId> {
        [&self.f, &self.g, &self.h]
            .iter()
            .flat_map(|hd| [hd.input, hd.recurrent, hd.bias])
            .chain([self.time_scale])
            .collect()
    }
}

/// NCP-wired CfC: one cell per layer (inter, command, motor). Each layer reads
/// the freshly updated state of the layer before it through the wiring mask,
/// so a single step carries sensory input all the way to the motor neurons.
#[derive(Debug, Clone)]
pub struct WiredCfc {
    pub wiring: Wiring,
    pub config: CfcConfig,
    pub layers: Vec<CfcCell>,
    pub output_gain: ParamId,
    pub output_shift: ParamId,
}

impl WiredCfc {
    pub fn new(set: &mut ParamSet, rng: &mut impl Rng, wiring: Wiring, config: CfcConfig) -> Result<Self> {
        let sp = wiring.spec.clone();
        let q = wiring.units();
        let full_sensory = wiring.sensory_mask();
        let full = wiring.mask();
        let ranges = [sp.inter_range(), sp.command_range(), sp.motor_range()];
        let mut layers = Vec::with_capacity(3);
        for (l, range) in ranges.iter().enumerate() {
            let (src_rows, src_len): (Vec<usize>, usize) = if l == 0 {
                ((0..sp.sensory).collect(), sp.sensory)
            } else {
                (ranges[l - 1].clone().collect(), ranges[l - 1].len())
            };
            let mut mask = Vec::with_capacity(src_len * range.len());
            for &r in &src_rows {
                for c in range.clone() {
                    mask.push(if l == 0 { full_sensory[r * q + c] } else { full[r * q + c] });
                }
            }
            layers.push(CfcCell::new(set, rng, &format!("cfc.layer{l}"), src_len, range.len(), Some(mask))?);
        }
        let output_gain = set.add("cfc.output.gain", ParamGroup::Predictor, filled(&[sp.motor], 1.0));
        let output_shift = set.add("cfc.output.shift", ParamGroup::Predictor, Tensor::zeros(&[sp.motor]));
        Ok(Self {
            wiring,
            config,
            layers,
            output_gain,
            output_shift,
        })
    }

    pub fn units(&self) -> usize {
        self.wiring.units()
    }

    /// `x: [B, units]`, `u: [B, sensory]` → next state `[B, units]`.
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, u: Var, t: f64) -> Result<Var> {
        let sp = &self.wiring.spec;
        let ranges = [sp.inter_range(), sp.command_range(), sp.motor_range()];
        let mut input = u;
        let mut parts = Vec::with_capacity(3);
        for (cell, range) in self.layers.iter().zip(ranges) {
            let own = g.slice_cols(x, range.start, range.len())?;
            let next = cell.step(g, p, own, input, t)?;
            parts.push(next);
            input = next;
        }
        g.concat_cols(&parts)
    }

    pub fn readout(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let motor = self.wiring.spec.motor_range();
        let y = g.slice_cols(x, motor.start, motor.len())?;
        let y = g.mul(y, p[self.output_gain])?;
        g.add(y, p[self.output_shift])
    }
}

impl Parametrized for WiredCfc {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.layers.iter().flat_map(|c| c.param_ids()).collect();
        ids.extend([self.output_gain, self.output_shift]);
        ids
    }
}
