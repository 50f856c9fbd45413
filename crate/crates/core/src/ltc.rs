//! Liquid time-constant cell with a fused semi-implicit ODE step.
//!
//! Each state neuron follows
//!
//! ```text
//! dx/dt = −(1/τ + Σ s·w)·x + Σ s·w·A + bias/τ
//! ```
//!
//! where every synapse contributes a sigmoid activation
//! `s = σ(slope·(pre − offset))` of its presynaptic value, a positive
//! conductance `w` and a reversal value `A`. One fused step treats the leak
//! and conductance terms implicitly:
//!
//! ```text
//! x' = (x + dt·Σ s·w·A + dt·bias/τ) / (1 + dt·(1/τ + Σ s·w))
//! ```
//!
//! which is stable for any `dt > 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::layers::Parametrized;
use crate::params::{filled, uniform, Bound, ParamGroup, ParamId, ParamSet};
use crate::tensor::Tensor;
use crate::wiring::Wiring;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LtcConfig {
    pub unfold_steps: usize,
    pub dt: f64,
}

impl Default for LtcConfig {
    fn default() -> Self {
        Self {
            unfold_steps: 6,
            dt: 1.0,
        }
    }
}

impl LtcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.unfold_steps == 0 {
            return Err(invalid("unfold_steps must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Graph handles for one synapse population, all `[pre, post]`.
#[derive(Debug, Clone, Copy)]
pub struct SynapseVars {
    pub slope: Var,
    pub offset: Var,
    pub weight: Var,
    pub reversal: Var,
}

/// Effective (constrained) cell quantities inside a graph.
#[derive(Debug, Clone, Copy)]
pub struct LtcVars {
    pub tau: Var,
    pub bias: Var,
    pub sensory: SynapseVars,
    pub recurrent: SynapseVars,
}

/// Plain-valued cell parameters, for driving the cell outside of training.
#[derive(Debug, Clone, PartialEq)]
pub struct LtcCellParams {
    pub inputs: usize,
    pub units: usize,
    pub tau: Vec<f64>,
    pub bias: Vec<f64>,
    pub sensory: [Vec<f64>; 4],
    pub recurrent: [Vec<f64>; 4],
    pub config: LtcConfig,
}

impl LtcCellParams {
    /// `sensory` and `recurrent` hold `[slope, offset, weight, reversal]`,
    /// shaped `[inputs, units]` and `[units, units]`.
    pub fn new(
        inputs: usize,
        tau: Vec<f64>,
        bias: Vec<f64>,
        sensory: [Vec<f64>; 4],
        recurrent: [Vec<f64>; 4],
        config: LtcConfig,
    ) -> Result<Self> {
        config.validate()?;
        let units = tau.len();
        if let Some(t) = tau.iter().find(|t| !(**t > 0.0)) {
            return Err(invalid(format!("time constants must be positive, got {t}")));
        }
        if bias.len() != units
            || sensory.iter().any(|m| m.len() != inputs * units)
            || recurrent.iter().any(|m| m.len() != units * units)
        {
            return Err(invalid("LTC parameter shapes disagree"));
        }
        if sensory[2].iter().chain(&recurrent[2]).any(|w| *w < 0.0) {
            return Err(invalid("synaptic weights must be non-negative"));
        }
        Ok(Self {
            inputs,
            units,
            tau,
            bias,
            sensory,
            recurrent,
            config,
        })
    }

    pub fn bind(&self, g: &mut Graph) -> Result<LtcVars> {
        let q = self.units;
        let pop = |g: &mut Graph, m: &[Vec<f64>; 4], p: usize| -> Result<SynapseVars> {
            Ok(SynapseVars {
                slope: g.constant(&[p, q], m[0].clone())?,
                offset: g.constant(&[p, q], m[1].clone())?,
                weight: g.constant(&[p, q], m[2].clone())?,
                reversal: g.constant(&[p, q], m[3].clone())?,
            })
        };
        Ok(LtcVars {
            tau: g.constant(&[q], self.tau.clone())?,
            bias: g.constant(&[q], self.bias.clone())?,
            sensory: pop(g, &self.sensory, self.inputs)?,
            recurrent: pop(g, &self.recurrent, q)?,
        })
    }

    /// Runs one input frame (all unfold steps) on plain buffers.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let batch = x.len() / self.units;
        let mut g = Graph::new();
        let vars = self.bind(&mut g)?;
        let xv = g.constant(&[batch, self.units], x.to_vec())?;
        let uv = g.constant(&[batch, self.inputs], u.to_vec())?;
        let out = ltc_fused_step(&mut g, &self.config, &vars, xv, uv)?;
        Ok(g.value(out).to_vec())
    }

    /// Right-hand side of the underlying ODE, for reference integrators.
    pub fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let q = self.units;
        let batch = x.len() / q;
        let mut dx = vec![0.0; x.len()];
        for b in 0..batch {
            let xb = &x[b * q..(b + 1) * q];
            let ub = &u[b * self.inputs..(b + 1) * self.inputs];
            for j in 0..q {
                let mut num = 0.0;
                let mut den = 0.0;
                let mut add = |pre: f64, m: &[Vec<f64>; 4], ij: usize| {
                    let s = crate::kernels::sigmoid(m[0][ij] * (pre - m[1][ij]));
                    num += s * m[2][ij] * m[3][ij];
                    den += s * m[2][ij];
                };
                for (i, &pre) in ub.iter().enumerate() {
                    add(pre, &self.sensory, i * q + j);
                }
                for (i, &pre) in xb.iter().enumerate() {
                    add(pre, &self.recurrent, i * q + j);
                }
                let leak = 1.0 / self.tau[j];
                dx[b * q + j] = -(leak + den) * xb[j] + num + self.bias[j] * leak;
            }
        }
        dx
    }
}

/// One input frame of LTC dynamics: `unfold_steps` fused updates with step `dt`.
/// `x: [B, units]`, `u: [B, inputs]`.
pub fn ltc_fused_step(g: &mut Graph, cfg: &LtcConfig, vars: &LtcVars, x: Var, u: Var) -> Result<Var> {
    cfg.validate()?;
    let q = g.shape(vars.tau)[0];
    let dt = cfg.dt;
    let s = &vars.sensory;
    let sens = g.synapse(u, s.slope, s.offset, s.weight, s.reversal)?;
    let sens_num = g.slice_cols(sens, 0, q)?;
    let sens_den = g.slice_cols(sens, q, q)?;

    // per-neuron rows: 1 + dt/τ and dt·bias/τ
    let ones = g.constant(&[q], vec![1.0; q])?;
    let leak = g.div(ones, vars.tau)?;
    let leak_dt = g.scale(leak, dt);
    let denom_row = g.shift(leak_dt, 1.0);
    let drive = g.mul(vars.bias, leak)?;
    let drive_row = g.scale(drive, dt);

    let r = &vars.recurrent;
    let mut state = x;
    for _ in 0..cfg.unfold_steps {
        let rec = g.synapse(state, r.slope, r.offset, r.weight, r.reversal)?;
        let rec_num = g.slice_cols(rec, 0, q)?;
        let rec_den = g.slice_cols(rec, q, q)?;
        let num = g.add(sens_num, rec_num)?;
        let num = g.scale(num, dt);
        let num = g.add(state, num)?;
        let num = g.add(num, drive_row)?;
        let den = g.add(sens_den, rec_den)?;
        let den = g.scale(den, dt);
        let den = g.add(den, denom_row)?;
        state = g.div(num, den)?;
    }
    Ok(state)
}

/// Trainable NCP-wired LTC cell with affine input and output mappings.
#[derive(Debug, Clone)]
pub struct LtcCell {
    pub wiring: Wiring,
    pub config: LtcConfig,
    pub input_gain: ParamId,
    pub input_shift: ParamId,
    pub tau_raw: ParamId,
    pub bias: ParamId,
    pub sensory: [ParamId; 4],
    pub recurrent: [ParamId; 4],
    pub output_gain: ParamId,
    pub output_shift: ParamId,
    sensory_mask: Tensor,
    mask: Tensor,
}

fn population<R: Rng>(set: &mut ParamSet, rng: &mut R, name: &str, rows: usize, q: usize, polarity: Vec<f64>) -> [ParamId; 4] {
    let grp = ParamGroup::Predictor;
    let raw: Vec<f64> = (0..rows * q).map(|_| inverse_softplus(rng.gen_range(0.01..1.0))).collect();
    [
        set.add(format!("ltc.{name}.slope"), grp, uniform(rng, &[rows, q], 3.0, 8.0)),
        set.add(format!("ltc.{name}.offset"), grp, uniform(rng, &[rows, q], 0.3, 0.8)),
        set.add(format!("ltc.{name}.weight"), grp, Tensor::new(vec![rows, q], raw).expect("shape")),
        set.add(format!("ltc.{name}.reversal"), grp, Tensor::new(vec![rows, q], polarity).expect("shape")),
    ]
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl LtcCell {
    pub fn new(set: &mut ParamSet, rng: &mut impl Rng, wiring: Wiring, config: LtcConfig) -> Result<Self> {
        config.validate()?;
        let p = wiring.spec.sensory;
        let q = wiring.units();
        let n = wiring.spec.motor;
        let grp = ParamGroup::Predictor;
        let input_gain = set.add("ltc.input.gain", grp, filled(&[p], 1.0));
        let input_shift = set.add("ltc.input.shift", grp, Tensor::zeros(&[p]));
        let taus: Vec<f64> = (0..q).map(|_| inverse_softplus(rng.gen_range(1.0..2.0))).collect();
        let tau_raw = set.add("ltc.tau", grp, Tensor::new(vec![q], taus).expect("shape"));
        let bias = set.add("ltc.bias", grp, uniform(rng, &[q], -0.2, 0.2));
        let sensory = population(set, rng, "sensory", p, q, wiring.sensory_polarity());
        let recurrent = population(set, rng, "recurrent", q, q, wiring.polarity());
        let output_gain = set.add("ltc.output.gain", grp, filled(&[n], 1.0));
        let output_shift = set.add("ltc.output.shift", grp, Tensor::zeros(&[n]));
        let sensory_mask = Tensor::new(vec![p, q], wiring.sensory_mask())?;
        let mask = Tensor::new(vec![q, q], wiring.mask())?;
        Ok(Self {
            wiring,
            config,
            input_gain,
            input_shift,
            tau_raw,
            bias,
            sensory,
            recurrent,
            output_gain,
            output_shift,
            sensory_mask,
            mask,
        })
    }

    pub fn units(&self) -> usize {
        self.wiring.units()
    }

    pub fn outputs(&self) -> usize {
        self.wiring.spec.motor
    }

    /// Constrained quantities: τ = softplus(raw), w = softplus(raw)·mask.
    pub fn vars(&self, g: &mut Graph, p: &Bound) -> Result<LtcVars> {
        let tau = g.softplus(p[self.tau_raw]);
        let tau = g.shift(tau, 1e-6);
        let pop = |g: &mut Graph, ids: &[ParamId; 4], mask: &Tensor| -> Result<SynapseVars> {
            let m = g.leaf(mask);
            let w = g.softplus(p[ids[2]]);
            let w = g.mul(w, m)?;
            Ok(SynapseVars {
                slope: p[ids[0]],
                offset: p[ids[1]],
                weight: w,
                reversal: p[ids[3]],
            })
        };
        let sensory = pop(g, &self.sensory, &self.sensory_mask)?;
        let recurrent = pop(g, &self.recurrent, &self.mask)?;
        Ok(LtcVars {
            tau,
            bias: p[self.bias],
            sensory,
            recurrent,
        })
    }

    /// Maps raw inputs through the affine input layer.
    pub fn map_input(&self, g: &mut Graph, p: &Bound, u: Var) -> Result<Var> {
        let u = g.mul(u, p[self.input_gain])?;
        g.add(u, p[self.input_shift])
    }

    pub fn step(&self, g: &mut Graph, p: &Bound, vars: &LtcVars, x: Var, u: Var) -> Result<Var> {
        let u = self.map_input(g, p, u)?;
        ltc_fused_step(g, &self.config, vars, x, u)
    }

    /// Motor neurons through the affine output layer.
    pub fn readout(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let motor = self.wiring.spec.motor_range();
        let y = g.slice_cols(x, motor.start, motor.len())?;
        let y = g.mul(y, p[self.output_gain])?;
        g.add(y, p[self.output_shift])
    }
}

impl Parametrized for LtcCell {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.input_gain, self.input_shift, self.tau_raw, self.bias];
        ids.extend(self.sensory);
        ids.extend(self.recurrent);
        ids.extend([self.output_gain, self.output_shift]);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_neuron(tau: f64, bias: f64, w: f64, a: f64, slope: f64) -> LtcCellParams {
        LtcCellParams::new(
            1,
            vec![tau],
            vec![bias],
            [vec![slope], vec![0.0], vec![w], vec![a]],
            [vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
            LtcConfig { unfold_steps: 1, dt: 0.5 },
        )
        .unwrap()
    }

    #[test]
    fn pure_leak_without_synaptic_drive() {
        let cell = single_neuron(2.0, 0.0, 0.0, 1.0, 1.0);
        let x = cell.step(&[0.8], &[0.3]).unwrap();
        assert!((x[0] - 0.8 / (1.0 + 0.5 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn saturated_strong_synapse_pins_to_reversal() {
        let cell = single_neuron(1.0, 0.0, 1e9, -0.7, 50.0);
        let x = cell.step(&[0.4], &[10.0]).unwrap();
        assert!((x[0] + 0.7).abs() < 1e-6, "{}", x[0]);
    }

    #[test]
    fn non_positive_tau_is_rejected() {
        let r = LtcCellParams::new(
            1,
            vec![0.0],
            vec![0.0],
            [vec![1.0], vec![0.0], vec![1.0], vec![1.0]],
            [vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
            LtcConfig::default(),
        );
        assert!(r.is_err());
        assert!(LtcConfig { unfold_steps: 0, dt: 1.0 }.validate().is_err());
        assert!(LtcConfig { unfold_steps: 1, dt: 0.0 }.validate().is_err());
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for y in [0.01, 0.5, 1.0, 3.0] {
            assert!((crate::kernels::softplus(inverse_softplus(y)) - y).abs() < 1e-12);
        }
    }
}
