//! Central finite-difference gradient checks over every layer and cell.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use retinode::cfc::{CfcCell, CfcConfig, WiredCfc};
use retinode::graph::{Graph, Var};
use retinode::layers::{Activation, Conv2dLayer, DenseLayer, Encoder, EncoderConfig, LstmCell, FRAME_SIDE};
use retinode::ltc::{LtcCell, LtcConfig};
use retinode::params::{Bound, ParamGroup, ParamSet};
use retinode::tensor::Tensor;
use retinode::train::loss::{loss, LossKind};
use retinode::wiring::{build_ncp, WiringSpec};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const PROBES: usize = 24;

/// Gradients below this magnitude are compared in absolute terms; central
/// differences cannot resolve them relative to the rounding floor.
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: &'static str,
    pub probes: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.probes >= 20 && self.max_rel_err < TOLERANCE
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

type Forward<'a> = dyn Fn(&mut Graph, &Bound, &[Var]) -> Var + 'a;

/// Scalar objective `Σ out ⊙ c` with fixed non-uniform weights `c`, so every
/// output element contributes with a distinct sensitivity.
fn objective(g: &mut Graph, out: Var) -> Var {
    let n = g.value(out).len();
    let shape = g.shape(out).to_vec();
    let c: Vec<f64> = (0..n).map(|i| (0.37 * i as f64 + 0.3).sin() + 0.1).collect();
    let c = g.constant(&shape, c).unwrap();
    let prod = g.mul(out, c).unwrap();
    g.sum(prod)
}

fn evaluate(set: &ParamSet, inputs: &[Tensor], f: &Forward<'_>) -> f64 {
    let mut g = Graph::new();
    let p = set.bind(&mut g);
    let xs: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = f(&mut g, &p, &xs);
    let l = objective(&mut g, out);
    g.value(l)[0]
}

/// Compares backprop gradients with central differences on `probes` random
/// coordinates drawn over all parameters and inputs.
pub fn check(name: &'static str, set: &ParamSet, inputs: Vec<Tensor>, seed: u64, f: &Forward<'_>) -> GradReport {
    let inputs: Vec<Tensor> = inputs.into_iter().map(Tensor::with_grad).collect();
    let mut g = Graph::new();
    let p = set.bind(&mut g);
    let xs: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = f(&mut g, &p, &xs);
    let l = objective(&mut g, out);
    g.backward(l).unwrap();
    let mut grads = set.clone();
    grads.zero_grads();
    grads.accumulate_grads(&g, &p);
    let param_grads: Vec<Vec<f64>> = grads
        .entries()
        .iter()
        .map(|e| e.tensor.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; e.tensor.numel()]))
        .collect();
    let input_grads: Vec<Vec<f64>> = xs
        .iter()
        .zip(&inputs)
        .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let slots = set.len() + inputs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport {
        name,
        probes: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for _ in 0..PROBES {
        let slot = rng.gen_range(0..slots);
        let (label, analytic, numeric) = if slot < set.len() {
            let numel = set.entries()[slot].tensor.numel();
            let i = rng.gen_range(0..numel);
            let mut probe = set.clone();
            let orig = probe.entries()[slot].tensor.data()[i];
            probe.entries_mut()[slot].tensor.data_mut()[i] = orig + STEP;
            let up = evaluate(&probe, &inputs, f);
            probe.entries_mut()[slot].tensor.data_mut()[i] = orig - STEP;
            let down = evaluate(&probe, &inputs, f);
            let label = format!("{}[{i}]", set.entries()[slot].name);
            (label, param_grads[slot][i], (up - down) / (2.0 * STEP))
        } else {
            let k = slot - set.len();
            let i = rng.gen_range(0..inputs[k].numel());
            let mut probe = inputs.clone();
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + STEP;
            let up = evaluate(set, &probe, f);
            probe[k].data_mut()[i] = orig - STEP;
            let down = evaluate(set, &probe, f);
            (format!("input{k}[{i}]"), input_grads[k][i], (up - down) / (2.0 * STEP))
        };
        let e = rel_err(analytic, numeric);
        report.probes += 1;
        if e > report.max_rel_err || report.worst.is_empty() {
            report.max_rel_err = report.max_rel_err.max(e);
            report.worst = format!("{label}: analytic {analytic:.6e} numeric {numeric:.6e}");
        }
    }
    report
}

/// Gradient checks for every layer, both continuous-time cells, the synapse
/// op and the losses.
pub fn suite(seed: u64) -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    {
        let mut set = ParamSet::new();
        let d = DenseLayer::new(&mut set, &mut rng, "dense", ParamGroup::Predictor, 5, 4, Activation::Tanh);
        randomize(&mut set, &mut rng, 0.5);
        let x = uniform_tensor(&mut rng, &[3, 5], -1.0, 1.0);
        out.push(check("dense", &set, vec![x], seed, &|g, p, xs| d.forward(g, p, xs[0]).unwrap()));
    }
    for (name, k, stride, pad, side) in [("conv2d", 3, 1, 1, 6), ("conv2d strided", 5, 2, 2, 9)] {
        let mut set = ParamSet::new();
        let c = Conv2dLayer::new(&mut set, &mut rng, "conv", ParamGroup::Encoder, 2, 3, k, stride, pad).unwrap();
        randomize(&mut set, &mut rng, 0.5);
        let x = uniform_tensor(&mut rng, &[2, 2, side, side], -1.0, 1.0);
        out.push(check(name, &set, vec![x], seed + 1, &|g, p, xs| c.forward(g, p, xs[0]).unwrap()));
    }
    {
        let mut set = ParamSet::new();
        let gain = set.add("norm.gain", ParamGroup::Encoder, uniform_tensor(&mut rng, &[3], 0.5, 1.5));
        let bias = set.add("norm.bias", ParamGroup::Encoder, uniform_tensor(&mut rng, &[3], -0.5, 0.5));
        let x = uniform_tensor(&mut rng, &[2, 3, 4, 4], -2.0, 2.0);
        out.push(check("layer_norm", &set, vec![x], seed + 2, &|g, p, xs| {
            g.layer_norm(xs[0], p[gain], p[bias]).unwrap()
        }));
    }
    {
        let set = ParamSet::new();
        let x = uniform_tensor(&mut rng, &[2, 2, 6, 6], -1.0, 1.0);
        out.push(check("max_pool2", &set, vec![x], seed + 3, &|g, _, xs| g.max_pool2(xs[0]).unwrap()));
    }
    {
        let mut set = ParamSet::new();
        let cfg = EncoderConfig {
            channels: vec![3, 2],
            kernel: 3,
            pooled_blocks: 1,
            stem_stride: 2,
        };
        let enc = Encoder::new(&mut set, &mut rng, &cfg, 3, 4).unwrap();
        let x = uniform_tensor(&mut rng, &[2, 3, FRAME_SIDE, FRAME_SIDE], -1.0, 1.0);
        out.push(check("encoder", &set, vec![x], seed + 4, &|g, p, xs| enc.forward(g, p, xs[0]).unwrap()));
    }
    {
        let mut set = ParamSet::new();
        let cell = LstmCell::new(&mut set, &mut rng, "lstm", 4, 3);
        randomize(&mut set, &mut rng, 0.3);
        let u = uniform_tensor(&mut rng, &[2, 2, 4], -1.0, 1.0);
        let h0 = uniform_tensor(&mut rng, &[2, 3], -0.5, 0.5);
        let c0 = uniform_tensor(&mut rng, &[2, 3], -0.5, 0.5);
        out.push(check("lstm cell", &set, vec![u, h0, c0], seed + 5, &|g, p, xs| {
            let (mut h, mut c) = (xs[1], xs[2]);
            for t in 0..2 {
                let ut = frame(g, xs[0], t, 2, 4);
                (h, c) = cell.step(g, p, ut, h, c).unwrap();
            }
            g.concat_cols(&[h, c]).unwrap()
        }));
    }
    {
        let mut set = ParamSet::new();
        let ids: Vec<_> = ["slope", "offset", "weight", "reversal"]
            .iter()
            .map(|n| {
                let (lo, hi) = match *n {
                    "slope" => (2.0, 6.0),
                    "weight" => (0.1, 1.0),
                    _ => (-1.0, 1.0),
                };
                set.add(*n, ParamGroup::Predictor, uniform_tensor(&mut rng, &[4, 5], lo, hi))
            })
            .collect();
        let pre = uniform_tensor(&mut rng, &[3, 4], -1.0, 1.0);
        out.push(check("synapse", &set, vec![pre], seed + 6, &|g, p, xs| {
            g.synapse(xs[0], p[ids[0]], p[ids[1]], p[ids[2]], p[ids[3]]).unwrap()
        }));
    }
    {
        let wiring = build_ncp(&WiringSpec::auto(4, 6, 2), seed).unwrap();
        let mut set = ParamSet::new();
        let cell = LtcCell::new(&mut set, &mut rng, wiring, LtcConfig { unfold_steps: 3, dt: 1.0 }).unwrap();
        let q = cell.units();
        let u = uniform_tensor(&mut rng, &[2, 2, 4], -1.0, 1.0);
        let x0 = uniform_tensor(&mut rng, &[2, q], -0.5, 0.5);
        out.push(check("ltc cell", &set, vec![u, x0], seed + 7, &|g, p, xs| {
            let vars = cell.vars(g, p).unwrap();
            let mut x = xs[1];
            for t in 0..2 {
                let ut = frame(g, xs[0], t, 2, 4);
                x = cell.step(g, p, &vars, x, ut).unwrap();
            }
            cell.readout(g, p, x).unwrap()
        }));
    }
    {
        let mut set = ParamSet::new();
        let cell = CfcCell::new(&mut set, &mut rng, "cfc", 4, 3, None).unwrap();
        randomize(&mut set, &mut rng, 0.4);
        let u = uniform_tensor(&mut rng, &[2, 2, 4], -1.0, 1.0);
        let x0 = uniform_tensor(&mut rng, &[2, 3], -0.5, 0.5);
        out.push(check("cfc cell", &set, vec![u, x0], seed + 8, &|g, p, xs| {
            let mut x = xs[1];
            for t in 0..2 {
                let ut = frame(g, xs[0], t, 2, 4);
                x = cell.step(g, p, x, ut, 0.7).unwrap();
            }
            x
        }));
    }
    {
        let wiring = build_ncp(&WiringSpec::auto(4, 6, 2), seed + 1).unwrap();
        let mut set = ParamSet::new();
        let cell = WiredCfc::new(&mut set, &mut rng, wiring, CfcConfig::default()).unwrap();
        randomize(&mut set, &mut rng, 0.4);
        let q = cell.units();
        let u = uniform_tensor(&mut rng, &[2, 2, 4], -1.0, 1.0);
        let x0 = uniform_tensor(&mut rng, &[2, q], -0.5, 0.5);
        out.push(check("wired cfc", &set, vec![u, x0], seed + 9, &|g, p, xs| {
            let mut x = xs[1];
            for t in 0..2 {
                let ut = frame(g, xs[0], t, 2, 4);
                x = cell.step(g, p, x, ut, 1.0).unwrap();
            }
            cell.readout(g, p, x).unwrap()
        }));
    }
    for (name, kind) in [("mse loss", LossKind::Mse), ("mae loss", LossKind::Mae), ("poisson loss", LossKind::Poisson)] {
        let set = ParamSet::new();
        let pred = uniform_tensor(&mut rng, &[4, 3], 0.1, 2.0);
        let target = uniform_tensor(&mut rng, &[4, 3], 0.0, 2.0);
        out.push(check(name, &set, vec![pred, target], seed + 10, &|g, _, xs| loss(g, kind, xs[0], xs[1]).unwrap()));
    }
    out
}

/// Overwrites every parameter with `U(−a, a)` so zero-initialised biases and
/// unit gains do not hide mistakes.
fn randomize(set: &mut ParamSet, rng: &mut ChaCha8Rng, a: f64) {
    for e in set.entries_mut() {
        for v in e.tensor.data_mut() {
            *v += rng.gen_range(-a..a);
        }
    }
}

/// Step `t` of a `[B, T·width]` sequence input laid out as `[B, T, width]`.
fn frame(g: &mut Graph, seq: Var, t: usize, steps: usize, width: usize) -> Var {
    let b = g.shape(seq)[0];
    let flat = g.reshape(seq, &[b, steps * width]).unwrap();
    g.slice_cols(flat, t * width, width).unwrap()
}
