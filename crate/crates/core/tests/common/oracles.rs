//! Independent reference computations used to check the library.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};

use retinode::cfc::CfcCell;
use retinode::graph::Graph;
use retinode::kernels::softplus;
use retinode::ltc::{LtcCell, LtcCellParams, LtcConfig};
use retinode::params::{ParamId, ParamSet};
use retinode::wiring::{build_ncp, WiringSpec};

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

// ---------------------------------------------------------------- LTC solver

/// Classical fourth-order Runge–Kutta on the LTC vector field.
pub fn rk4(cell: &LtcCellParams, x0: &[f64], u: &[f64], h: f64, steps: usize) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    let axpy = |x: &[f64], k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    for _ in 0..steps {
        let k1 = cell.derivative(&x, u);
        let k2 = cell.derivative(&axpy(&x, &k1, h / 2.0), u);
        let k3 = cell.derivative(&axpy(&x, &k2, h / 2.0), u);
        let k4 = cell.derivative(&axpy(&x, &k3, h), u);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x.clone());
    }
    out
}

/// A cell drawn from the model's own initialisation: NCP wiring, positive
/// time constants and masked non-negative conductances.
pub fn random_ltc(seed: u64, inputs: usize, hidden: usize, dt: f64) -> LtcCellParams {
    let wiring = build_ncp(&WiringSpec::auto(inputs, hidden, 2), seed).unwrap();
    let mut set = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = LtcCell::new(&mut set, &mut rng, wiring.clone(), LtcConfig::default()).unwrap();
    let get = |id| set.get(id).data().to_vec();
    let constrained = |ids: &[ParamId; 4], mask: Vec<f64>| -> [Vec<f64>; 4] {
        let w = get(ids[2]).iter().zip(&mask).map(|(r, m)| softplus(*r) * m).collect();
        [get(ids[0]), get(ids[1]), w, get(ids[3])]
    };
    let tau = get(cell.tau_raw).iter().map(|r| softplus(*r) + 1e-6).collect();
    LtcCellParams::new(
        inputs,
        tau,
        get(cell.bias),
        constrained(&cell.sensory, wiring.sensory_mask()),
        constrained(&cell.recurrent, wiring.mask()),
        LtcConfig { unfold_steps: 1, dt },
    )
    .unwrap()
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    /// `(dt, max-abs error against the reference)` over a unit horizon.
    pub errors: Vec<(f64, f64)>,
    /// Max-abs error of 100 steps at dt = 0.01.
    pub fine_error: f64,
}

impl SolverReport {
    pub fn monotone(&self) -> bool {
        self.errors.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

/// Runs the fused step at several `dt` over a unit horizon and compares every
/// visited state with a fine RK4 trajectory. Cells come from the model
/// initialisation and start from the zero state, as in a sequence run.
pub fn solver_consistency(seed: u64) -> SolverReport {
    const H: f64 = 1e-4;
    let (inputs, hidden, batch) = (3, 6, 4);
    let units = hidden + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x0 = vec![0.0; batch * units];
    let u = uniform(&mut rng, batch * inputs, -1.0, 1.0);
    let reference = rk4(&random_ltc(seed, inputs, hidden, 1.0), &x0, &u, H, 10_000);
    let error = |dt: f64| -> f64 {
        let cell = random_ltc(seed, inputs, hidden, dt);
        let steps = (1.0 / dt).round() as usize;
        let stride = (dt / H).round() as usize;
        let mut x = x0.clone();
        let mut worst: f64 = 0.0;
        for k in 1..=steps {
            x = cell.step(&x, &u).unwrap();
            let r = &reference[k * stride];
            worst = x.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        worst
    };
    SolverReport {
        errors: [0.1, 0.05, 0.025].iter().map(|&dt| (dt, error(dt))).collect(),
        fine_error: error(0.01),
    }
}

// ---------------------------------------------------------------- CfC probes

#[derive(Debug, Clone, Copy)]
pub struct CfcProbeReport {
    pub probes: usize,
    /// Largest distance of an output outside `[min(g, h), max(g, h)]`.
    pub convexity_violation: f64,
    /// Largest `|out − (g + h)/2|` at zero elapsed time.
    pub midpoint_error: f64,
}

/// Random cells, inputs, states and elapsed times; `probes` rows in total.
pub fn cfc_properties(seed: u64, probes: usize) -> CfcProbeReport {
    let (inputs, hidden, cells) = (5, 8, 10);
    let rows = probes.div_ceil(cells);
    let mut report = CfcProbeReport {
        probes: 0,
        convexity_violation: 0.0,
        midpoint_error: 0.0,
    };
    for c in 0..cells {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + c as u64);
        let mut set = ParamSet::new();
        let cell = CfcCell::new(&mut set, &mut rng, "cfc", inputs, hidden, None).unwrap();
        let scale = rng.gen_range(0.5..3.0);
        for e in set.entries_mut() {
            for v in e.tensor.data_mut() {
                *v = *v * scale + rng.gen_range(-1.0..1.0);
            }
        }
        let x = uniform(&mut rng, rows * hidden, -1.0, 1.0);
        let u = uniform(&mut rng, rows * inputs, -3.0, 3.0);
        let t = rng.gen_range(0.0..10.0);
        for elapsed in [t, 0.0] {
            let mut g = Graph::new();
            let p = set.bind(&mut g);
            let xv = g.constant(&[rows, hidden], x.clone()).unwrap();
            let uv = g.constant(&[rows, inputs], u.clone()).unwrap();
            let parts = cell.step_parts(&mut g, &p, xv, uv, elapsed).unwrap();
            let (gv, hv, out) = (g.value(parts.g), g.value(parts.h), g.value(parts.out));
            for i in 0..out.len() {
                let (lo, hi) = (gv[i].min(hv[i]), gv[i].max(hv[i]));
                let v = (lo - out[i]).max(out[i] - hi).max(0.0);
                report.convexity_violation = report.convexity_violation.max(v);
                if elapsed == 0.0 {
                    let mid = 0.5 * (gv[i] + hv[i]);
                    report.midpoint_error = report.midpoint_error.max((out[i] - mid).abs());
                }
            }
        }
        report.probes += rows;
    }
    report
}

// ---------------------------------------------------------------- statistics

/// Raw-moment Pearson formula.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

pub fn ci95(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let m = v.iter().sum::<f64>() / r;
    let s2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0);
    let t = StudentsT::new(0.0, 1.0, r - 1.0).unwrap().inverse_cdf(0.975);
    let half = t * (s2 / r).sqrt();
    (m - half, m + half)
}

/// Textbook one-way ANOVA returning `(F, p)`.
pub fn anova(groups: &[Vec<f64>]) -> (f64, f64) {
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let f = (ssb / (k - 1.0)) / (ssw / (n - k));
    (f, FisherSnedecor::new(k - 1.0, n - k).unwrap().sf(f))
}

/// Levene's test as ANOVA on absolute deviations from group means.
pub fn levene(groups: &[Vec<f64>]) -> (f64, f64) {
    let dev: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    anova(&dev)
}

pub fn jarque_bera(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let c = |k: i32| x.iter().map(|v| (v - m).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (c(2), c(3), c(4));
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    (jb, ChiSquared::new(2.0).unwrap().sf(jb))
}

pub fn normal_sample(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Fixed fixtures shared by the statistics tests.
pub fn fixture_groups() -> Vec<Vec<f64>> {
    vec![
        vec![0.569, 0.561, 0.574, 0.566, 0.571],
        vec![0.421, 0.384, 0.45, 0.40, 0.455],
        vec![0.48, 0.47, 0.49, 0.485, 0.475],
    ]
}

pub fn fixture_residuals() -> Vec<f64> {
    vec![0.3, -1.2, 0.8, 2.5, -0.4, 0.1, -0.9, 1.7, -2.2, 0.6, 0.05, -0.3]
}
