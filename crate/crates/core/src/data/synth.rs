//! Synthetic stimulus/response generator.
//!
//! Stimulus: smooth grayscale textures viewed through a 50×50 aperture that
//! jitters by a Gaussian random walk and jumps to a fresh texture every
//! `saccade_period` frames. Responses: one linear-nonlinear unit per channel,
//! a difference-of-Gaussians spatial filter followed by a high-pass stage,
//! a fixed per-channel lag and a softplus that is thresholded at the
//! `sparsity_target` quantile.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::softplus;
use crate::layers::FRAME_SIDE;
use crate::params::stream_rng;

use super::recording::{RecordingSet, Splits, FRAME_PIXELS};

const TEXTURE_SIDE: usize = 2 * FRAME_SIDE;
/// Weight of the slow average removed from the drive.
pub const HIGHPASS_WEIGHT: f64 = 0.8;
/// Update rate of that slow average.
pub const HIGHPASS_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub t: usize,
    pub n: usize,
    pub seed: u64,
    /// Inclusive lag bounds in frames.
    pub lag_range: [usize; 2],
    /// Target fraction of zero responses.
    pub sparsity_target: f64,
    pub saccade_period: usize,
    /// Random-walk step in pixels per frame.
    pub jitter_sigma: f64,
    /// Gain on the standardised drive before the softplus.
    pub gain: f64,
    /// Std of additive noise before the softplus, in drive units.
    pub noise: f64,
    /// Peak firing rate scale.
    pub rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            t: 20_000,
            n: 9,
            seed: 0,
            lag_range: [8, 12],
            sparsity_target: 0.8,
            saccade_period: 100,
            jitter_sigma: 0.5,
            gain: 2.0,
            noise: 0.3,
            rate: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.lag_range;
        if lo > hi || hi >= 40 {
            return Err(Error::Invalid(format!("lag range [{lo}, {hi}] must satisfy lo <= hi < 40")));
        }
        if self.t <= 60 {
            return Err(Error::Invalid(format!("synthetic recordings need T > 60, got {}", self.t)));
        }
        if self.n == 0 {
            return Err(Error::Invalid("synthetic recordings need n >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.sparsity_target) {
            return Err(Error::Invalid(format!("sparsity target {} outside [0, 1)", self.sparsity_target)));
        }
        if self.saccade_period == 0 || !(self.jitter_sigma >= 0.0) || !(self.noise >= 0.0) || !(self.rate > 0.0) {
            return Err(Error::Invalid("saccade period, jitter, noise and rate must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Spatial filter over a 50×50 frame, pixels scaled to `[0, 1]`.
    pub filter: Vec<f64>,
    pub lag: usize,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub recording: RecordingSet,
    pub channels: Vec<ChannelModel>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<RecordingSet> {
    Ok(generate_with_truth(cfg)?.recording)
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let frames = stimulus(cfg);
    let mut rng = stream_rng(cfg.seed, 11);
    let channels: Vec<ChannelModel> = (0..cfg.n)
        .map(|_| ChannelModel {
            filter: dog_filter(&mut rng),
            lag: rng.gen_range(cfg.lag_range[0]..=cfg.lag_range[1]),
        })
        .collect();

    let mut noise_rng = stream_rng(cfg.seed, 12);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut responses = vec![0f32; cfg.t * cfg.n];
    for (c, ch) in channels.iter().enumerate() {
        let hp = highpass(&drive(&frames, &ch.filter));
        let (mean, std) = mean_std(&hp);
        let act: Vec<f64> = (0..cfg.t)
            .map(|t| {
                let z = if t >= ch.lag { (hp[t - ch.lag] - mean) / std } else { 0.0 };
                softplus(cfg.gain * z + cfg.noise * normal.sample(&mut noise_rng))
            })
            .collect();
        let threshold = quantile(&act, cfg.sparsity_target);
        for (t, a) in act.iter().enumerate() {
            responses[t * cfg.n + c] = (cfg.rate * (a - threshold).max(0.0)) as f32;
        }
    }
    let recording = RecordingSet::new(frames, responses, cfg.n, Splits::default_for(cfg.t))?;
    Ok(Synthetic { recording, channels })
}

/// Filter output per frame.
pub fn drive(frames: &[u8], filter: &[f64]) -> Vec<f64> {
    frames
        .chunks_exact(FRAME_PIXELS)
        .map(|f| f.iter().zip(filter).map(|(&p, &w)| p as f64 / 255.0 * w).sum())
        .collect()
}

/// `d_t − 0.8·s_{t−1}` where `s` is an exponential average of `d`.
pub fn highpass(d: &[f64]) -> Vec<f64> {
    let mut slow = d.first().copied().unwrap_or(0.0);
    d.iter()
        .map(|&v| {
            let out = v - HIGHPASS_WEIGHT * slow;
            slow += HIGHPASS_RATE * (v - slow);
            out
        })
        .collect()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
    (mean, var.sqrt().max(1e-12))
}

fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((s.len() as f64 * q).floor() as usize).min(s.len() - 1);
    s[idx]
}

fn dog_filter(rng: &mut impl Rng) -> Vec<f64> {
    let cx = rng.gen_range(12.0..38.0);
    let cy = rng.gen_range(12.0..38.0);
    let sc: f64 = rng.gen_range(1.5..3.0);
    let ss = 2.0 * sc;
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let gauss = |s: f64| -> Vec<f64> {
        let g: Vec<f64> = (0..FRAME_PIXELS)
            .map(|i| {
                let (y, x) = ((i / FRAME_SIDE) as f64, (i % FRAME_SIDE) as f64);
                (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
            })
            .collect();
        let total: f64 = g.iter().sum();
        g.into_iter().map(|v| v / total).collect()
    };
    let (c, s) = (gauss(sc), gauss(ss));
    c.iter().zip(&s).map(|(a, b)| sign * (a - 0.9 * b)).collect()
}

fn texture(rng: &mut impl Rng) -> Vec<f64> {
    let side = TEXTURE_SIDE;
    let mut tex = vec![0.0; side * side];
    for _ in 0..60 {
        let cx = rng.gen_range(0.0..side as f64);
        let cy = rng.gen_range(0.0..side as f64);
        let s: f64 = rng.gen_range(1.5..6.0);
        let amp = rng.gen_range(0.4..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let reach = (3.0 * s).ceil() as isize;
        for y in (cy as isize - reach).max(0)..(cy as isize + reach + 1).min(side as isize) {
            for x in (cx as isize - reach).max(0)..(cx as isize + reach + 1).min(side as isize) {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                tex[y as usize * side + x as usize] += amp * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }
    let lo = tex.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    tex.iter().map(|v| (v - lo) / span * 255.0).collect()
}

fn sample_bilinear(tex: &[f64], x: f64, y: f64) -> f64 {
    let side = TEXTURE_SIDE;
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(side - 1), (y0 + 1).min(side - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |xx: usize, yy: usize| tex[yy * side + xx];
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

fn stimulus(cfg: &SynthConfig) -> Vec<u8> {
    let mut tex_rng = stream_rng(cfg.seed, 13);
    let mut walk_rng = stream_rng(cfg.seed, 14);
    let step = Normal::new(0.0, cfg.jitter_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let max_off = (TEXTURE_SIDE - FRAME_SIDE) as f64 - 1.0;
    let reflect = |v: f64| {
        if v < 0.0 {
            -v
        } else if v > max_off {
            2.0 * max_off - v
        } else {
            v
        }
        .clamp(0.0, max_off)
    };
    let mut frames = Vec::with_capacity(cfg.t * FRAME_PIXELS);
    let mut tex = Vec::new();
    let (mut ox, mut oy) = (0.0, 0.0);
    for t in 0..cfg.t {
        if t % cfg.saccade_period == 0 {
            tex = texture(&mut tex_rng);
            ox = walk_rng.gen_range(0.0..max_off);
            oy = walk_rng.gen_range(0.0..max_off);
        } else if cfg.jitter_sigma > 0.0 {
            ox = reflect(ox + step.sample(&mut walk_rng));
            oy = reflect(oy + step.sample(&mut walk_rng));
        }
        for py in 0..FRAME_SIDE {
            for px in 0..FRAME_SIDE {
                let v = sample_bilinear(&tex, ox + px as f64, oy + py as f64);
                frames.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    frames
}
