use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamGroup, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamScalars {
    pub encoder_lr: f64,
    pub predictor_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

/// Bias-corrected Adam with one learning rate per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub scalars: AdamScalars,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, encoder_lr: f64, predictor_lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
        Self {
            scalars: AdamScalars {
                encoder_lr,
                predictor_lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                step: 0,
            },
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Encoder => self.scalars.encoder_lr,
            ParamGroup::Predictor => self.scalars.predictor_lr,
        }
    }

    pub fn lrs_mut(&mut self) -> [&mut f64; 2] {
        [&mut self.scalars.encoder_lr, &mut self.scalars.predictor_lr]
    }

    /// One update from the gradients held in `params`. Fails before touching
    /// any parameter if a gradient is not finite.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for e in params.entries() {
            if let Some(g) = e.tensor.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient(e.name.clone()));
                }
            }
        }
        let s = &mut self.scalars;
        s.step += 1;
        let (b1, b2) = (s.beta1, s.beta2);
        let c1 = 1.0 - b1.powi(s.step as i32);
        let c2 = 1.0 - b2.powi(s.step as i32);
        let (enc, pred, eps) = (s.encoder_lr, s.predictor_lr, s.eps);
        for (i, e) in params.entries_mut().iter_mut().enumerate() {
            let Some(grad) = e.tensor.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let lr = match e.group {
                ParamGroup::Encoder => enc,
                ParamGroup::Predictor => pred,
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in e.tensor.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 3,
            min_delta: 1e-4,
            min_lr: 1e-6,
        }
    }
}

/// Reduces learning rates when the monitored score (higher is better) stalls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub config: SchedulerConfig,
    pub best: Option<f64>,
    pub bad: usize,
}

impl PlateauScheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Self {
            config,
            best: None,
            bad: 0,
        }
    }

    /// Records a validation score; returns true when the rates were reduced.
    pub fn observe(&mut self, value: f64, lrs: [&mut f64; 2]) -> bool {
        let improved = value.is_finite() && self.best.is_none_or(|b| value > b + self.config.min_delta);
        if improved {
            self.best = Some(value);
            self.bad = 0;
            return false;
        }
        self.bad += 1;
        if self.bad < self.config.patience {
            return false;
        }
        self.bad = 0;
        for lr in lrs {
            *lr = (*lr * self.config.factor).max(self.config.min_lr);
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once the best score is `patience` validations old. NaN scores
/// never count as improvements.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_index: usize,
    pub seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_index: 0,
            seen: 0,
        }
    }

    /// True when `value` is a new best.
    pub fn observe(&mut self, value: f64) -> bool {
        self.seen += 1;
        if value.is_finite() && self.best.is_none_or(|b| value > b) {
            self.best = Some(value);
            self.best_index = self.seen;
            return true;
        }
        false
    }

    pub fn decision(&self) -> StopDecision {
        if self.seen - self.best_index >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Convenience for a whole history.
pub fn early_stop(history: &[f64], patience: usize) -> StopDecision {
    let mut es = EarlyStopping::new(patience);
    for &v in history {
        es.observe(v);
    }
    es.decision()
}
