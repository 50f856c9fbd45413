use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{RecordingSet, Windows};
use crate::error::{invalid, Result};
use crate::model::Model;

use super::stats::{mean, variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub batch: usize,
    pub repetitions: usize,
    /// Untimed passes before measuring.
    pub warmup: usize,
    /// Caps the number of windows timed per repetition; `None` times the full split.
    pub max_samples: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch: 256,
            repetitions: 3,
            warmup: 1,
            max_samples: None,
        }
    }
}

/// Per-sample forward latency in seconds at one batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub batch: usize,
    pub samples: usize,
    pub repetitions: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

impl Latency {
    pub fn coefficient_of_variation(&self) -> f64 {
        self.std_seconds / self.mean_seconds
    }
}

/// Times the forward pass only; window assembly happens outside the clock.
pub fn time_forward(model: &Model, rec: &RecordingSet, windows: &Windows, batch: usize, cfg: &BenchConfig) -> Result<Latency> {
    if batch == 0 || cfg.repetitions == 0 {
        return Err(invalid("bench needs a positive batch and at least one repetition"));
    }
    let samples = cfg.max_samples.map_or(windows.len(), |m| m.min(windows.len()));
    if samples == 0 {
        return Err(invalid("no windows to time"));
    }
    let all: Vec<usize> = (0..samples).collect();
    let pass = || -> Result<f64> {
        let mut elapsed = 0.0;
        for chunk in all.chunks(batch) {
            let x = windows.batch_frames(rec, chunk);
            let t = Instant::now();
            let y = model.predict(&x)?;
            elapsed += t.elapsed().as_secs_f64();
            std::hint::black_box(y);
        }
        Ok(elapsed / samples as f64)
    };
    for _ in 0..cfg.warmup {
        pass()?;
    }
    let per_sample = (0..cfg.repetitions).map(|_| pass()).collect::<Result<Vec<f64>>>()?;
    Ok(Latency {
        batch,
        samples,
        repetitions: cfg.repetitions,
        mean_seconds: mean(&per_sample),
        std_seconds: if per_sample.len() > 1 { variance(&per_sample).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub single: Latency,
    pub batched: Latency,
    /// Window counts of the training and timed splits.
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Latency at batch size 1 and at the configured batch size.
pub fn bench_inference(
    model: &Model,
    rec: &RecordingSet,
    windows: &Windows,
    train_samples: usize,
    cfg: &BenchConfig,
) -> Result<TimingStats> {
    Ok(TimingStats {
        single: time_forward(model, rec, windows, 1, cfg)?,
        batched: time_forward(model, rec, windows, cfg.batch, cfg)?,
        train_samples,
        test_samples: windows.len(),
    })
}
