//! Random search over the hyperparameter space of the recurrent models.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use retinode::data::RecordingSet;
use retinode::model::ModelKind;
use retinode::params::stream_rng;
use retinode::sequence::SequencePlan;
use retinode::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub subsequence: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub latent_size: Vec<usize>,
    pub hidden_size: Vec<usize>,
    pub model: Vec<ModelKind>,
    /// Uniform bounds `[lo, hi]`.
    pub encoder_lr: [f64; 2],
    pub predictor_lr: [f64; 2],
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            subsequence: vec![20, 30, 40],
            batch_size: vec![2048, 4096, 8192],
            latent_size: vec![16, 32, 64],
            hidden_size: vec![12, 14, 16, 20],
            model: vec![ModelKind::Ltc, ModelKind::Cfc],
            encoder_lr: [1e-5, 0.1],
            predictor_lr: [1e-4, 0.3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub model: ModelKind,
    pub subsequence: usize,
    pub batch_size: usize,
    pub latent_size: usize,
    pub hidden_size: usize,
    pub encoder_lr: f64,
    pub predictor_lr: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.subsequence.is_empty()
                && !self.batch_size.is_empty()
                && !self.latent_size.is_empty()
                && !self.hidden_size.is_empty()
                && !self.model.is_empty(),
            "every categorical sweep axis needs at least one value"
        );
        for [lo, hi] in [self.encoder_lr, self.predictor_lr] {
            ensure!(lo > 0.0 && lo < hi, "learning-rate bounds must satisfy 0 < lo < hi, got [{lo}, {hi}]");
        }
        Ok(())
    }

    /// Trial `index` of a sweep; independent of how many trials run or in
    /// which order.
    pub fn sample(&self, seed: u64, index: usize) -> Trial {
        let mut rng = stream_rng(seed, 10_000 + index as u64);
        Trial {
            model: *self.model.choose(&mut rng).expect("validated"),
            subsequence: *self.subsequence.choose(&mut rng).expect("validated"),
            batch_size: *self.batch_size.choose(&mut rng).expect("validated"),
            latent_size: *self.latent_size.choose(&mut rng).expect("validated"),
            hidden_size: *self.hidden_size.choose(&mut rng).expect("validated"),
            encoder_lr: rng.gen_range(self.encoder_lr[0]..self.encoder_lr[1]),
            predictor_lr: rng.gen_range(self.predictor_lr[0]..self.predictor_lr[1]),
        }
    }

    pub fn contains(&self, t: &Trial) -> bool {
        let within = |v: f64, [lo, hi]: [f64; 2]| (lo..hi).contains(&v);
        self.model.contains(&t.model)
            && self.subsequence.contains(&t.subsequence)
            && self.batch_size.contains(&t.batch_size)
            && self.latent_size.contains(&t.latent_size)
            && self.hidden_size.contains(&t.hidden_size)
            && within(t.encoder_lr, self.encoder_lr)
            && within(t.predictor_lr, self.predictor_lr)
    }
}

impl Trial {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.name = String::new();
        cfg.model = self.model;
        cfg.plan = SequencePlan {
            m: 1,
            n: self.subsequence,
            w: 0,
        };
        cfg.batch_size = self.batch_size;
        cfg.micro_batch = cfg.micro_batch.min(self.batch_size);
        cfg.latent_size = self.latent_size;
        cfg.hidden_size = self.hidden_size;
        cfg.encoder_lr = self.encoder_lr;
        cfg.predictor_lr = self.predictor_lr;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Runs(usize),
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub index: usize,
    pub trial: Trial,
    pub seed: u64,
    /// Best validation ρ; NaN when training diverged.
    pub val_rho: f64,
    pub epochs: usize,
    pub seconds: f64,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub rank: usize,
    pub run: usize,
    pub model: String,
    pub subsequence: usize,
    pub batch_size: usize,
    pub latent_size: usize,
    pub hidden_size: usize,
    pub encoder_lr: f64,
    pub predictor_lr: f64,
    pub seed: u64,
    pub val_rho: f64,
    pub epochs: usize,
    pub seconds: f64,
}

/// Descending validation ρ; diverged runs last, ties by run index.
pub fn rank(runs: &mut [SweepRun]) {
    runs.sort_by(|a, b| {
        let key = |r: &SweepRun| if r.val_rho.is_finite() { r.val_rho } else { f64::NEG_INFINITY };
        key(b).total_cmp(&key(a)).then(a.index.cmp(&b.index))
    });
}

pub fn rows(ranked: &[SweepRun]) -> Vec<SweepRow> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, r)| SweepRow {
            rank: i + 1,
            run: r.index,
            model: r.trial.model.to_string(),
            subsequence: r.trial.subsequence,
            batch_size: r.trial.batch_size,
            latent_size: r.trial.latent_size,
            hidden_size: r.trial.hidden_size,
            encoder_lr: r.trial.encoder_lr,
            predictor_lr: r.trial.predictor_lr,
            seed: r.seed,
            val_rho: r.val_rho,
            epochs: r.epochs,
            seconds: r.seconds,
        })
        .collect()
}

pub struct SweepOptions {
    pub budget: Budget,
    /// Epoch cap for every trial.
    pub epochs: usize,
    /// Concurrent trainings; 1 runs sequentially.
    pub workers: usize,
    pub seed: u64,
}

/// Runs trials until the budget is spent. A time budget is checked before a
/// trial starts, so the trial in flight always finishes.
pub fn run_sweep(
    base: &TrainConfig,
    rec: &RecordingSet,
    spec: &SweepSpec,
    opts: &SweepOptions,
    on_done: &(dyn Fn(&SweepRun) + Sync),
) -> Result<Vec<SweepRun>> {
    spec.validate()?;
    ensure!(opts.epochs >= 1, "sweep needs at least one epoch per trial");
    match opts.budget {
        Budget::Runs(n) => ensure!(n > 0, "sweep budget must be positive"),
        Budget::Seconds(s) => ensure!(s > 0.0, "sweep budget must be positive"),
    }
    let started = Instant::now();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    let failure = Mutex::new(None);
    let claim = || -> Option<usize> {
        if let Budget::Seconds(s) = opts.budget {
            if started.elapsed() >= Duration::from_secs_f64(s) {
                return None;
            }
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        match opts.budget {
            Budget::Runs(n) if i >= n => None,
            _ => Some(i),
        }
    };
    let worker = || {
        while let Some(index) = claim() {
            if failure.lock().expect("lock").is_some() {
                return;
            }
            let trial = spec.sample(opts.seed, index);
            let mut cfg = trial.apply(base);
            cfg.max_epochs = opts.epochs;
            cfg.seed = opts.seed.wrapping_add(index as u64);
            match train(&cfg, rec) {
                Ok(out) => {
                    let run = SweepRun {
                        index,
                        trial,
                        seed: cfg.seed,
                        val_rho: out.best.val_rho(),
                        epochs: out.epochs_run,
                        seconds: out.train_seconds,
                        diverged: out.diverged,
                    };
                    on_done(&run);
                    results.lock().expect("lock").push(run);
                }
                Err(e) => {
                    *failure.lock().expect("lock") = Some(anyhow::anyhow!("sweep run {index}: {e}"));
                    return;
                }
            }
        }
    };
    let workers = opts.workers.max(1);
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    let mut runs = results.into_inner().expect("lock");
    rank(&mut runs);
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_inside_the_space() {
        let spec = SweepSpec::default();
        for i in 0..500 {
            let t = spec.sample(3, i);
            assert!(spec.contains(&t), "{t:?}");
        }
        assert_eq!(spec.sample(3, 17), spec.sample(3, 17));
        assert_ne!(spec.sample(3, 17), spec.sample(4, 17));
    }

    #[test]
    fn every_category_gets_sampled() {
        let spec = SweepSpec::default();
        let trials: Vec<Trial> = (0..400).map(|i| spec.sample(0, i)).collect();
        for n in &spec.subsequence {
            assert!(trials.iter().any(|t| t.subsequence == *n));
        }
        for h in &spec.hidden_size {
            assert!(trials.iter().any(|t| t.hidden_size == *h));
        }
        assert!(trials.iter().any(|t| t.model == ModelKind::Ltc));
        assert!(trials.iter().any(|t| t.model == ModelKind::Cfc));
    }

    #[test]
    fn ranking_puts_diverged_runs_last() {
        let t = SweepSpec::default().sample(0, 0);
        let run = |index, val_rho| SweepRun {
            index,
            trial: t,
            seed: 0,
            val_rho,
            epochs: 1,
            seconds: 0.0,
            diverged: None,
        };
        let mut runs = vec![run(0, 0.2), run(1, f64::NAN), run(2, 0.5), run(3, 0.2)];
        rank(&mut runs);
        let order: Vec<usize> = runs.iter().map(|r| r.index).collect();
        assert_eq!(order, vec![2, 0, 3, 1]);
        assert_eq!(rows(&runs)[0].rank, 1);
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let spec = SweepSpec {
            encoder_lr: [0.1, 0.01],
            ..SweepSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn trial_overrides_the_base_config() {
        let t = Trial {
            model: ModelKind::Ltc,
            subsequence: 30,
            batch_size: 2048,
            latent_size: 64,
            hidden_size: 14,
            encoder_lr: 0.01,
            predictor_lr: 0.2,
        };
        let cfg = t.apply(&TrainConfig::default());
        assert_eq!(cfg.plan.total_frames(), 30);
        assert_eq!((cfg.batch_size, cfg.latent_size, cfg.hidden_size), (2048, 64, 14));
        assert_eq!(cfg.model, ModelKind::Ltc);
        cfg.validate().unwrap();
    }
}
