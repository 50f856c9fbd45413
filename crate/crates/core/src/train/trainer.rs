use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{fit_normalizer, make_windows, ChannelNormalizer, RecordingSet, Split, Windows};
use crate::error::{Error, Result};
use crate::eval::metrics::ChannelScores;
use crate::eval::predict::Predictions;
use crate::graph::Graph;
use crate::model::{Mode, Model};
use crate::params::stream_rng;

use super::checkpoint::{Checkpoint, CheckpointTag, Snapshot};
use super::config::{TrainConfig, ValidateEvery};
use super::loss::loss;
use super::optim::{Adam, EarlyStopping, PlateauScheduler, StopDecision};

/// One row of the `epoch,split,loss,rho` curves file. `epoch` counts
/// validations, which equal epochs unless validation runs every k samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub rho: f64,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("epoch,split,loss,rho\n");
    for r in rows {
        let split = match r.split {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        };
        out.push_str(&format!("{},{split},{},{}\n", r.epoch, r.loss, r.rho));
    }
    out
}

/// Reported after each validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPoint {
    pub index: usize,
    pub epoch: usize,
    pub samples_seen: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_rho: f64,
    pub encoder_lr: f64,
    pub predictor_lr: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub curves: Vec<CurveRow>,
    pub history: Vec<ValidationPoint>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// Reason training was aborted on a non-finite loss or gradient.
    pub diverged: Option<String>,
    pub train_seconds: f64,
}

impl TrainOutcome {
    /// Validation index (1-based) of the best checkpoint.
    pub fn best_validation(&self) -> usize {
        self.best.meta.validation
    }

    /// The better of the two checkpoints by validation ρ.
    pub fn selected(&self) -> &Checkpoint {
        if self.last.val_rho() > self.best.val_rho() {
            &self.last
        } else {
            &self.best
        }
    }
}

/// Forward pass in training mode without gradients: mean loss over the
/// windows plus inference-mode (rectified, denormalised) predictions.
pub fn forward_eval(
    model: &Model,
    cfg: &TrainConfig,
    rec: &RecordingSet,
    windows: &Windows,
    norm: &ChannelNormalizer,
) -> Result<(f64, Predictions)> {
    let n = rec.channels();
    let mut pred = Vec::with_capacity(windows.len() * n);
    let mut target = Vec::with_capacity(windows.len() * n);
    let mut loss_sum = 0.0;
    let all: Vec<usize> = (0..windows.len()).collect();
    for chunk in all.chunks(cfg.eval_batch.max(1)) {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g);
        let x = windows.batch_frames(rec, chunk);
        let out = model.run_sequence(&mut g, &p, &x, Mode::Train)?;
        let y = g.constant(&[chunk.len(), n], windows.batch_targets(rec, chunk, Some(norm)))?;
        let l = loss(&mut g, cfg.loss, out, y)?;
        loss_sum += g.value(l)[0] * chunk.len() as f64;
        let rect: Vec<f64> = g.value(out).iter().map(|v| v.max(0.0)).collect();
        pred.extend(norm.denormalize(&rect));
        target.extend(windows.batch_targets(rec, chunk, None));
    }
    Ok((
        loss_sum / windows.len() as f64,
        Predictions {
            pred,
            target,
            channels: n,
        },
    ))
}

pub fn train(cfg: &TrainConfig, rec: &RecordingSet) -> Result<TrainOutcome> {
    train_with_progress(cfg, rec, &mut |_| {})
}

struct Running {
    loss_sum: f64,
    count: usize,
    pred: Vec<f64>,
    target: Vec<f64>,
}

impl Running {
    fn new() -> Self {
        Self {
            loss_sum: 0.0,
            count: 0,
            pred: Vec::new(),
            target: Vec::new(),
        }
    }
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    rec: &RecordingSet,
    on_validation: &mut dyn FnMut(&ValidationPoint),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be at least 1".into()));
    }
    let started = Instant::now();
    let n = rec.channels();
    let norm = fit_normalizer(rec, rec.range(Split::Train))?;
    let train_w = make_windows(rec, &cfg.plan, rec.range(Split::Train))?;
    let val_w = make_windows(rec, &cfg.plan, rec.range(Split::Validation))?;
    let mut model = Model::new(cfg.model_config(n))?;
    let mut adam = Adam::new(&model.params, cfg.encoder_lr, cfg.predictor_lr);
    let mut sched = PlateauScheduler::new(cfg.scheduler);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let clip = if cfg.model.is_recurrent() { cfg.grad_clip } else { 0.0 };

    let mut curves = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut running = Running::new();
    let mut samples_seen = 0usize;
    let mut since_validation = 0usize;
    let mut diverged = None;
    let mut stopped_early = false;
    let mut epochs_run = 0;
    let mut last_rho = f64::NAN;

    // Validation, scheduling, early stopping and checkpointing in one place.
    let mut validate = |model: &Model,
                        adam: &mut Adam,
                        sched: &mut PlateauScheduler,
                        stopper: &mut EarlyStopping,
                        running: &mut Running,
                        epoch: usize,
                        samples_seen: usize|
     -> Result<(bool, f64)> {
        let (val_loss, preds) = forward_eval(model, cfg, rec, &val_w, &norm)?;
        let val_rho = preds.scores()?.rho();
        let train_loss = running.loss_sum / running.count.max(1) as f64;
        let train_rho = if running.count >= 2 {
            ChannelScores::compute(&running.pred, &running.target, n)?.rho()
        } else {
            f64::NAN
        };
        *running = Running::new();
        let improved = stopper.observe(val_rho);
        let index = stopper.seen;
        sched.observe(val_rho, adam.lrs_mut());
        curves.push(CurveRow {
            epoch: index,
            split: Split::Train,
            loss: train_loss,
            rho: train_rho,
        });
        curves.push(CurveRow {
            epoch: index,
            split: Split::Validation,
            loss: val_loss,
            rho: val_rho,
        });
        if improved {
            best = Some(Checkpoint::capture(
                CheckpointTag::Best,
                Snapshot {
                    config: cfg,
                    model,
                    adam,
                    scheduler: sched,
                    normalizer: &norm,
                    validation: index,
                    val_rho,
                },
            ));
        }
        let point = ValidationPoint {
            index,
            epoch,
            samples_seen,
            train_loss,
            val_loss,
            val_rho,
            encoder_lr: adam.scalars.encoder_lr,
            predictor_lr: adam.scalars.predictor_lr,
            improved,
        };
        on_validation(&point);
        history.push(point);
        Ok((stopper.decision() == StopDecision::Stop, val_rho))
    };

    'epochs: for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train_w.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, 1000 + epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_loss = 0.0;
            for micro in batch.chunks(cfg.micro_batch) {
                let mut g = Graph::new();
                let p = model.params.bind(&mut g);
                let x = train_w.batch_frames(rec, micro);
                let out = model.run_sequence(&mut g, &p, &x, Mode::Train)?;
                let y = g.constant(&[micro.len(), n], train_w.batch_targets(rec, micro, Some(&norm)))?;
                let l = loss(&mut g, cfg.loss, out, y)?;
                let value = g.value(l)[0];
                batch_loss += value * micro.len() as f64;
                let rect: Vec<f64> = g.value(out).iter().map(|v| v.max(0.0)).collect();
                running.pred.extend(norm.denormalize(&rect));
                running.target.extend(train_w.batch_targets(rec, micro, None));
                let scaled = g.scale(l, micro.len() as f64 / batch.len() as f64);
                g.backward(scaled)?;
                model.params.accumulate_grads(&g, &p);
            }
            if !batch_loss.is_finite() {
                diverged = Some(format!("non-finite training loss at epoch {epoch}"));
                break 'epochs;
            }
            if clip > 0.0 {
                model.params.clip_grad_norm(clip);
            }
            if let Err(e) = adam.step(&mut model.params) {
                diverged = Some(e.to_string());
                break 'epochs;
            }
            model.params.zero_grads();
            running.loss_sum += batch_loss;
            running.count += batch.len();
            samples_seen += batch.len();
            since_validation += batch.len();
            if let ValidateEvery::Samples(k) = cfg.validate_every {
                if since_validation >= k {
                    since_validation = 0;
                    let (stop, rho) = validate(&model, &mut adam, &mut sched, &mut stopper, &mut running, epoch, samples_seen)?;
                    last_rho = rho;
                    if stop {
                        stopped_early = true;
                        break 'epochs;
                    }
                }
            }
        }
        if cfg.validate_every == ValidateEvery::EPOCH {
            since_validation = 0;
            let (stop, rho) = validate(&model, &mut adam, &mut sched, &mut stopper, &mut running, epoch, samples_seen)?;
            last_rho = rho;
            if stop {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    if diverged.is_none() && !stopped_early && (since_validation > 0 || stopper.seen == 0) {
        let (_, rho) = validate(&model, &mut adam, &mut sched, &mut stopper, &mut running, epochs_run, samples_seen)?;
        last_rho = rho;
    }
    model.params.zero_grads();
    let last = Checkpoint::capture(
        CheckpointTag::Last,
        Snapshot {
            config: cfg,
            model: &model,
            adam: &adam,
            scheduler: &sched,
            normalizer: &norm,
            validation: stopper.seen,
            val_rho: last_rho,
        },
    );
    let best = best.unwrap_or_else(|| Checkpoint {
        tag: CheckpointTag::Best,
        ..last.clone()
    });
    Ok(TrainOutcome {
        best,
        last,
        curves,
        history,
        epochs_run,
        stopped_early,
        diverged,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}
