use crate::data::{ChannelNormalizer, RecordingSet, Windows};
use crate::error::Result;
use crate::model::Model;

use super::metrics::ChannelScores;

/// Denormalised inference outputs next to raw targets, both `[S·n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub pred: Vec<f64>,
    pub target: Vec<f64>,
    pub channels: usize,
}

impl Predictions {
    pub fn samples(&self) -> usize {
        self.pred.len() / self.channels
    }

    pub fn scores(&self) -> Result<ChannelScores> {
        ChannelScores::compute(&self.pred, &self.target, self.channels)
    }
}

/// Runs the model in inference mode over every window, `batch` at a time.
pub fn predict_windows(
    model: &Model,
    rec: &RecordingSet,
    windows: &Windows,
    norm: &ChannelNormalizer,
    batch: usize,
) -> Result<Predictions> {
    let batch = batch.max(1);
    let mut pred = Vec::with_capacity(windows.len() * rec.channels());
    let mut target = Vec::with_capacity(windows.len() * rec.channels());
    let all: Vec<usize> = (0..windows.len()).collect();
    for chunk in all.chunks(batch) {
        let x = windows.batch_frames(rec, chunk);
        pred.extend(norm.denormalize(&model.predict(&x)?));
        target.extend(windows.batch_targets(rec, chunk, None));
    }
    Ok(Predictions {
        pred,
        target,
        channels: rec.channels(),
    })
}
