use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::recording::RecordingSet;

/// Floor applied to a channel's value range so constant channels map to 0.
pub const RANGE_EPS: f64 = 1e-8;

/// Per-channel min-max map fitted on training responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ChannelNormalizer {
    pub fn fit(rec: &RecordingSet, train: Range<usize>) -> Result<Self> {
        if train.is_empty() || train.end > rec.len() {
            return Err(Error::Invalid(format!("cannot fit normaliser on range {train:?}")));
        }
        let n = rec.channels();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for t in train {
            for (c, &v) in rec.response(t).iter().enumerate() {
                min[c] = min[c].min(v as f64);
                max[c] = max[c].max(v as f64);
            }
        }
        Ok(Self { min, max })
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    fn span(&self, c: usize) -> f64 {
        (self.max[c] - self.min[c]).max(RANGE_EPS)
    }

    pub fn normalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % self.channels();
                (v - self.min[c]) / self.span(c)
            })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize); accepts `[B·n]` row-major.
    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % self.channels();
                v * self.span(c) + self.min[c]
            })
            .collect()
    }
}

/// Fits on the recording's own training range.
pub fn fit_normalizer(rec: &RecordingSet, train: Range<usize>) -> Result<ChannelNormalizer> {
    ChannelNormalizer::fit(rec, train)
}
