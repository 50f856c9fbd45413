use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub rho: f64,
    /// Set when either series is constant; `rho` is then 0.
    pub degenerate: bool,
}

/// Sample Pearson correlation of two equal-length series.
pub fn pearson(pred: &[f64], target: &[f64]) -> Result<Pearson> {
    if pred.len() != target.len() || pred.len() < 2 {
        return Err(Error::Shape {
            op: "pearson",
            lhs: vec![pred.len()],
            rhs: vec![target.len()],
        });
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = target.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in pred.iter().zip(target) {
        let (dx, dy) = (x - mp, y - mt);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Pearson {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Pearson {
        rho: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape {
            op: "mae",
            lhs: vec![pred.len()],
            rhs: vec![target.len()],
        });
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// Per-channel and aggregate scores of `[S·n]` row-major predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub rho: Vec<f64>,
    pub mae: Vec<f64>,
    pub degenerate: Vec<usize>,
}

impl ChannelScores {
    pub fn compute(pred: &[f64], target: &[f64], channels: usize) -> Result<Self> {
        if pred.len() != target.len() || channels == 0 || !pred.len().is_multiple_of(channels) {
            return Err(Error::Shape {
                op: "channel scores",
                lhs: vec![pred.len()],
                rhs: vec![target.len(), channels],
            });
        }
        let column = |v: &[f64], c: usize| -> Vec<f64> { v.iter().skip(c).step_by(channels).copied().collect() };
        let mut out = Self {
            rho: Vec::with_capacity(channels),
            mae: Vec::with_capacity(channels),
            degenerate: Vec::new(),
        };
        for c in 0..channels {
            let (p, t) = (column(pred, c), column(target, c));
            let r = pearson(&p, &t)?;
            if r.degenerate {
                out.degenerate.push(c);
            }
            out.rho.push(r.rho);
            out.mae.push(mae(&p, &t)?);
        }
        Ok(out)
    }

    /// Unweighted mean over channels.
    pub fn rho(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }

    pub fn mae(&self) -> f64 {
        self.mae.iter().sum::<f64>() / self.mae.len() as f64
    }
}
