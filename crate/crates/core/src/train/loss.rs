use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};

/// Lower clamp on predicted rates inside the Poisson loss.
pub const POISSON_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
    Poisson,
}

impl LossKind {
    pub fn label(self) -> &'static str {
        match self {
            LossKind::Mse => "MSE",
            LossKind::Mae => "MAE",
            LossKind::Poisson => "Poisson",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            "poisson" => Ok(LossKind::Poisson),
            other => Err(Error::Invalid(format!("unknown loss `{other}`"))),
        }
    }
}

fn same_shape(g: &Graph, pred: Var, target: Var) -> Result<()> {
    if g.shape(pred) != g.shape(target) {
        return Err(Error::Shape {
            op: "loss",
            lhs: g.shape(pred).to_vec(),
            rhs: g.shape(target).to_vec(),
        });
    }
    Ok(())
}

pub fn loss_mse(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target)?;
    let d = g.sub(pred, target)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

pub fn loss_mae(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target)?;
    let d = g.sub(pred, target)?;
    let a = g.abs(d);
    Ok(g.mean(a))
}

/// `mean(ŷ − y·log ŷ)` with `ŷ` clamped to at least [`POISSON_EPS`].
pub fn loss_poisson(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target)?;
    let p = g.clamp_min(pred, POISSON_EPS);
    let lp = g.log(p);
    let ylp = g.mul(target, lp)?;
    let d = g.sub(p, ylp)?;
    Ok(g.mean(d))
}

pub fn loss(g: &mut Graph, kind: LossKind, pred: Var, target: Var) -> Result<Var> {
    match kind {
        LossKind::Mse => loss_mse(g, pred, target),
        LossKind::Mae => loss_mae(g, pred, target),
        LossKind::Poisson => loss_poisson(g, pred, target),
    }
}
