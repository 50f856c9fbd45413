//! Evaluation reports and the flat result tables written next to them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelKind;

use super::bench::TimingStats;
use super::metrics::ChannelScores;
use super::stats::{anova_oneway, ci95, relative_diff};

/// Serialises rows to CSV with a header taken from the field names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| invalid(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| invalid(format!("csv: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub channel: usize,
    pub rho: f64,
    pub mae: f64,
    /// Either series was constant; `rho` is 0 by definition.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub model: ModelKind,
    pub variant: String,
    pub dataset: String,
    pub split: String,
    pub samples: usize,
    pub channels: Vec<ChannelRow>,
    /// Unweighted means over channels.
    pub rho: f64,
    pub mae: f64,
    pub params: usize,
    pub noise_sigma: Option<f64>,
    pub timing: Option<TimingStats>,
}

pub struct ReportMeta<'a> {
    pub run_id: &'a str,
    pub model: ModelKind,
    pub variant: &'a str,
    pub dataset: &'a str,
    pub split: &'a str,
    pub params: usize,
}

impl EvalReport {
    pub fn new(meta: ReportMeta<'_>, scores: &ChannelScores, samples: usize) -> Result<Self> {
        if let Some(r) = scores.rho.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
            return Err(invalid(format!("correlation {r} outside [-1, 1]")));
        }
        if let Some(m) = scores.mae.iter().find(|m| !(**m >= 0.0)) {
            return Err(invalid(format!("negative or undefined MAE {m}")));
        }
        let channels = (0..scores.rho.len())
            .map(|c| ChannelRow {
                channel: c,
                rho: scores.rho[c],
                mae: scores.mae[c],
                degenerate: scores.degenerate.contains(&c),
            })
            .collect();
        Ok(Self {
            run_id: meta.run_id.to_string(),
            model: meta.model,
            variant: meta.variant.to_string(),
            dataset: meta.dataset.to_string(),
            split: meta.split.to_string(),
            samples,
            channels,
            rho: scores.rho(),
            mae: scores.mae(),
            params: meta.params,
            noise_sigma: None,
            timing: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `channel,rho,mae,degenerate` rows.
    pub fn channels_csv(&self) -> Result<String> {
        to_csv(&self.channels)
    }
}

/// One finished training run of a model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub rho: f64,
    pub mae: f64,
    pub params: usize,
    pub train_seconds: f64,
}

/// Repeated runs of one variant on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunGroup {
    pub model: String,
    pub runs: Vec<RunResult>,
}

impl RunGroup {
    pub fn rhos(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.rho).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub dataset: String,
    pub rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mae: f64,
    pub params: usize,
    pub train_seconds: f64,
    /// One-way ANOVA over all variants of the dataset; empty with one variant.
    pub anova_p: Option<f64>,
}

/// Model comparison for one dataset: mean ρ with a 95% interval across runs,
/// and one ANOVA p-value across variants.
pub fn comparison_table(dataset: &str, groups: &[RunGroup]) -> Result<Vec<ComparisonRow>> {
    if groups.is_empty() {
        return Err(invalid("comparison needs at least one model group"));
    }
    let anova_p = if groups.len() >= 2 {
        let rhos: Vec<Vec<f64>> = groups.iter().map(RunGroup::rhos).collect();
        match anova_oneway(&rhos) {
            Ok(t) => Some(t.p),
            Err(Error::DegenerateAnova) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    groups
        .iter()
        .map(|g| {
            let ci = ci95(&g.rhos())?;
            let r = g.runs.len() as f64;
            Ok(ComparisonRow {
                model: g.model.clone(),
                dataset: dataset.to_string(),
                rho: ci.mean,
                ci_low: ci.low,
                ci_high: ci.high,
                mae: g.runs.iter().map(|x| x.mae).sum::<f64>() / r,
                params: g.runs[0].params,
                train_seconds: g.runs.iter().map(|x| x.train_seconds).sum::<f64>() / r,
                anova_p,
            })
        })
        .collect()
}

/// Test ρ of one model under one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCondition {
    pub sigma: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub model: String,
    pub dataset: String,
    /// The first condition is the clean (σ = 0) reference.
    pub conditions: Vec<NoiseCondition>,
}

impl NoiseStudy {
    /// Percent change of each perturbed condition against the clean one,
    /// negative when the score drops.
    pub fn relative_diffs(&self) -> Result<Vec<(f64, f64)>> {
        let clean = self.clean()?;
        self.conditions[1..]
            .iter()
            .map(|c| Ok((c.sigma, relative_diff(clean, c.rho)?)))
            .collect()
    }

    fn clean(&self) -> Result<f64> {
        match self.conditions.first() {
            Some(c) if c.sigma == 0.0 => Ok(c.rho),
            _ => Err(invalid("noise study must start with the unperturbed condition")),
        }
    }
}

/// `model,dataset,non_perturbed,sigma_25,rel_diff_25,…` with one pair of
/// columns per perturbed σ; all studies must share the σ list.
pub fn noise_table_csv(studies: &[NoiseStudy]) -> Result<String> {
    let Some(first) = studies.first() else {
        return Err(invalid("no noise studies"));
    };
    let sigmas: Vec<f64> = first.conditions.iter().map(|c| c.sigma).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string(), "dataset".into(), "non_perturbed".into()];
    for s in &sigmas[1..] {
        header.push(format!("sigma_{s}"));
        header.push(format!("rel_diff_{s}"));
    }
    let csv_err = |e: csv::Error| invalid(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for study in studies {
        if study.conditions.iter().map(|c| c.sigma).ne(sigmas.iter().copied()) {
            return Err(invalid("noise studies use different σ lists"));
        }
        let mut row = vec![study.model.clone(), study.dataset.clone(), study.clean()?.to_string()];
        for (c, (_, rel)) in study.conditions[1..].iter().zip(study.relative_diffs()?) {
            row.push(c.rho.to_string());
            row.push(format!("{rel:.2}"));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| invalid(format!("csv: {e}")))
}

/// Multi-scale comparison row (`CfC_2x20` style names).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub dataset: String,
    pub model: String,
    pub rho: f64,
    pub mae: f64,
    pub params: usize,
    pub train_seconds: f64,
}

/// Inference latency per data point for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    pub dataset: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub batch1_seconds: f64,
    pub batch1_std: f64,
    pub batch_size: usize,
    pub batch_seconds: f64,
    pub batch_std: f64,
}

impl TimingRow {
    pub fn new(model: &str, dataset: &str, t: &TimingStats) -> Self {
        Self {
            model: model.to_string(),
            dataset: dataset.to_string(),
            train_samples: t.train_samples,
            test_samples: t.test_samples,
            batch1_seconds: t.single.mean_seconds,
            batch1_std: t.single.std_seconds,
            batch_size: t.batched.batch,
            batch_seconds: t.batched.mean_seconds,
            batch_std: t.batched.std_seconds,
        }
    }
}
