//! Probability baselines: perplexity and mean log-probability of the
//! generated tokens.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{calibrate_threshold, Direction, Objective};
use crate::error::{Error, Result};
use crate::features::{FeatureKey, Metric};
use crate::metrics::{self, BootstrapOptions, EvalReport};
use crate::trace::{Label, SampleTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub sample_id: String,
    pub label: Label,
    pub mean_logprob: f64,
    /// `exp(-mean_logprob)`, no further length normalization.
    pub perplexity: f64,
}

pub fn baseline_scores(trace: &SampleTrace) -> Result<BaselineScores> {
    let lp = trace
        .token_logprobs
        .as_ref()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::UnavailableBaseline(format!("sample '{}' has no token log-probs", trace.sample_id)))?;
    let mean = lp.iter().map(|&v| v as f64).sum::<f64>() / lp.len() as f64;
    Ok(BaselineScores {
        sample_id: trace.sample_id.clone(),
        label: trace.label,
        mean_logprob: mean,
        perplexity: (-mean).exp(),
    })
}

pub fn corpus_baseline_scores(traces: &[SampleTrace]) -> Result<Vec<BaselineScores>> {
    traces.par_iter().map(baseline_scores).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Perplexity,
    MeanLogprob,
}

impl Baseline {
    pub const ALL: [Baseline; 2] = [Baseline::Perplexity, Baseline::MeanLogprob];

    pub fn score(self, s: &BaselineScores) -> f64 {
        match self {
            Baseline::Perplexity => s.perplexity,
            Baseline::MeanLogprob => s.mean_logprob,
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Perplexity => "PPL",
            Baseline::MeanLogprob => "Mean LogProb",
        })
    }
}

/// Which end of the score is taken as suspicious.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreDirection {
    /// Higher scores are more suspicious.
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub baseline: Baseline,
    pub direction: ScoreDirection,
    /// AUC as measured in this direction; values below 0.5 are kept.
    pub report: EvalReport,
}

/// Evaluates both baselines in both directions. The hard decision uses a
/// threshold calibrated in that direction under `objective`.
pub fn baseline_eval(
    scores: &[BaselineScores],
    objective: &Objective,
    bootstrap: &BootstrapOptions,
) -> Result<Vec<BaselineReport>> {
    if scores.iter().any(|s| s.label == Label::Unlabeled) {
        return Err(Error::Contract("baseline evaluation needs labeled samples".into()));
    }
    let positive: Vec<bool> = scores.iter().map(|s| s.label == Label::Hallucination).collect();
    let mut out = Vec::new();
    for baseline in Baseline::ALL {
        let raw: Vec<f64> = scores.iter().map(|s| baseline.score(s)).collect();
        for (direction, rule_dir, sign) in [
            (ScoreDirection::Ascending, Direction::FlagIfAbove, 1.0),
            (ScoreDirection::Descending, Direction::FlagIfBelow, -1.0),
        ] {
            // The key only labels the rule; baselines are not spectral features.
            let key = FeatureKey::new(0, Metric::Entropy);
            let cal = calibrate_threshold(key, &raw, &positive, Some(rule_dir), objective)?;
            let flagged: Vec<bool> = raw.iter().map(|&v| cal.rule.fires(v)).collect();
            let directed: Vec<f64> = raw.iter().map(|v| v * sign).collect();
            let name = format!("{baseline} ({})", if sign > 0.0 { "high" } else { "low" });
            out.push(BaselineReport {
                baseline,
                direction,
                report: EvalReport::build(name, &flagged, &directed, &positive, bootstrap)?,
            });
        }
    }
    Ok(out)
}

/// The degenerate detector that flags every sample: recall 1, precision
/// equal to the base rate.
pub fn flag_everything(labels: &[Label], bootstrap: &BootstrapOptions) -> Result<EvalReport> {
    let positive: Vec<bool> = labels.iter().map(|&l| l == Label::Hallucination).collect();
    let flagged = vec![true; labels.len()];
    let scores = vec![0.0; labels.len()];
    EvalReport::build("Flag everything", &flagged, &scores, &positive, bootstrap)
}

/// Unflipped AUC of one baseline.
pub fn baseline_auc(scores: &[BaselineScores], baseline: Baseline) -> Result<f64> {
    let positive: Vec<bool> = scores.iter().map(|s| s.label == Label::Hallucination).collect();
    let raw: Vec<f64> = scores.iter().map(|s| baseline.score(s)).collect();
    metrics::auc(&raw, &positive)
}
