//! Detection statistics: confusion counts, rank AUC with a bootstrap
//! confidence interval, Cohen's d and a two-sided Welch t-test.
//!
//! The p-value column uses Welch's test rather than Mann-Whitney because it
//! pairs with Cohen's d on the same mean/variance summary; a rank test would
//! be the drop-in alternative.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// p-values below this are reported as a bound.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// `flagged[i]` is the prediction, `positive[i]` the truth (hallucination).
    pub fn count(flagged: &[bool], positive: &[bool]) -> Self {
        let mut c = Self::default();
        for (&f, &p) in flagged.iter().zip(positive) {
            match (f, p) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// 0 when nothing was flagged.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn flagged(&self) -> usize {
        self.tp + self.fp
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_sizes(positive: &[bool]) -> (usize, usize) {
    let p = positive.iter().filter(|&&b| b).count();
    (p, positive.len() - p)
}

/// Mann-Whitney AUC: the share of (hallucination, valid) pairs in which the
/// hallucination scores higher, ties counting one half.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let (n_pos, n_neg) = class_sizes(positive);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    Ok(auc_unchecked(scores, positive, n_pos, n_neg))
}

fn auc_unchecked(scores: &[f64], positive: &[bool], n_pos: usize, n_neg: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| positive[k]).count();
        rank_sum += mid * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Resample within each class so every replicate keeps both classes.
    pub stratified: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            resamples: 1000,
            seed: 0,
            stratified: true,
        }
    }
}

/// Percentile bootstrap interval for the AUC.
///
/// Replicate `k` draws from its own generator, the master seed on stream
/// `k`, so the result does not depend on how replicates are scheduled.
pub fn bootstrap_ci(scores: &[f64], positive: &[bool], opts: &BootstrapOptions) -> Result<(f64, f64)> {
    if opts.resamples < 100 {
        return Err(Error::Contract(format!(
            "bootstrap needs at least 100 resamples, got {}",
            opts.resamples
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Contract(format!("confidence level {} outside (0, 1)", opts.level)));
    }
    auc(scores, positive)?;
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| positive[i]).collect();
    let neg: Vec<usize> = (0..scores.len()).filter(|&i| !positive[i]).collect();
    let n = scores.len();
    let redraw_limit = 10 * opts.resamples;

    let replicates: Vec<(f64, usize)> = (0..opts.resamples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            let mut s = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            let mut redraws = 0;
            loop {
                s.clear();
                y.clear();
                if opts.stratified {
                    for group in [&pos, &neg] {
                        for _ in 0..group.len() {
                            let i = group[rng.random_range(0..group.len())];
                            s.push(scores[i]);
                            y.push(positive[i]);
                        }
                    }
                } else {
                    for _ in 0..n {
                        let i = rng.random_range(0..n);
                        s.push(scores[i]);
                        y.push(positive[i]);
                    }
                }
                let (p, q) = class_sizes(&y);
                if p > 0 && q > 0 {
                    return (auc_unchecked(&s, &y, p, q), redraws);
                }
                redraws += 1;
                if redraws > redraw_limit {
                    return (f64::NAN, redraws);
                }
            }
        })
        .collect();
    let total_redraws: usize = replicates.iter().map(|r| r.1).sum();
    if total_redraws > redraw_limit || replicates.iter().any(|r| r.0.is_nan()) {
        return Err(Error::UndefinedMetric(format!(
            "bootstrap drew {total_redraws} single-class resamples"
        )));
    }
    if total_redraws > 0 {
        log::debug!("bootstrap redrew {total_redraws} single-class resamples");
    }
    let mut values: Vec<f64> = replicates.into_iter().map(|r| r.0).collect();
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - opts.level) / 2.0;
    Ok((quantile(&values, alpha), quantile(&values, 1.0 - alpha)))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// |mean_a - mean_b| over the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::UndefinedMetric("Cohen's d needs two samples per group".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    if !(pooled > 0.0) {
        return Err(Error::UndefinedMetric("pooled variance is zero".into()));
    }
    Ok(((ma - mb) / pooled.sqrt()).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided Welch t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::UndefinedMetric("Welch test needs two samples per group".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) };
        return Ok(WelchTest {
            statistic: t,
            df: na + nb - 2.0,
            p_value: p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest {
        statistic: t,
        df,
        p_value: p,
    })
}

pub fn significance(a: &[f64], b: &[f64]) -> Result<f64> {
    welch_t_test(a, b).map(|w| w.p_value)
}

/// A p-value that prints as `<1e-300` once it underflows the reporting floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue(pub f64);

impl PValue {
    pub fn is_bound(&self) -> bool {
        self.0 < P_FLOOR
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bound() {
            write!(f, "<1e-300")
        } else {
            write!(f, "{:.3e}", self.0)
        }
    }
}

impl Serialize for PValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_bound() {
            s.serialize_str("<1e-300")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for PValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(PValue(v)),
            Raw::Text(t) if t == "<1e-300" => Ok(PValue(0.0)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad p-value '{t}'"))),
        }
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub auc: f64,
    pub auc_ci: (f64, f64),
    pub recall: f64,
    pub detected: usize,
    pub total_hallucinations: usize,
    pub precision: f64,
    pub cohens_d: Option<f64>,
    /// None when a class has fewer than two samples.
    pub p_value: Option<PValue>,
    pub confusion: Confusion,
}

impl EvalReport {
    /// Assembles a report from hard decisions and a ranking score.
    ///
    /// Cohen's d and the p-value compare the score of hallucinations
    /// against that of valid samples.
    pub fn build(
        config: impl Into<String>,
        flagged: &[bool],
        scores: &[f64],
        positive: &[bool],
        bootstrap: &BootstrapOptions,
    ) -> Result<Self> {
        let confusion = Confusion::count(flagged, positive);
        let area = auc(scores, positive)?;
        let (lo, hi) = bootstrap_ci(scores, positive, bootstrap)?;
        let pos: Vec<f64> = (0..scores.len()).filter(|&i| positive[i]).map(|i| scores[i]).collect();
        let neg: Vec<f64> = (0..scores.len()).filter(|&i| !positive[i]).map(|i| scores[i]).collect();
        let d = match cohens_d(&pos, &neg) {
            Ok(d) => Some(d),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let p = match significance(&pos, &neg) {
            Ok(p) => Some(PValue(p)),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            config: config.into(),
            auc: area,
            // A percentile interval need not cover the point estimate; widen it so it does.
            auc_ci: (lo.min(area), hi.max(area)),
            recall: confusion.recall(),
            detected: confusion.tp,
            total_hallucinations: confusion.positives(),
            precision: confusion.precision(),
            cohens_d: d,
            p_value: p,
            confusion,
        })
    }
}

/// Fixed-width text table with the usual result columns.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<44} {:>22} {:>8} {:>10} {:>9} {:>7} {:>10}\n",
        "Config", "AUC [95% CI]", "Recall", "Detected", "Precision", "d", "p"
    );
    for r in reports {
        let d = r.cohens_d.map_or("-".to_string(), |d| format!("{d:.3}"));
        out.push_str(&format!(
            "{:<44} {:>22} {:>7.1}% {:>10} {:>8.1}% {:>7} {:>10}\n",
            r.config,
            format!("{:.3} [{:.3}, {:.3}]", r.auc, r.auc_ci.0, r.auc_ci.1),
            100.0 * r.recall,
            format!("{}/{}", r.detected, r.total_hallucinations),
            100.0 * r.precision,
            d,
            r.p_value.map_or("-".to_string(), |p| p.to_string())
        ));
    }
    out
}
