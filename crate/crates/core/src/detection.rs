//! Threshold detectors over spectral features.
//!
//! A detector is a short list of `(layer, metric, direction, threshold)`
//! rules folded by a combinator. Thresholds are calibrated on labeled data
//! by sweeping the midpoints between consecutive distinct feature values,
//! plus the two infinite sentinels that flag everything or nothing.
//!
//! Both combinators are offered. A conjunction can only lower recall below
//! that of its weakest rule, so recall-oriented multi-feature detectors need
//! the disjunction; which one to use is a calibration choice.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureSource, FeatureTable, Metric};
use crate::metrics::{self, BootstrapOptions, Confusion, EvalReport};
use crate::trace::Label;

pub const MAX_RULES: usize = 5;
pub const DEFAULT_PRECISION_FLOOR: f64 = 0.20;
pub const DEFAULT_BEAM_WIDTH: usize = 8;
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    FlagIfAbove,
    FlagIfBelow,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::FlagIfAbove, Direction::FlagIfBelow];

    pub fn fires(self, value: f64, threshold: f64) -> bool {
        match self {
            Direction::FlagIfAbove => value > threshold,
            Direction::FlagIfBelow => value < threshold,
        }
    }

    /// +1 when larger values are more suspicious.
    pub fn sign(self) -> f64 {
        match self {
            Direction::FlagIfAbove => 1.0,
            Direction::FlagIfBelow => -1.0,
        }
    }
}

mod threshold_repr {
    //! Infinite thresholds are written as the strings "inf" and "-inf".
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad threshold '{t}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRule {
    pub layer: usize,
    pub metric: Metric,
    pub direction: Direction,
    /// May be infinite: `-inf` with flag-if-above flags every sample.
    #[serde(with = "threshold_repr")]
    pub threshold: f64,
}

impl FeatureRule {
    pub fn new(key: FeatureKey, direction: Direction, threshold: f64) -> Self {
        Self {
            layer: key.layer,
            metric: key.metric,
            direction,
            threshold,
        }
    }

    pub fn key(&self) -> FeatureKey {
        FeatureKey::new(self.layer, self.metric)
    }

    pub fn fires(&self, value: f64) -> bool {
        self.direction.fires(value, self.threshold)
    }

    /// Signed distance past the threshold, positive when the rule fires.
    pub fn margin(&self, value: f64) -> f64 {
        (value - self.threshold) * self.direction.sign()
    }
}

impl fmt::Display for FeatureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.direction {
            Direction::FlagIfAbove => ">",
            Direction::FlagIfBelow => "<",
        };
        write!(f, "{} {} {:.4}", self.key(), op, self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combinator {
    AnyFires,
    AllFire,
}

impl Combinator {
    fn fold(self, mut fired: impl Iterator<Item = bool>) -> bool {
        match self {
            Combinator::AnyFires => fired.any(|f| f),
            Combinator::AllFire => fired.all(|f| f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    /// Youden's J, recall minus false-positive rate.
    Youden,
    /// Recall, subject to precision at or above `floor`.
    RecallAtPrecision { floor: f64 },
    /// Thresholds maximize balanced accuracy, the AUC of the hard decision;
    /// configurations are ranked by the AUC of their continuous score.
    Auc,
}

impl Objective {
    pub fn recall_default() -> Self {
        Objective::RecallAtPrecision {
            floor: DEFAULT_PRECISION_FLOOR,
        }
    }

    /// Objective value of a decision. Infeasible recall decisions score
    /// `precision - 1`, below every feasible one.
    pub fn value(&self, c: &Confusion) -> f64 {
        let j = c.recall() - c.false_positive_rate();
        match *self {
            Objective::Youden => j,
            Objective::RecallAtPrecision { floor } => {
                if c.precision() + TIE_EPS >= floor {
                    c.recall()
                } else {
                    c.precision() - 1.0
                }
            }
            Objective::Auc => (1.0 + j) / 2.0,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Youden => write!(f, "youden"),
            Objective::RecallAtPrecision { floor } => write!(f, "recall@precision>={floor}"),
            Objective::Auc => write!(f, "auc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub calibration_size: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    pub objective: Objective,
    pub seed: Option<u64>,
    pub split: Option<SplitInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub rules: Vec<FeatureRule>,
    pub combinator: Combinator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationInfo>,
}

impl DetectorConfig {
    pub fn new(rules: Vec<FeatureRule>, combinator: Combinator) -> Result<Self> {
        let cfg = Self {
            rules,
            combinator,
            calibration: None,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.rules.is_empty() || self.rules.len() > MAX_RULES {
            return Err(Error::Contract(format!(
                "a detector needs 1 to {MAX_RULES} rules, got {}",
                self.rules.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for r in &self.rules {
            if !seen.insert(r.key()) {
                return Err(Error::Contract(format!("duplicate rule for {}", r.key())));
            }
            if r.threshold.is_nan() {
                return Err(Error::Contract(format!("NaN threshold for {}", r.key())));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> Vec<FeatureKey> {
        self.rules.iter().map(|r| r.key()).collect()
    }

    /// Short name in the style `L3 entropy + L26 smoothness`.
    pub fn describe(&self) -> String {
        let names: Vec<String> = self.rules.iter().map(|r| r.key().to_string()).collect();
        let joiner = match self.combinator {
            Combinator::AnyFires => " | ",
            Combinator::AllFire => " & ",
        };
        names.join(joiner)
    }

    pub fn flags<S: FeatureSource>(&self, source: &S) -> Result<bool> {
        let values = self.values(source)?;
        Ok(self
            .combinator
            .fold(self.rules.iter().zip(&values).map(|(r, &v)| r.fires(v))))
    }

    fn values<S: FeatureSource>(&self, source: &S) -> Result<Vec<f64>> {
        self.rules
            .iter()
            .map(|r| {
                source
                    .feature(r.key())
                    .ok_or_else(|| Error::Contract(format!("feature {} missing for rule '{r}'", r.key())))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }
}

pub fn classify<S: FeatureSource>(config: &DetectorConfig, source: &S) -> Result<Label> {
    Ok(if config.flags(source)? {
        Label::Hallucination
    } else {
        Label::Valid
    })
}

/// Column values in ascending order, grouped by distinct value.
#[derive(Debug, Clone)]
struct SortedColumn {
    order: Vec<usize>,
    bounds: Vec<usize>,
    distinct: Vec<f64>,
}

impl SortedColumn {
    fn new(values: &[f64]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Calibration(format!("NaN feature value in row {i}")));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut bounds = Vec::new();
        let mut distinct = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            if distinct.last() != Some(&values[i]) {
                bounds.push(pos);
                distinct.push(values[i]);
            }
        }
        bounds.push(order.len());
        Ok(Self { order, bounds, distinct })
    }

    fn groups(&self) -> usize {
        self.distinct.len()
    }

    /// Threshold that makes exactly the first `t` groups (in flagging order) fire.
    fn threshold(&self, dir: Direction, t: usize) -> f64 {
        let k = self.groups();
        let between = |lo: f64, hi: f64, fallback: f64| {
            let mid = lo + (hi - lo) / 2.0;
            if lo < mid && mid < hi {
                mid
            } else {
                fallback
            }
        };
        match dir {
            Direction::FlagIfAbove if t == 0 => f64::INFINITY,
            Direction::FlagIfAbove if t == k => f64::NEG_INFINITY,
            Direction::FlagIfAbove => {
                let (lo, hi) = (self.distinct[k - t - 1], self.distinct[k - t]);
                between(lo, hi, lo)
            }
            Direction::FlagIfBelow if t == 0 => f64::NEG_INFINITY,
            Direction::FlagIfBelow if t == k => f64::INFINITY,
            Direction::FlagIfBelow => {
                let (lo, hi) = (self.distinct[t - 1], self.distinct[t]);
                between(lo, hi, hi)
            }
        }
    }

    /// Rows that start firing at step `t >= 1`.
    fn group(&self, dir: Direction, t: usize) -> &[usize] {
        let g = match dir {
            Direction::FlagIfAbove => self.groups() - t,
            Direction::FlagIfBelow => t - 1,
        };
        &self.order[self.bounds[g]..self.bounds[g + 1]]
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    direction: Direction,
    threshold: f64,
    confusion: Confusion,
    objective: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.objective > other.objective + TIE_EPS
            || ((self.objective - other.objective).abs() <= TIE_EPS
                && self.confusion.flagged() < other.confusion.flagged())
    }
}

/// Sweeps one rule's threshold with the other rules' decisions held fixed.
fn sweep(
    col: &SortedColumn,
    dir: Direction,
    positive: &[bool],
    context: Option<(&[bool], Combinator)>,
    objective: &Objective,
) -> Candidate {
    let initially_flagged = |i: usize| match context {
        Some((others, Combinator::AnyFires)) => others[i],
        _ => false,
    };
    let flagged: Vec<bool> = (0..positive.len()).map(initially_flagged).collect();
    let mut c = Confusion::count(&flagged, positive);
    let mut best = Candidate {
        direction: dir,
        threshold: col.threshold(dir, 0),
        confusion: c,
        objective: objective.value(&c),
    };
    for t in 1..=col.groups() {
        for &i in col.group(dir, t) {
            let turns_on = match context {
                None => true,
                Some((others, Combinator::AnyFires)) => !others[i],
                Some((others, Combinator::AllFire)) => others[i],
            };
            if turns_on {
                if positive[i] {
                    c.tp += 1;
                    c.fn_ -= 1;
                } else {
                    c.fp += 1;
                    c.tn -= 1;
                }
            }
        }
        let cand = Candidate {
            direction: dir,
            threshold: col.threshold(dir, t),
            confusion: c,
            objective: objective.value(&c),
        };
        if cand.beats(&best) {
            best = cand;
        }
    }
    best
}

fn sweep_directions(
    col: &SortedColumn,
    directions: &[Direction],
    positive: &[bool],
    context: Option<(&[bool], Combinator)>,
    objective: &Objective,
) -> Candidate {
    let mut best: Option<Candidate> = None;
    for &dir in directions {
        let cand = sweep(col, dir, positive, context, objective);
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    best.expect("at least one direction")
}

fn check_labels(positive: &[bool]) -> Result<()> {
    let pos = positive.iter().filter(|&&p| p).count();
    if positive.len() < 2 || pos == 0 || pos == positive.len() {
        return Err(Error::Calibration(format!(
            "need both classes: {pos} hallucinations among {} samples",
            positive.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRule {
    pub rule: FeatureRule,
    pub objective_value: f64,
    pub confusion: Confusion,
}

impl CalibratedRule {
    pub fn recall(&self) -> f64 {
        self.confusion.recall()
    }

    pub fn precision(&self) -> f64 {
        self.confusion.precision()
    }
}

/// Best single threshold for one feature column. With `direction = None`
/// both directions are tried and the better objective wins; ties go to the
/// threshold flagging fewer samples.
pub fn calibrate_threshold(
    key: FeatureKey,
    values: &[f64],
    positive: &[bool],
    direction: Option<Direction>,
    objective: &Objective,
) -> Result<CalibratedRule> {
    if values.len() != positive.len() {
        return Err(Error::Dimension(format!(
            "{} values for {} labels",
            values.len(),
            positive.len()
        )));
    }
    check_labels(positive)?;
    let col = SortedColumn::new(values)?;
    let dirs: &[Direction] = match &direction {
        Some(d) => std::slice::from_ref(d),
        None => &Direction::BOTH,
    };
    let best = sweep_directions(&col, dirs, positive, None, objective);
    Ok(CalibratedRule {
        rule: FeatureRule::new(key, best.direction, best.threshold),
        objective_value: best.objective,
        confusion: best.confusion,
    })
}

fn fires_column(rule: &FeatureRule, values: &[f64]) -> Vec<bool> {
    values.iter().map(|&v| rule.fires(v)).collect()
}

fn combine(masks: &[&[bool]], combinator: Combinator, n: usize) -> Vec<bool> {
    (0..n)
        .map(|i| combinator.fold(masks.iter().map(|m| m[i])))
        .collect()
}

/// How the thresholds of a multi-rule candidate are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointCalibration {
    /// Each rule calibrated alone, then two passes of coordinate ascent.
    CoordinateAscent,
    /// Each rule calibrated alone; no joint refinement.
    PerFeature,
    /// Every direction and threshold pair enumerated (two rules only).
    ExactPair,
}

/// Calibrates `keys` jointly under `combinator`. Returns the configuration
/// and its decision on the table.
pub fn calibrate_config(
    table: &FeatureTable,
    keys: &[FeatureKey],
    combinator: Combinator,
    objective: &Objective,
    mode: JointCalibration,
) -> Result<(DetectorConfig, Confusion, f64)> {
    let positive = table.positives();
    check_labels(&positive)?;
    let cols = keys
        .iter()
        .map(|&k| {
            let values = table
                .column(k)
                .ok_or_else(|| Error::Contract(format!("table has no column {}", k.column_name())))?;
            Ok((k, values, SortedColumn::new(values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_config(&cols, &positive, combinator, objective, mode)
}

type Column<'a> = (FeatureKey, &'a [f64], SortedColumn);

fn fit_config(
    cols: &[Column<'_>],
    positive: &[bool],
    combinator: Combinator,
    objective: &Objective,
    mode: JointCalibration,
) -> Result<(DetectorConfig, Confusion, f64)> {
    let n = positive.len();
    if mode == JointCalibration::ExactPair && cols.len() == 2 {
        return Ok(exact_pair(cols, positive, combinator, objective));
    }
    let mut rules: Vec<FeatureRule> = cols
        .iter()
        .map(|(k, _, col)| {
            let c = sweep_directions(col, &Direction::BOTH, positive, None, objective);
            FeatureRule::new(*k, c.direction, c.threshold)
        })
        .collect();
    let mut masks: Vec<Vec<bool>> = rules.iter().zip(cols).map(|(r, c)| fires_column(r, c.1)).collect();
    let current = |masks: &[Vec<bool>]| {
        let refs: Vec<&[bool]> = masks.iter().map(|m| m.as_slice()).collect();
        let c = Confusion::count(&combine(&refs, combinator, n), positive);
        (c, objective.value(&c))
    };
    if mode == JointCalibration::CoordinateAscent && cols.len() > 1 {
        for _pass in 0..2 {
            for i in 0..cols.len() {
                let others: Vec<&[bool]> = masks
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, m)| m.as_slice())
                    .collect();
                let ctx = combine(&others, combinator, n);
                let (c, obj) = current(&masks);
                let now = Candidate {
                    direction: rules[i].direction,
                    threshold: rules[i].threshold,
                    confusion: c,
                    objective: obj,
                };
                let cand = sweep_directions(&cols[i].2, &Direction::BOTH, positive, Some((&ctx, combinator)), objective);
                if cand.beats(&now) {
                    rules[i] = FeatureRule::new(cols[i].0, cand.direction, cand.threshold);
                    masks[i] = fires_column(&rules[i], cols[i].1);
                }
            }
        }
    }
    let (c, obj) = current(&masks);
    Ok((DetectorConfig::new(rules, combinator)?, c, obj))
}

fn exact_pair(
    cols: &[Column<'_>],
    positive: &[bool],
    combinator: Combinator,
    objective: &Objective,
) -> (DetectorConfig, Confusion, f64) {
    let (ka, _, col_a) = &cols[0];
    let (kb, _, col_b) = &cols[1];
    let mut best: Option<(FeatureRule, Candidate)> = None;
    for dir_a in Direction::BOTH {
        let mut fires_a = vec![false; positive.len()];
        for t in 0..=col_a.groups() {
            if t > 0 {
                for &i in col_a.group(dir_a, t) {
                    fires_a[i] = true;
                }
            }
            let cand = sweep_directions(col_b, &Direction::BOTH, positive, Some((&fires_a, combinator)), objective);
            if best.as_ref().is_none_or(|(_, b)| cand.beats(b)) {
                best = Some((FeatureRule::new(*ka, dir_a, col_a.threshold(dir_a, t)), cand));
            }
        }
    }
    let (rule_a, cand) = best.expect("non-empty sweep");
    let rule_b = FeatureRule::new(*kb, cand.direction, cand.threshold);
    let cfg = DetectorConfig {
        rules: vec![rule_a, rule_b],
        combinator,
        calibration: None,
    };
    (cfg, cand.confusion, cand.objective)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// Every single feature and, with `max_rules = 2`, every pair.
    Exhaustive,
    /// Forward selection keeping the best `beam` configurations per size.
    Greedy { beam: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_rules: usize,
    pub objective: Objective,
    pub strategy: Strategy,
    pub combinator: Combinator,
    /// Refinement used for multi-rule candidates outside exhaustive pairs.
    pub joint: JointCalibration,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_rules: 2,
            objective: Objective::Auc,
            strategy: Strategy::Exhaustive,
            combinator: Combinator::AnyFires,
            joint: JointCalibration::CoordinateAscent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig {
    pub config: DetectorConfig,
    /// Value the list is sorted by: the config's score AUC for the AUC
    /// objective, the calibration objective otherwise.
    pub rank_value: f64,
    pub objective_value: f64,
    pub recall: f64,
    pub precision: f64,
    pub auc: f64,
    pub confusion: Confusion,
}

/// Searches feature subsets for the best detectors on a labeled table and
/// returns every evaluated configuration, best first.
pub fn search_features(table: &FeatureTable, opts: &SearchOptions) -> Result<Vec<RankedConfig>> {
    if opts.max_rules == 0 || opts.max_rules > MAX_RULES {
        return Err(Error::Unsupported(format!(
            "max_rules must be 1..={MAX_RULES}, got {}",
            opts.max_rules
        )));
    }
    if let Strategy::Exhaustive = opts.strategy {
        if opts.max_rules > 2 {
            return Err(Error::Unsupported(
                "exhaustive search is limited to max_rules <= 2; use the greedy strategy".into(),
            ));
        }
    }
    if let Strategy::Greedy { beam: 0 } = opts.strategy {
        return Err(Error::Unsupported("beam width must be positive".into()));
    }
    if table.labels().contains(&Label::Unlabeled) {
        return Err(Error::Calibration("feature table contains unlabeled rows".into()));
    }
    let positive = table.positives();
    check_labels(&positive)?;
    let mut keys = table.keys().to_vec();
    keys.sort();
    let cols: Vec<Column<'_>> = keys
        .iter()
        .map(|&k| {
            let v = table.column(k).expect("key from table");
            Ok((k, v, SortedColumn::new(v)?))
        })
        .collect::<Result<_>>()?;

    let evaluate = |idx: &[usize], mode: JointCalibration| -> Result<RankedConfig> {
        let chosen: Vec<Column<'_>> = idx.iter().map(|&i| cols[i].clone()).collect();
        let (config, confusion, objective_value) = fit_config(&chosen, &positive, opts.combinator, &opts.objective, mode)?;
        let scores = config_scores(&config, table)?;
        let auc = metrics::auc(&scores, &positive)?;
        let rank_value = match opts.objective {
            Objective::Auc => auc,
            _ => objective_value,
        };
        Ok(RankedConfig {
            config,
            rank_value,
            objective_value,
            recall: confusion.recall(),
            precision: confusion.precision(),
            auc,
            confusion,
        })
    };

    let singles: Vec<Vec<usize>> = (0..cols.len()).map(|i| vec![i]).collect();
    let mut results: Vec<RankedConfig> = singles
        .par_iter()
        .map(|s| evaluate(s, opts.joint))
        .collect::<Result<_>>()?;

    match opts.strategy {
        Strategy::Exhaustive => {
            if opts.max_rules == 2 {
                let pairs: Vec<Vec<usize>> = (0..cols.len())
                    .flat_map(|i| ((i + 1)..cols.len()).map(move |j| vec![i, j]))
                    .collect();
                let more: Vec<RankedConfig> = pairs
                    .par_iter()
                    .map(|p| evaluate(p, JointCalibration::ExactPair))
                    .collect::<Result<_>>()?;
                results.extend(more.into_iter().filter(|r| !has_inert_rule(&r.config)));
            }
        }
        Strategy::Greedy { beam } => {
            let mut frontier: Vec<(Vec<usize>, RankedConfig)> = singles.into_iter().zip(results.iter().cloned()).collect();
            rank(&mut frontier, |e| &e.1);
            frontier.truncate(beam);
            for _size in 2..=opts.max_rules {
                let mut seen = BTreeSet::new();
                let mut next_sets = Vec::new();
                for (set, _) in &frontier {
                    for j in 0..cols.len() {
                        if set.contains(&j) {
                            continue;
                        }
                        let mut s = set.clone();
                        s.push(j);
                        s.sort_unstable();
                        if seen.insert(s.clone()) {
                            next_sets.push(s);
                        }
                    }
                }
                if next_sets.is_empty() {
                    break;
                }
                let evaluated: Vec<RankedConfig> = next_sets
                    .par_iter()
                    .map(|s| evaluate(s, opts.joint))
                    .collect::<Result<_>>()?;
                let mut level: Vec<(Vec<usize>, RankedConfig)> = next_sets
                    .into_iter()
                    .zip(evaluated)
                    .filter(|(_, r)| !has_inert_rule(&r.config))
                    .collect();
                rank(&mut level, |e| &e.1);
                results.extend(level.iter().map(|e| e.1.clone()));
                level.truncate(beam);
                frontier = level;
            }
        }
    }
    rank(&mut results, |r| r);
    Ok(results)
}

/// A rule pinned to a sentinel that can never change the combined decision:
/// never firing under any-fires, always firing under all-fire. Such a
/// configuration duplicates the one without that rule.
pub fn has_inert_rule(config: &DetectorConfig) -> bool {
    config.rules.len() > 1
        && config.rules.iter().any(|r| {
            let never = r.threshold == f64::INFINITY && r.direction == Direction::FlagIfAbove
                || r.threshold == f64::NEG_INFINITY && r.direction == Direction::FlagIfBelow;
            let always = r.threshold == f64::NEG_INFINITY && r.direction == Direction::FlagIfAbove
                || r.threshold == f64::INFINITY && r.direction == Direction::FlagIfBelow;
            match config.combinator {
                Combinator::AnyFires => never,
                Combinator::AllFire => always,
            }
        })
}

/// Best first; ties go to fewer rules, then to fewer flagged samples, then
/// to the lexicographically smaller list of (layer, metric) keys.
fn rank<T>(items: &mut [T], get: impl Fn(&T) -> &RankedConfig) {
    items.sort_by(|a, b| {
        let (a, b) = (get(a), get(b));
        b.rank_value
            .total_cmp(&a.rank_value)
            .then(a.config.rules.len().cmp(&b.config.rules.len()))
            .then(a.confusion.flagged().cmp(&b.confusion.flagged()))
            .then_with(|| a.config.keys().cmp(&b.config.keys()))
    });
}

/// Median absolute deviation, falling back to 1 for constant columns.
fn mad(values: &[f64]) -> f64 {
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    };
    let mut v: Vec<f64> = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    let d = median(&mut dev);
    if d > 0.0 && d.is_finite() {
        d
    } else {
        1.0
    }
}

/// Per-sample ranking score of a configuration, higher meaning more suspicious.
///
/// A single rule scores by its directed feature value. Under any-fires the
/// score is the number of rules that fire; under all-fire it is the smallest
/// rule margin, each margin divided by its column's median absolute deviation.
pub fn config_scores(config: &DetectorConfig, table: &FeatureTable) -> Result<Vec<f64>> {
    let columns = config
        .rules
        .iter()
        .map(|r| {
            table
                .column(r.key())
                .ok_or_else(|| Error::Contract(format!("feature {} missing for rule '{r}'", r.key())))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = table.len();
    if config.rules.len() == 1 {
        let r = &config.rules[0];
        return Ok(columns[0].iter().map(|&v| v * r.direction.sign()).collect());
    }
    Ok(match config.combinator {
        Combinator::AnyFires => (0..n)
            .map(|i| {
                config
                    .rules
                    .iter()
                    .zip(&columns)
                    .filter(|(r, c)| r.fires(c[i]))
                    .count() as f64
            })
            .collect(),
        Combinator::AllFire => {
            let scales: Vec<f64> = columns.iter().map(|c| mad(c)).collect();
            (0..n)
                .map(|i| {
                    config
                        .rules
                        .iter()
                        .zip(&columns)
                        .zip(&scales)
                        .map(|((r, c), s)| r.margin(c[i]) / s)
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        }
    })
}

/// Hard decisions of `config` on every row of `table`.
pub fn config_flags(config: &DetectorConfig, table: &FeatureTable) -> Result<Vec<bool>> {
    (0..table.len()).map(|i| config.flags(&table.row(i))).collect()
}

/// Full statistics of a configuration on a labeled table.
pub fn evaluate_config(config: &DetectorConfig, table: &FeatureTable, bootstrap: &BootstrapOptions) -> Result<EvalReport> {
    if table.labels().contains(&Label::Unlabeled) {
        return Err(Error::Contract("evaluation table contains unlabeled rows".into()));
    }
    let flagged = config_flags(config, table)?;
    let scores = config_scores(config, table)?;
    EvalReport::build(config.describe(), &flagged, &scores, &table.positives(), bootstrap)
}
