//! Feature keys and the per-sample feature table.
//!
//! The table is exchanged as comma-separated text with a header row
//! `sample_id,label,L{layer}_{metric},...`, layers ascending and metrics in
//! the order entropy, fiedler, smoothness, hfer.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::SpectralProfile;
use crate::error::{Error, Result};
use crate::trace::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Entropy,
    Fiedler,
    Smoothness,
    Hfer,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Entropy, Metric::Fiedler, Metric::Smoothness, Metric::Hfer];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Entropy => "entropy",
            Metric::Fiedler => "fiedler",
            Metric::Smoothness => "smoothness",
            Metric::Hfer => "hfer",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidPayload(format!("unknown metric '{s}'")))
    }
}

/// One (layer, metric) column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub layer: usize,
    pub metric: Metric,
}

impl FeatureKey {
    pub fn new(layer: usize, metric: Metric) -> Self {
        Self { layer, metric }
    }

    pub fn column_name(&self) -> String {
        format!("L{}_{}", self.layer, self.metric)
    }

    pub fn parse_column(name: &str) -> Result<Self> {
        let bad = || Error::InvalidPayload(format!("bad feature column '{name}'"));
        let rest = name.strip_prefix('L').ok_or_else(bad)?;
        let (layer, metric) = rest.split_once('_').ok_or_else(bad)?;
        Ok(Self {
            layer: layer.parse().map_err(|_| bad())?,
            metric: metric.parse()?,
        })
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{} {}", self.layer, self.metric)
    }
}

/// Anything a detector rule can look a feature value up in.
pub trait FeatureSource {
    fn feature(&self, key: FeatureKey) -> Option<f64>;
}

/// Column-major table of features, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    sample_ids: Vec<String>,
    labels: Vec<Label>,
    keys: Vec<FeatureKey>,
    columns: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(keys: Vec<FeatureKey>) -> Self {
        let columns = vec![Vec::new(); keys.len()];
        Self {
            sample_ids: Vec::new(),
            labels: Vec::new(),
            keys,
            columns,
        }
    }

    /// Builds a table from column vectors. All columns must have one entry per sample.
    pub fn from_columns(
        sample_ids: Vec<String>,
        labels: Vec<Label>,
        keys: Vec<FeatureKey>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = sample_ids.len();
        if labels.len() != n || keys.len() != columns.len() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("feature table columns disagree in length".into()));
        }
        Ok(Self {
            sample_ids,
            labels,
            keys,
            columns,
        })
    }

    /// Table with every (layer, metric) column of the given profiles.
    pub fn from_profiles(profiles: &[SpectralProfile]) -> Result<Self> {
        let keys = profiles.first().map(|p| p.keys()).unwrap_or_default();
        let mut table = Self::new(keys);
        for p in profiles {
            table.push_profile(p)?;
        }
        Ok(table)
    }

    pub fn push_profile(&mut self, profile: &SpectralProfile) -> Result<()> {
        let values = self
            .keys
            .iter()
            .map(|&k| {
                profile.feature(k).ok_or_else(|| {
                    Error::Dimension(format!("sample {} lacks feature {}", profile.sample_id, k.column_name()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.push_row(profile.sample_id.clone(), profile.label, values)
    }

    pub fn push_row(&mut self, sample_id: String, label: Label, values: Vec<f64>) -> Result<()> {
        if values.len() != self.keys.len() {
            return Err(Error::Dimension(format!(
                "row has {} values, table has {} columns",
                values.len(),
                self.keys.len()
            )));
        }
        self.sample_ids.push(sample_id);
        self.labels.push(label);
        for (c, v) in self.columns.iter_mut().zip(values) {
            c.push(v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn column(&self, key: FeatureKey) -> Option<&[f64]> {
        self.keys.iter().position(|&k| k == key).map(|i| self.columns[i].as_slice())
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn row(&self, index: usize) -> TableRow<'_> {
        TableRow { table: self, index }
    }

    /// `true` for hallucination rows. Unlabeled rows are treated as negatives,
    /// so callers should drop them first with [`FeatureTable::labeled`].
    pub fn positives(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l == Label::Hallucination).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            keys: self.keys.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    /// Only the columns whose key passes `keep`.
    pub fn select_columns(&self, keep: impl Fn(FeatureKey) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.keys.len()).filter(|&i| keep(self.keys[i])).collect();
        Self {
            sample_ids: self.sample_ids.clone(),
            labels: self.labels.clone(),
            keys: idx.iter().map(|&i| self.keys[i]).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    /// Drops unlabeled rows.
    pub fn labeled(&self) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] != Label::Unlabeled).collect();
        self.subset(&idx)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend(self.keys.iter().map(|k| k.column_name()));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(self.keys.len() + 2);
            rec.push(self.sample_ids[i].clone());
            rec.push(self.labels[i].to_string());
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "sample_id" || &header[1] != "label" {
            return Err(Error::InvalidPayload("feature table must start with sample_id,label".into()));
        }
        let keys = header
            .iter()
            .skip(2)
            .map(FeatureKey::parse_column)
            .collect::<Result<Vec<_>>>()?;
        let mut table = Self::new(keys);
        for rec in r.records() {
            let rec = rec?;
            let values = rec
                .iter()
                .skip(2)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidPayload(format!("bad number '{v}' in row {}", &rec[0])))
                })
                .collect::<Result<Vec<_>>>()?;
            table.push_row(rec[0].to_string(), rec[1].parse()?, values)?;
        }
        Ok(table)
    }

    /// Map from sample id to row index.
    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TableRow<'a> {
    table: &'a FeatureTable,
    index: usize,
}

impl TableRow<'_> {
    pub fn sample_id(&self) -> &str {
        &self.table.sample_ids[self.index]
    }

    pub fn label(&self) -> Label {
        self.table.labels[self.index]
    }
}

impl FeatureSource for TableRow<'_> {
    fn feature(&self, key: FeatureKey) -> Option<f64> {
        self.table.column(key).map(|c| c[self.index])
    }
}
