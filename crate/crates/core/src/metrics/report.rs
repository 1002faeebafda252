use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Metric values for one evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub category: Option<String>,
    pub values: BTreeMap<MetricKind, f64>,
}

impl SampleScore {
    pub fn new(id: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            category: Some(category.into()),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, kind: MetricKind, value: f64) -> Self {
        self.values.insert(kind, value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub count: usize,
    pub means: BTreeMap<MetricKind, f64>,
}

/// Per-sample scores, per-category means, the mean of category means and
/// the sample standard deviation of category means ("stability").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricKind>,
    pub per_sample: Vec<SampleScore>,
    pub per_category: Vec<CategoryRow>,
    pub average: BTreeMap<MetricKind, f64>,
    pub stability: BTreeMap<MetricKind, f64>,
}

/// Standard deviation with the `n - 1` denominator; zero for fewer than two values.
pub fn sample_stdev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn aggregate_report(per_sample: Vec<SampleScore>) -> Result<MetricReport> {
    if per_sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<String, Vec<&SampleScore>> = BTreeMap::new();
    for s in &per_sample {
        let cat = s
            .category
            .as_ref()
            .ok_or_else(|| Error::MissingCategory(s.id.clone()))?;
        groups.entry(cat.clone()).or_default().push(s);
    }
    let mut metrics: Vec<MetricKind> = per_sample
        .iter()
        .flat_map(|s| s.values.keys().copied())
        .collect();
    metrics.sort();
    metrics.dedup();

    let per_category: Vec<CategoryRow> = groups
        .iter()
        .map(|(cat, samples)| {
            let means = metrics
                .iter()
                .filter_map(|&k| {
                    let vals: Vec<f64> = samples.iter().filter_map(|s| s.values.get(&k).copied()).collect();
                    (!vals.is_empty()).then(|| (k, vals.iter().sum::<f64>() / vals.len() as f64))
                })
                .collect();
            CategoryRow {
                category: cat.clone(),
                count: samples.len(),
                means,
            }
        })
        .collect();

    let mut average = BTreeMap::new();
    let mut stability = BTreeMap::new();
    for &k in &metrics {
        let cat_means: Vec<f64> = per_category.iter().filter_map(|r| r.means.get(&k).copied()).collect();
        average.insert(k, cat_means.iter().sum::<f64>() / cat_means.len() as f64);
        stability.insert(k, sample_stdev(&cat_means));
    }
    Ok(MetricReport {
        metrics,
        per_sample,
        per_category,
        average,
        stability,
    })
}

/// Relative improvement of `ours` over `baseline`, in percent. Positive
/// means `ours` is better in the given direction.
pub fn improvement_percent(ours: f64, baseline: f64, direction: Direction) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::NonpositiveBaseline(baseline));
    }
    let delta = match direction {
        Direction::HigherBetter => ours - baseline,
        Direction::LowerBetter => baseline - ours,
    };
    Ok(100.0 * delta / baseline)
}

/// Mean of per-column improvements, as used for multi-category summaries.
pub fn mean_improvement_percent(pairs: &[(f64, f64)], direction: Direction) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for &(ours, base) in pairs {
        total += improvement_percent(ours, base, direction)?;
    }
    Ok(total / pairs.len() as f64)
}

fn format_value(kind: MetricKind, v: f64) -> String {
    match kind {
        MetricKind::Fscore => format!("{v:.3}"),
        _ => format!("{:.2}", v * kind.display_scale()),
    }
}

impl MetricReport {
    pub fn category(&self, name: &str) -> Option<&CategoryRow> {
        self.per_category.iter().find(|r| r.category == name)
    }

    /// Plain-text table: one row per category, then `Average` and `Stdev.`
    /// footers. Distances are shown ×10².
    pub fn to_table(&self) -> String {
        let name_width = self
            .per_category
            .iter()
            .map(|r| r.category.len())
            .chain(["Category".len(), "Average".len()])
            .max()
            .unwrap_or(8);
        let col_width = self
            .metrics
            .iter()
            .map(|k| k.column_label().len())
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<name_width$}  {:>5}", "Category", "n");
        for k in &self.metrics {
            let _ = write!(out, "  {:>col_width$}", k.column_label());
        }
        out.push('\n');
        let rule = "-".repeat(name_width + 7 + self.metrics.len() * (col_width + 2));
        out.push_str(&rule);
        out.push('\n');
        for row in &self.per_category {
            let _ = write!(out, "{:<name_width$}  {:>5}", row.category, row.count);
            for k in &self.metrics {
                let cell = row.means.get(k).map(|v| format_value(*k, *v)).unwrap_or_else(|| "-".into());
                let _ = write!(out, "  {cell:>col_width$}");
            }
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
        for (label, values) in [("Average", &self.average), ("Stdev.", &self.stability)] {
            let _ = write!(out, "{:<name_width$}  {:>5}", label, "");
            for k in &self.metrics {
                let cell = values.get(k).map(|v| format_value(*k, *v)).unwrap_or_default();
                let _ = write!(out, "  {cell:>col_width$}");
            }
            out.push('\n');
        }
        out
    }
}
