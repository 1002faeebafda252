//! Comparison tables against published baseline numbers.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use rgb2point::metrics::{improvement_percent, mean_improvement_percent, sample_stdev, Direction, MetricKind, MetricReport};
use rgb2point::{Error, Result};
use serde::{Deserialize, Serialize};

/// The baseline constants shipped with the binary.
pub const BUNDLED_BASELINES: &str = include_str!("../data/baselines.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    /// Rows are categories, columns are methods.
    PerCategory,
    /// Rows are methods, columns are `metric:category` cells.
    PerMethod,
    /// Rows are `H,D,A` cells.
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineTable {
    pub title: String,
    pub direction: Direction,
    pub kind: TableKind,
    #[serde(default)]
    pub metric: Option<String>,
    #[serde(default)]
    pub reference: Option<String>,
    pub columns: Vec<String>,
    #[serde(default)]
    pub summary_baseline: Option<String>,
    pub rows: IndexMap<String, Vec<Option<f64>>>,
    #[serde(default)]
    pub published_summary: IndexMap<String, Vec<f64>>,
    #[serde(default)]
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Baselines {
    pub version: u32,
    pub tables: IndexMap<String, BaselineTable>,
}

impl Baselines {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_BASELINES).expect("bundled baselines parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            index: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn table(&self, name: &str) -> Result<&BaselineTable> {
        self.tables.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "baseline table",
            name: name.into(),
            available: self.tables.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }
}

/// Where the "Ours" entries come from.
#[derive(Debug, Clone, Copy)]
pub enum Ours<'a> {
    Published,
    Results(&'a MetricReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub label: String,
    pub ours: f64,
    pub baseline: f64,
    pub baseline_name: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub table: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    pub footer: Vec<(String, Vec<Option<f64>>)>,
    pub improvements: Vec<Improvement>,
}

impl ComparisonTable {
    pub fn improvement(&self, label: &str) -> Option<f64> {
        self.improvements.iter().find(|i| i.label == label).map(|i| i.percent)
    }

    pub fn to_text(&self) -> String {
        let first = self
            .rows
            .iter()
            .chain(&self.footer)
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let width = self.columns.iter().map(String::len).max().unwrap_or(0).max(7);
        let mut out = format!("{}\n", self.title);
        let _ = write!(out, "{:<first$}", "");
        for c in &self.columns {
            let _ = write!(out, "  {c:>width$}");
        }
        out.push('\n');
        let rule = "-".repeat(first + self.columns.len() * (width + 2));
        let emit = |rows: &[(String, Vec<Option<f64>>)], out: &mut String| {
            for (name, cells) in rows {
                let _ = write!(out, "{name:<first$}");
                for c in cells {
                    let cell = c.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                    let _ = write!(out, "  {cell:>width$}");
                }
                out.push('\n');
            }
        };
        out.push_str(&rule);
        out.push('\n');
        emit(&self.rows, &mut out);
        if !self.footer.is_empty() {
            out.push_str(&rule);
            out.push('\n');
            emit(&self.footer, &mut out);
        }
        for imp in &self.improvements {
            let _ = writeln!(
                out,
                "{}: {:+.2}% ({:.3} vs {} {:.3})",
                imp.label, imp.percent, imp.ours, imp.baseline_name, imp.baseline
            );
        }
        out
    }
}

fn metric_of(column: &str) -> Result<(MetricKind, Option<&str>)> {
    let (metric, category) = match column.split_once(':') {
        Some((m, c)) => (m, Some(c)),
        None => (column, None),
    };
    Ok((metric.parse()?, category))
}

/// Value of a `metric[:category]` column in table units (distances ×10²).
fn result_cell(report: &MetricReport, column: &str) -> Result<Option<f64>> {
    let (kind, category) = metric_of(column)?;
    let raw = match category {
        Some("avg") | None => report.average.get(&kind).copied(),
        Some(c) => report.category(c).and_then(|r| r.means.get(&kind).copied()),
    };
    Ok(raw.map(|v| v * kind.display_scale()))
}

fn per_category(name: &str, t: &BaselineTable, ours: Ours<'_>) -> Result<ComparisonTable> {
    let reference = t.reference.as_deref().unwrap_or("Ours");
    let ref_col = t.columns.iter().position(|c| c == reference);
    let metric: MetricKind = t.metric.as_deref().unwrap_or("fscore").parse()?;
    let mut rows = Vec::new();
    for (category, cells) in &t.rows {
        let mut cells = cells.clone();
        if let (Ours::Results(report), Some(i)) = (ours, ref_col) {
            cells[i] = report.category(category).and_then(|r| r.means.get(&metric).copied());
        }
        rows.push((category.clone(), cells));
    }
    let complete = |j: usize| rows.iter().all(|(_, c)| c[j].is_some());
    let column = |j: usize| -> Vec<f64> { rows.iter().filter_map(|(_, c)| c[j]).collect() };
    let use_published = |j: usize| matches!(ours, Ours::Published) || Some(j) != ref_col;
    let mut averages = Vec::new();
    let mut stdevs = Vec::new();
    for j in 0..t.columns.len() {
        let published = |label: &str| t.published_summary.get(label).and_then(|v| v.get(j)).copied();
        let vals = column(j);
        let computed_avg = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        let computed_sd = (vals.len() >= 2).then(|| sample_stdev(&vals));
        if complete(j) && use_published(j) {
            averages.push(published("Average").or(computed_avg));
            stdevs.push(published("Stdev.").or(computed_sd));
        } else {
            averages.push(computed_avg);
            stdevs.push(computed_sd);
        }
    }
    let mut improvements = Vec::new();
    if let (Some(r), Some(base_name)) = (ref_col, &t.summary_baseline) {
        let b = t.columns.iter().position(|c| c == base_name).ok_or_else(|| {
            Error::InvalidConfig(format!("{name}: summary baseline {base_name} is not a column"))
        })?;
        if let (Some(o), Some(bv)) = (averages[r], averages[b]) {
            improvements.push(Improvement {
                label: "average".into(),
                ours: o,
                baseline: bv,
                baseline_name: base_name.clone(),
                percent: improvement_percent(o, bv, t.direction)?,
            });
        }
        if let (Some(o), Some(bv)) = (stdevs[r], stdevs[b]) {
            improvements.push(Improvement {
                label: "stability".into(),
                ours: o,
                baseline: bv,
                baseline_name: base_name.clone(),
                percent: improvement_percent(o, bv, Direction::LowerBetter)?,
            });
        }
    }
    Ok(ComparisonTable {
        table: name.into(),
        title: t.title.clone(),
        columns: t.columns.clone(),
        rows,
        footer: vec![("Average".into(), averages), ("Stdev.".into(), stdevs)],
        improvements,
    })
}

fn per_method(name: &str, t: &BaselineTable, ours: Ours<'_>) -> Result<ComparisonTable> {
    let reference = t.reference.as_deref().unwrap_or("Ours");
    let mut rows: Vec<(String, Vec<Option<f64>>)> = t.rows.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    if let Ours::Results(report) = ours {
        let cells = t.columns.iter().map(|c| result_cell(report, c)).collect::<Result<Vec<_>>>()?;
        match rows.iter_mut().find(|(n, _)| n == reference) {
            Some(row) => row.1 = cells,
            None => rows.push((reference.into(), cells)),
        }
    }
    let ours_row = rows
        .iter()
        .find(|(n, _)| n == reference)
        .map(|(_, c)| c.clone())
        .ok_or_else(|| Error::InvalidConfig(format!("{name}: no {reference} row")))?;
    let is_baseline = |n: &str| n != reference && !t.variants.iter().any(|v| v == n);

    let mut improvements = Vec::new();
    let mut per_metric: IndexMap<String, Vec<(f64, f64)>> = IndexMap::new();
    for (j, column) in t.columns.iter().enumerate() {
        let best = rows
            .iter()
            .filter(|(n, _)| is_baseline(n))
            .filter_map(|(n, c)| c[j].map(|v| (n, v)))
            .min_by(|a, b| match t.direction {
                Direction::LowerBetter => a.1.total_cmp(&b.1),
                Direction::HigherBetter => b.1.total_cmp(&a.1),
            });
        let (Some((best_name, best)), Some(o)) = (best, ours_row[j]) else {
            continue;
        };
        improvements.push(Improvement {
            label: column.clone(),
            ours: o,
            baseline: best,
            baseline_name: best_name.clone(),
            percent: improvement_percent(o, best, t.direction)?,
        });
        let metric = column.split(':').next().unwrap_or(column).to_string();
        per_metric.entry(metric).or_default().push((o, best));
    }
    if t.columns.iter().any(|c| c.contains(':')) {
        for (metric, pairs) in per_metric {
            let n = pairs.len() as f64;
            improvements.push(Improvement {
                label: format!("{metric} mean"),
                ours: pairs.iter().map(|p| p.0).sum::<f64>() / n,
                baseline: pairs.iter().map(|p| p.1).sum::<f64>() / n,
                baseline_name: "best per column".into(),
                percent: mean_improvement_percent(&pairs, t.direction)?,
            });
        }
    }
    Ok(ComparisonTable {
        table: name.into(),
        title: t.title.clone(),
        columns: t.columns.clone(),
        rows,
        footer: Vec::new(),
        improvements,
    })
}

/// Builds the comparison for baseline table `name`.
///
/// Per-category tables compare the reference column's average against the
/// designated summary baseline. Per-method tables compare each column against
/// the best non-variant baseline in that column, and also report the mean of
/// those per-column improvements for each metric.
pub fn compare(baselines: &Baselines, name: &str, ours: Ours<'_>) -> Result<ComparisonTable> {
    let t = baselines.table(name)?;
    match t.kind {
        TableKind::PerCategory => per_category(name, t, ours),
        TableKind::PerMethod => per_method(name, t, ours),
        TableKind::Grid => Err(Error::InvalidConfig(format!(
            "{name} is an ablation grid; compare it with `ablate` output instead"
        ))),
    }
}

/// `(nopre − pre) / pre · 100`.
pub fn difference_percent(without_pretraining: f64, pretrained: f64) -> Result<f64> {
    if !(pretrained > 0.0) {
        return Err(Error::NonpositiveBaseline(pretrained));
    }
    Ok(100.0 * (without_pretraining - pretrained) / pretrained)
}
