//! Point cloud similarity metrics and the reporting statistics built on them.

mod chamfer;
pub mod emd;
mod fscore;
mod report;

pub use chamfer::{chamfer_distance, chamfer_from_indices, directional_mean};
pub use emd::{emd, emd_solver_registry, EmdConfig, EmdSolver, Transport};
pub use fscore::{fscore, precision_recall, DEFAULT_FSCORE_THRESHOLD};
pub use report::{
    aggregate_report, improvement_percent, mean_improvement_percent, sample_stdev, CategoryRow,
    Direction, MetricReport, SampleScore,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Chamfer,
    Emd,
    Fscore,
}

impl MetricKind {
    pub fn short_name(self) -> &'static str {
        match self {
            MetricKind::Chamfer => "cd",
            MetricKind::Emd => "emd",
            MetricKind::Fscore => "fscore",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricKind::Fscore => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    /// Display factor used by the tables: distances are shown ×10².
    pub fn display_scale(self) -> f64 {
        match self {
            MetricKind::Fscore => 1.0,
            _ => 100.0,
        }
    }

    pub fn column_label(self) -> &'static str {
        match self {
            MetricKind::Chamfer => "CD(x10^2)",
            MetricKind::Emd => "EMD(x10^2)",
            MetricKind::Fscore => "F-score",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cd" | "chamfer" => Ok(MetricKind::Chamfer),
            "emd" => Ok(MetricKind::Emd),
            "f" | "fscore" | "f-score" => Ok(MetricKind::Fscore),
            other => Err(Error::UnknownStrategy {
                kind: "metric",
                name: other.to_string(),
                available: "cd, emd, fscore".into(),
            }),
        }
    }
}

/// A single metric evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_hint: Option<f64>,
}

impl MetricValue {
    pub fn new(kind: MetricKind, value: f64) -> Self {
        debug_assert!(value >= 0.0);
        let scale = kind.display_scale();
        Self {
            kind,
            value,
            scale_hint: (scale != 1.0).then_some(scale),
        }
    }

    pub fn scaled(&self) -> f64 {
        self.value * self.scale_hint.unwrap_or(1.0)
    }
}

/// Parameters shared by the registered metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSettings {
    pub tau: f64,
    pub emd_solver: String,
    pub emd: EmdConfig,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            tau: DEFAULT_FSCORE_THRESHOLD,
            emd_solver: "auto".into(),
            emd: EmdConfig::default(),
        }
    }
}

pub trait Metric: Send + Sync {
    fn kind(&self) -> MetricKind;

    fn evaluate(&self, gt: &PointCloud, generated: &PointCloud) -> Result<MetricValue>;
}

pub type MetricFactory = fn(&MetricSettings) -> Result<Box<dyn Metric>>;

struct ChamferMetric;

impl Metric for ChamferMetric {
    fn kind(&self) -> MetricKind {
        MetricKind::Chamfer
    }

    fn evaluate(&self, gt: &PointCloud, generated: &PointCloud) -> Result<MetricValue> {
        Ok(chamfer_distance(gt, generated))
    }
}

struct EmdMetric(Box<dyn EmdSolver>);

impl Metric for EmdMetric {
    fn kind(&self) -> MetricKind {
        MetricKind::Emd
    }

    fn evaluate(&self, gt: &PointCloud, generated: &PointCloud) -> Result<MetricValue> {
        emd(gt, generated, self.0.as_ref())
    }
}

struct FscoreMetric(f64);

impl Metric for FscoreMetric {
    fn kind(&self) -> MetricKind {
        MetricKind::Fscore
    }

    fn evaluate(&self, gt: &PointCloud, generated: &PointCloud) -> Result<MetricValue> {
        fscore(gt, generated, self.0)
    }
}

/// Metrics selectable by name (`cd`, `emd`, `fscore`).
pub fn metric_registry() -> Registry<MetricFactory> {
    let mut reg: Registry<MetricFactory> = Registry::new("metric");
    reg.register("cd", |_| Ok(Box::new(ChamferMetric)))
        .register("emd", |s| {
            let solver = emd_solver_registry().get(&s.emd_solver)?(&s.emd);
            Ok(Box::new(EmdMetric(solver)))
        })
        .register("fscore", |s| {
            if !(s.tau > 0.0) {
                return Err(Error::NonpositiveThreshold(s.tau));
            }
            Ok(Box::new(FscoreMetric(s.tau)))
        });
    reg
}

/// Builds metric evaluators for a comma-separated list such as `cd,emd,fscore`.
pub fn metrics_from_list(list: &str, settings: &MetricSettings) -> Result<Vec<Box<dyn Metric>>> {
    let reg = metric_registry();
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|name| {
            let kind: MetricKind = name.parse()?;
            reg.get(kind.short_name())?(settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_metric_list() {
        let m = metrics_from_list("cd,emd,fscore", &MetricSettings::default()).unwrap();
        let kinds: Vec<_> = m.iter().map(|m| m.kind()).collect();
        assert_eq!(kinds, vec![MetricKind::Chamfer, MetricKind::Emd, MetricKind::Fscore]);
        assert!(metrics_from_list("cd,hausdorff", &MetricSettings::default()).is_err());
        let bad_tau = MetricSettings {
            tau: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            metrics_from_list("fscore", &bad_tau),
            Err(Error::NonpositiveThreshold(_))
        ));
    }

    #[test]
    fn scale_hint_for_distances_only() {
        assert_eq!(MetricValue::new(MetricKind::Chamfer, 0.0405).scaled(), 4.05);
        assert_eq!(MetricValue::new(MetricKind::Fscore, 0.5).scale_hint, None);
    }
}
