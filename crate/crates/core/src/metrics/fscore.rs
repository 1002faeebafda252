use super::{MetricKind, MetricValue};
use crate::error::{Error, Result};
use crate::pointcloud::{KdTree, NearestNeighbor, Point3, PointCloud};

/// Distance threshold used for all F-score tables.
pub const DEFAULT_FSCORE_THRESHOLD: f64 = 0.01;

fn fraction_within(from: &[Point3], to: &dyn NearestNeighbor, tau: f64) -> f64 {
    let hits = from.iter().filter(|x| to.nearest(x).distance < tau).count();
    hits as f64 / from.len() as f64
}

/// Returns `(precision, recall)`: the fraction of generated points closer
/// than `tau` to the ground truth, and of ground-truth points closer than
/// `tau` to the generated cloud.
pub fn precision_recall(gt: &PointCloud, generated: &PointCloud, tau: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::NonpositiveThreshold(tau));
    }
    let precision = fraction_within(generated.points(), &KdTree::from_cloud(gt), tau);
    let recall = fraction_within(gt.points(), &KdTree::from_cloud(generated), tau);
    Ok((precision, recall))
}

/// Harmonic mean of precision and recall at threshold `tau`; zero when both
/// are zero.
pub fn fscore(gt: &PointCloud, generated: &PointCloud, tau: f64) -> Result<MetricValue> {
    let (p, r) = precision_recall(gt, generated, tau)?;
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok(MetricValue::new(MetricKind::Fscore, f))
}
