use super::{MetricKind, MetricValue};
use crate::pointcloud::{KdTree, NearestNeighbor, Point3, PointCloud};

/// Mean distance from each point of `from` to its nearest neighbor in `to`.
pub fn directional_mean(from: &[Point3], to: &dyn NearestNeighbor) -> f64 {
    let sum: f64 = from.iter().map(|x| to.nearest(x).distance).sum();
    sum / from.len() as f64
}

/// Symmetric Chamfer distance with unsquared Euclidean norms:
///
/// `CD(G, R) = 1/(2|G|) Σ_{x∈G} ‖x − NN(x, R)‖ + 1/(2|R|) Σ_{y∈R} ‖y − NN(y, G)‖`
pub fn chamfer_distance(gt: &PointCloud, generated: &PointCloud) -> MetricValue {
    let gt_index = KdTree::from_cloud(gt);
    let gen_index = KdTree::from_cloud(generated);
    MetricValue::new(
        MetricKind::Chamfer,
        chamfer_from_indices(gt.points(), &gt_index, generated.points(), &gen_index),
    )
}

/// Chamfer distance with caller-supplied indices over the same point sets.
pub fn chamfer_from_indices(
    gt: &[Point3],
    gt_index: &dyn NearestNeighbor,
    generated: &[Point3],
    gen_index: &dyn NearestNeighbor,
) -> f64 {
    0.5 * directional_mean(gt, gen_index) + 0.5 * directional_mean(generated, gt_index)
}
