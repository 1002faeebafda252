//! Chamfer training loss with its analytic gradient.

use crate::error::{Error, Result};
use crate::metrics::directional_mean;
use crate::pointcloud::{KdTree, NearestNeighbor, Point3, PointCloud};

/// Chamfer loss; identical in value to the Chamfer metric.
pub fn chamfer_loss(gt: &PointCloud, generated: &PointCloud) -> Result<f64> {
    Ok(chamfer_loss_with_grad(gt.points(), generated.points())?.0)
}

/// Chamfer loss and its gradient with respect to every generated point.
///
/// Nearest-neighbor ties go to the lowest index and only the selected
/// neighbor receives gradient; the gradient of `‖x − y‖` at `x = y` is zero.
pub fn chamfer_loss_with_grad(gt: &[Point3], generated: &[Point3]) -> Result<(f64, Vec<Point3>)> {
    if gt.is_empty() || generated.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let gt_index = KdTree::build(gt)?;
    let gen_index = KdTree::build(generated)?;
    let (ng, nr) = (gt.len() as f64, generated.len() as f64);
    let mut grad = vec![[0.0; 3]; generated.len()];

    let mut forward = 0.0;
    for (r, g) in generated.iter().zip(grad.iter_mut()) {
        let nn = gt_index.nearest(r);
        forward += nn.distance;
        if nn.distance > 0.0 {
            let k = 1.0 / (2.0 * nr * nn.distance);
            for c in 0..3 {
                g[c] += k * (r[c] - nn.point[c]);
            }
        }
    }
    let mut backward = 0.0;
    for x in gt {
        let nn = gen_index.nearest(x);
        backward += nn.distance;
        if nn.distance > 0.0 {
            let k = 1.0 / (2.0 * ng * nn.distance);
            let g = &mut grad[nn.index];
            for c in 0..3 {
                g[c] += k * (nn.point[c] - x[c]);
            }
        }
    }
    Ok((0.5 * forward / nr + 0.5 * backward / ng, grad))
}

/// `alpha · chamfer_loss(G, R)`.
pub fn training_objective(gt: &PointCloud, generated: &PointCloud, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    Ok(alpha * chamfer_loss(gt, generated)?)
}

/// Mean Chamfer loss of `generated[i]` against `gt[i]`.
pub fn mean_chamfer(gt: &[PointCloud], generated: &[PointCloud]) -> f64 {
    let total: f64 = gt
        .iter()
        .zip(generated)
        .map(|(g, r)| {
            let (gi, ri) = (KdTree::from_cloud(g), KdTree::from_cloud(r));
            0.5 * directional_mean(g.points(), &ri) + 0.5 * directional_mean(r.points(), &gi)
        })
        .sum();
    total / gt.len().max(1) as f64
}
