use serde::{Deserialize, Serialize};

use super::{Point3, PointCloud};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Centroid at the origin, farthest point at radius 1.
    #[default]
    UnitSphereCentered,
    /// Bounding-box center at the origin, longest side of length 1.
    UnitCubeCentered,
    None,
}

/// The affine map `q = (p + offset) * scale` applied by [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mode: NormalizationMode,
    pub scale: f64,
    pub offset: Point3,
}

impl NormalizationSpec {
    pub fn identity() -> Self {
        Self {
            mode: NormalizationMode::None,
            scale: 1.0,
            offset: [0.0; 3],
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        [
            (p[0] + self.offset[0]) * self.scale,
            (p[1] + self.offset[1]) * self.scale,
            (p[2] + self.offset[2]) * self.scale,
        ]
    }

    pub fn invert(&self, q: &Point3) -> Point3 {
        [
            q[0] / self.scale - self.offset[0],
            q[1] / self.scale - self.offset[1],
            q[2] / self.scale - self.offset[2],
        ]
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> Result<PointCloud> {
        cloud.map_points(|p| self.apply(p))
    }

    pub fn invert_cloud(&self, cloud: &PointCloud) -> Result<PointCloud> {
        cloud.map_points(|q| self.invert(q))
    }
}

/// Normalizes a cloud and returns the transform that was applied.
///
/// A cloud whose points all coincide has no defined scale; it is translated
/// to the origin and scale 1 is recorded.
pub fn normalize(cloud: &PointCloud, mode: NormalizationMode) -> Result<(PointCloud, NormalizationSpec)> {
    let spec = match mode {
        NormalizationMode::None => NormalizationSpec::identity(),
        NormalizationMode::UnitSphereCentered => {
            let c = cloud.centroid();
            let radius = cloud
                .points()
                .iter()
                .map(|p| super::distance(p, &c))
                .fold(0.0, f64::max);
            NormalizationSpec {
                mode,
                scale: scale_for(radius),
                offset: c.map(|v| -v),
            }
        }
        NormalizationMode::UnitCubeCentered => {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for p in cloud.points() {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            let side = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
            NormalizationSpec {
                mode,
                scale: scale_for(side),
                offset: [0, 1, 2].map(|k| -(lo[k] + hi[k]) / 2.0),
            }
        }
    };
    Ok((spec.apply_cloud(cloud)?, spec))
}

fn scale_for(extent: f64) -> f64 {
    if extent > 0.0 {
        1.0 / extent
    } else {
        log::debug!("degenerate cloud: all points coincide, keeping scale 1");
        1.0
    }
}
