//! Point clouds: the value type shared by every other module, plus file IO,
//! mesh surface sampling, normalization and nearest-neighbor queries.

mod io;
mod mesh;
mod neighbors;
mod normalize;

pub use io::{load_cloud, save_cloud, CloudFormat};
pub use mesh::{load_obj, sample_mesh_surface, TriangleMesh};
pub use neighbors::{
    nearest_neighbor, neighbor_index_registry, KdTree, LinearScan, NearestNeighbor, Neighbor,
    NeighborIndexFactory,
};
pub use normalize::{normalize, NormalizationMode, NormalizationSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn distance(a: &Point3, b: &Point3) -> f64 {
    squared_distance(a, b).sqrt()
}

/// An ordered, nonempty set of finite 3D points with optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

impl PointCloud {
    /// Fails with [`Error::EmptyCloud`] or [`Error::NonFinite`] when the
    /// invariants do not hold.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            points,
            category: None,
            id: None,
        })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(coords: &[f32]) -> Result<Self> {
        if coords.len() % 3 != 0 {
            return Err(Error::WrongInputShape {
                expected: vec![coords.len() / 3 * 3],
                got: vec![coords.len()],
            });
        }
        Self::new(
            coords
                .chunks_exact(3)
                .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
                .collect(),
        )
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn category(&self) -> Option<&str> {
        self.category.as_deref()
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    /// Applies `f` to every point, keeping labels.
    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Result<Self> {
        let mut out = Self::new(self.points.iter().map(f).collect())?;
        out.category = self.category.clone();
        out.id = self.id.clone();
        Ok(out)
    }

    /// Returns the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Self::new(indices.iter().map(|&i| self.points[i]).collect())?;
        out.category = self.category.clone();
        out.id = self.id.clone();
        Ok(out)
    }

    pub fn to_flat_f32(&self) -> Vec<f32> {
        self.points
            .iter()
            .flat_map(|p| p.iter().map(|&c| c as f32))
            .collect()
    }
}
