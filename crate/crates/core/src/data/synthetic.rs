//! Procedural stand-in for a rendered shape corpus: parametric meshes, flat
//! shaded RGBA renders, surface-sampled clouds and a split file, laid out
//! exactly like the on-disk dataset format.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::{Rgba, RgbaImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Split;
use crate::error::{Error, Result};
use crate::pointcloud::{sample_mesh_surface, save_cloud, CloudFormat, Point3, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Box,
    Cylinder,
    Table,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Table];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Table => "table",
        }
    }

    fn color(self) -> [f64; 3] {
        match self {
            ShapeKind::Box => [0.80, 0.45, 0.25],
            ShapeKind::Cylinder => [0.30, 0.55, 0.85],
            ShapeKind::Table => [0.55, 0.70, 0.35],
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub categories: Vec<ShapeKind>,
    pub per_category: usize,
    /// Renders per object, at evenly spaced camera azimuths.
    pub views: usize,
    pub image_size: u32,
    /// Points written to each `cloud.ply`.
    pub cloud_points: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            categories: ShapeKind::ALL.to_vec(),
            per_category: 10,
            views: 1,
            image_size: 137,
            cloud_points: 2048,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

fn cuboid(center: Point3, half: Point3) -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            [
                center[0] + s(1) * half[0],
                center[1] + s(2) * half[1],
                center[2] + s(4) * half[2],
            ]
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(vertices, triangles)
}

fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut vertices = vec![[0.0, -height / 2.0, 0.0], [0.0, height / 2.0, 0.0]];
    for i in 0..segments {
        let t = 2.0 * PI * i as f64 / segments as f64;
        let (x, z) = (radius * t.cos(), radius * t.sin());
        vertices.push([x, -height / 2.0, z]);
        vertices.push([x, height / 2.0, z]);
    }
    let mut triangles = Vec::new();
    for i in 0..segments {
        let (b0, t0) = (2 + 2 * i, 3 + 2 * i);
        let (b1, t1) = (2 + 2 * ((i + 1) % segments), 3 + 2 * ((i + 1) % segments));
        triangles.extend([[b0, t0, t1], [b0, t1, b1], [0, b1, b0], [1, t0, t1]]);
    }
    TriangleMesh::new(vertices, triangles)
}

fn rotate_y(mesh: &mut TriangleMesh, angle: f64) {
    let (s, c) = angle.sin_cos();
    for v in &mut mesh.vertices {
        *v = [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]];
    }
}

/// A random instance of `kind`, centered near the origin with extent ≤ 1.
pub fn random_shape(kind: ShapeKind, rng: &mut impl Rng) -> TriangleMesh {
    let mut mesh = match kind {
        ShapeKind::Box => {
            let half = [0, 1, 2].map(|_| rng.gen_range(0.15..0.5));
            cuboid([0.0; 3], half)
        }
        ShapeKind::Cylinder => cylinder(rng.gen_range(0.15..0.5), rng.gen_range(0.3..1.0), 24),
        ShapeKind::Table => {
            let (hw, hd) = (rng.gen_range(0.3..0.5), rng.gen_range(0.2..0.5));
            let height = rng.gen_range(0.4..0.8);
            let top = rng.gen_range(0.025..0.05);
            let leg = rng.gen_range(0.03..0.06);
            let mut m = cuboid([0.0, height / 2.0 - top, 0.0], [hw, top, hd]);
            let leg_h = (height - 2.0 * top) / 2.0;
            for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                let c = [sx * (hw - leg), -height / 2.0 + leg_h, sz * (hd - leg)];
                m.merge(&cuboid(c, [leg, leg_h, leg]));
            }
            m
        }
    };
    rotate_y(&mut mesh, rng.gen_range(0.0..PI / 2.0));
    mesh
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: Point3) -> Point3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Flat-shaded perspective render on a transparent background.
pub fn render(mesh: &TriangleMesh, color: [f64; 3], azimuth: f64, elevation: f64, size: u32) -> RgbaImage {
    let dist = 2.8;
    let eye = [
        dist * elevation.cos() * azimuth.sin(),
        dist * elevation.sin(),
        dist * elevation.cos() * azimuth.cos(),
    ];
    let fwd = unit(sub([0.0; 3], eye));
    let right = unit(cross(fwd, [0.0, 1.0, 0.0]));
    let up = cross(right, fwd);
    let light = unit([-0.4, 0.8, 0.6]);
    let half = size as f64 / 2.0;
    let focal = half / (20f64.to_radians()).tan();

    let projected: Vec<(f64, f64, f64)> = mesh
        .vertices
        .iter()
        .map(|&v| {
            let d = sub(v, eye);
            let z = dot(d, fwd);
            (half + focal * dot(d, right) / z, half - focal * dot(d, up) / z, z)
        })
        .collect();

    let mut img = RgbaImage::from_pixel(size, size, Rgba([0, 0, 0, 0]));
    let mut depth = vec![f64::INFINITY; (size * size) as usize];
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let n = unit(cross(sub(b, a), sub(c, a)));
        let shade = 0.35 + 0.65 * dot(n, light).abs();
        let rgb = color.map(|ch| (ch * shade * 255.0).round().clamp(0.0, 255.0) as u8);
        let [p0, p1, p2] = mesh.triangles[t].map(|i| projected[i]);
        let area = (p1.0 - p0.0) * (p2.1 - p0.1) - (p1.1 - p0.1) * (p2.0 - p0.0);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = p0.0.min(p1.0).min(p2.0).floor().max(0.0) as u32;
        let x1 = (p0.0.max(p1.0).max(p2.0).ceil() as i64).clamp(0, size as i64 - 1) as u32;
        let y0 = p0.1.min(p1.1).min(p2.1).floor().max(0.0) as u32;
        let y1 = (p0.1.max(p1.1).max(p2.1).ceil() as i64).clamp(0, size as i64 - 1) as u32;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let w0 = ((p1.0 - px) * (p2.1 - py) - (p1.1 - py) * (p2.0 - px)) / area;
                let w1 = ((p2.0 - px) * (p0.1 - py) - (p2.1 - py) * (p0.0 - px)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * p0.2 + w1 * p1.2 + w2 * p2.2;
                let k = (y * size + x) as usize;
                if z < depth[k] {
                    depth[k] = z;
                    img.put_pixel(x, y, Rgba([rgb[0], rgb[1], rgb[2], 255]));
                }
            }
        }
    }
    img
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub objects: usize,
    pub train: usize,
    pub test: usize,
}

/// Writes `<root>/<category>/<id>/{renders/NN.png, cloud.ply, mesh.obj}` and
/// `<root>/split.json`.
pub fn generate_synthetic(root: &Path, spec: &SyntheticSpec) -> Result<SyntheticSummary> {
    if spec.views == 0 || spec.per_category == 0 || spec.cloud_points == 0 {
        return Err(Error::InvalidConfig("views, per_category and cloud_points must be positive".into()));
    }
    let io = |p: &Path, e: std::io::Error| Error::Io {
        path: p.to_path_buf(),
        source: e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = BTreeMap::new();
    for &kind in &spec.categories {
        let mut ids = Vec::new();
        for i in 0..spec.per_category {
            let id = format!("{}_{i:04}", kind.name());
            let dir = root.join(kind.name()).join(&id);
            let renders = dir.join("renders");
            fs::create_dir_all(&renders).map_err(|e| io(&renders, e))?;
            let mesh = random_shape(kind, &mut rng);
            mesh.write_obj(dir.join("mesh.obj"))?;
            let cloud = sample_mesh_surface(&mesh, spec.cloud_points, rng.gen())?;
            save_cloud(&cloud, dir.join("cloud.ply"), CloudFormat::PlyAscii)?;
            for v in 0..spec.views {
                let azimuth = 2.0 * PI * v as f64 / spec.views as f64 + PI / 4.0;
                let img = render(&mesh, kind.color(), azimuth, 25f64.to_radians(), spec.image_size);
                let path = renders.join(format!("{v:02}.png"));
                img.save(&path).map_err(|e| Error::UnreadableImage {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
            }
            ids.push(id);
        }
        ids.shuffle(&mut rng);
        let n_test = (spec.per_category as f64 * spec.test_fraction).round() as usize;
        for (j, id) in ids.into_iter().enumerate() {
            split.insert(id, if j < n_test { Split::Test } else { Split::Train });
        }
    }
    let split_path = root.join("split.json");
    fs::write(&split_path, serde_json::to_string_pretty(&split)?).map_err(|e| io(&split_path, e))?;
    let test = split.values().filter(|s| **s == Split::Test).count();
    Ok(SyntheticSummary {
        objects: split.len(),
        train: split.len() - test,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_is_closed_with_expected_area() {
        let m = cuboid([0.0; 3], [0.5, 1.0, 1.5]);
        assert!((m.surface_area() - 8.0 * (0.5 + 1.5 + 0.75)).abs() < 1e-12);
        let c = cylinder(1.0, 2.0, 256);
        assert!((c.surface_area() - (2.0 * PI * 2.0 + 2.0 * PI)).abs() < 0.01);
    }

    #[test]
    fn render_covers_object_only() {
        let m = cuboid([0.0; 3], [0.3, 0.3, 0.3]);
        let img = render(&m, [1.0, 0.0, 0.0], 0.5, 0.4, 64);
        assert_eq!(img.get_pixel(0, 0).0[3], 0);
        assert_eq!(img.get_pixel(32, 32).0[3], 255);
        let covered = img.pixels().filter(|p| p.0[3] == 255).count();
        assert!(covered > 200 && covered < 64 * 64 / 2, "{covered}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            per_category: 3,
            views: 2,
            image_size: 32,
            cloud_points: 64,
            ..SyntheticSpec::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let s = generate_synthetic(a.path(), &spec).unwrap();
        generate_synthetic(b.path(), &spec).unwrap();
        assert_eq!(s.objects, 9);
        assert_eq!(s.test, 3);
        for rel in ["box/box_0001/cloud.ply", "table/table_0002/renders/01.png", "split.json"] {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
        }
    }
}
