use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetManifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::pointcloud::{load_cloud, load_obj, normalize, sample_mesh_surface, NormalizationMode, PointCloud};

/// Ground truth with exactly `target_n` points in unit-sphere coordinates.
///
/// A stored cloud with enough points is normalized as a whole, then
/// subsampled without replacement (original order kept). Otherwise the mesh
/// surface is sampled. Points are never duplicated to reach `target_n`.
pub fn load_gt_cloud(manifest: &DatasetManifest, record: &ManifestRecord, target_n: usize, seed: u64) -> Result<PointCloud> {
    let mut have = 0;
    if let Some(rel) = &record.cloud {
        let cloud = load_cloud(manifest.resolve(rel))?;
        have = cloud.len();
        if have >= target_n {
            let (cloud, _) = normalize(&cloud, NormalizationMode::UnitSphereCentered)?;
            let cloud = if have == target_n {
                cloud
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = rand::seq::index::sample(&mut rng, have, target_n).into_vec();
                idx.sort_unstable();
                cloud.select(&idx)?
            };
            return Ok(cloud.with_category(&record.category).with_id(&record.id));
        }
    }
    match &record.mesh {
        Some(rel) => {
            let mesh = load_obj(manifest.resolve(rel))?;
            let sampled = sample_mesh_surface(&mesh, target_n, seed)?;
            let (cloud, _) = normalize(&sampled, NormalizationMode::UnitSphereCentered)?;
            Ok(cloud.with_category(&record.category).with_id(&record.id))
        }
        None => Err(Error::InsufficientPoints { have, need: target_n }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SourceKind, Split};
    use crate::pointcloud::{save_cloud, CloudFormat, TriangleMesh};
    use std::path::PathBuf;

    fn setup(n: usize, with_mesh: bool) -> (tempfile::TempDir, DatasetManifest) {
        let dir = tempfile::tempdir().unwrap();
        let pts: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, (i % 7) as f64, -(i as f64) * 0.5]).collect();
        save_cloud(&PointCloud::new(pts).unwrap(), dir.path().join("cloud.ply"), CloudFormat::PlyAscii).unwrap();
        if with_mesh {
            let m = TriangleMesh::new(
                vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
            );
            m.write_obj(dir.path().join("mesh.obj")).unwrap();
        }
        let manifest = DatasetManifest {
            source: SourceKind::ShapenetSynthetic,
            root: dir.path().to_path_buf(),
            gt_resolution: n,
            records: vec![ManifestRecord {
                id: "s".into(),
                category: "c".into(),
                split: Split::Train,
                images: vec![],
                cloud: Some(PathBuf::from("cloud.ply")),
                mesh: with_mesh.then(|| PathBuf::from("mesh.obj")),
            }],
        };
        (dir, manifest)
    }

    #[test]
    fn subsample_is_a_deterministic_subset() {
        let (_d, m) = setup(2048, false);
        let full = load_gt_cloud(&m, &m.records[0], 2048, 0).unwrap();
        let a = load_gt_cloud(&m, &m.records[0], 1024, 3).unwrap();
        assert_eq!(a.len(), 1024);
        let members: std::collections::HashSet<[u64; 3]> =
            full.points().iter().map(|p| p.map(f64::to_bits)).collect();
        assert!(a.points().iter().all(|p| members.contains(&p.map(f64::to_bits))));
        assert_eq!(a, load_gt_cloud(&m, &m.records[0], 1024, 3).unwrap());
        assert_eq!(a.category(), Some("c"));
    }

    #[test]
    fn identity_when_sizes_match() {
        let (_d, m) = setup(64, false);
        let raw = load_cloud(m.resolve(m.records[0].cloud.as_ref().unwrap())).unwrap();
        let (expected, _) = normalize(&raw, NormalizationMode::UnitSphereCentered).unwrap();
        let got = load_gt_cloud(&m, &m.records[0], 64, 9).unwrap();
        assert_eq!(got.points(), expected.points());
    }

    #[test]
    fn mesh_fallback_or_error() {
        let (_d, m) = setup(100, false);
        assert!(matches!(
            load_gt_cloud(&m, &m.records[0], 8192, 0),
            Err(Error::InsufficientPoints { have: 100, need: 8192 })
        ));
        let (_d, m) = setup(100, true);
        let c = load_gt_cloud(&m, &m.records[0], 8192, 0).unwrap();
        assert_eq!(c.len(), 8192);
        let max_r = c.points().iter().map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()).fold(0.0, f64::max);
        assert!((max_r - 1.0).abs() < 1e-9);
    }
}
