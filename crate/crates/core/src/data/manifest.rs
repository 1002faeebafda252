use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "rgb2point-manifest-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Rendered synthetic objects with train/test splits.
    ShapenetSynthetic,
    /// Real photographs, evaluation only.
    Pix3dReal,
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shapenet-synthetic" | "shapenet" => Ok(Self::ShapenetSynthetic),
            "pix3d-real" | "pix3d" => Ok(Self::Pix3dReal),
            other => Err(Error::InvalidConfig(format!("unknown dataset source {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One object. Paths are relative to the manifest root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub category: String,
    pub split: Split,
    /// Rendered views, sorted by file name.
    pub images: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    source: SourceKind,
    root: PathBuf,
    gt_resolution: usize,
    records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub source: SourceKind,
    pub root: PathBuf,
    pub gt_resolution: usize,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct ManifestOptions {
    /// JSON object mapping sample id to `"train"` or `"test"`.
    pub split_file: Option<PathBuf>,
    /// Restrict to these categories; each must exist under the root.
    pub categories: Option<Vec<String>>,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn list_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                if !name.starts_with('.') {
                    out.push((name.to_string(), path));
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_split_file(path: &Path) -> Result<BTreeMap<String, Split>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
        path: path.to_path_buf(),
        index: e.line(),
        reason: e.to_string(),
    })
}

fn relative(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf())
}

/// Scans `<root>/<category>/<id>/{renders/*.png, cloud.ply | mesh.obj}`.
///
/// Records are sorted by category, then id. Without a split file, synthetic
/// sources are all `train` and real sources all `test`.
pub fn build_manifest(
    root: &Path,
    source: SourceKind,
    gt_resolution: usize,
    options: &ManifestOptions,
) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::FileMissing(root.to_path_buf()));
    }
    let splits = options.split_file.as_deref().map(read_split_file).transpose()?;
    let mut categories = list_dirs(root)?;
    if let Some(wanted) = &options.categories {
        let present: BTreeSet<&str> = categories.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(missing) = wanted.iter().find(|w| !present.contains(w.as_str())) {
            return Err(Error::UnknownCategory(missing.clone()));
        }
        categories.retain(|(n, _)| wanted.contains(n));
    }

    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (category, cat_dir) in categories {
        for (id, dir) in list_dirs(&cat_dir)? {
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            let renders = dir.join("renders");
            let mut images: Vec<PathBuf> = match fs::read_dir(&renders) {
                Ok(entries) => entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                    })
                    .map(|p| relative(root, &p))
                    .collect(),
                Err(_) => Vec::new(),
            };
            if images.is_empty() {
                return Err(Error::MissingFile { record: id, path: renders });
            }
            images.sort();
            let cloud = dir.join("cloud.ply");
            let mesh = dir.join("mesh.obj");
            if !cloud.is_file() && !mesh.is_file() {
                return Err(Error::MissingFile { record: id, path: cloud });
            }
            let split = match (&splits, source) {
                (Some(s), _) => *s.get(&id).ok_or_else(|| {
                    Error::InvalidConfig(format!("split file has no entry for sample {id}"))
                })?,
                (None, SourceKind::ShapenetSynthetic) => Split::Train,
                (None, SourceKind::Pix3dReal) => Split::Test,
            };
            if source == SourceKind::Pix3dReal && split == Split::Train {
                return Err(Error::InvalidConfig(format!(
                    "sample {id}: pix3d-real records are evaluation-only"
                )));
            }
            records.push(ManifestRecord {
                id,
                category: category.clone(),
                split,
                images,
                cloud: cloud.is_file().then(|| relative(root, &cloud)),
                mesh: mesh.is_file().then(|| relative(root, &mesh)),
            });
        }
    }
    Ok(DatasetManifest {
        source,
        root: root.to_path_buf(),
        gt_resolution,
        records,
    })
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn categories(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.category.as_str()).collect();
        set.into_iter().collect()
    }

    /// Header line followed by one record per line.
    pub fn to_jsonl(&self) -> String {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            source: self.source,
            root: self.root.clone(),
            gt_resolution: self.gt_resolution,
            records: self.records.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |index: usize, reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            index,
            reason,
        };
        let mut lines = BufReader::new(f).lines().enumerate();
        let header: ManifestHeader = match lines.next() {
            Some((_, line)) => {
                serde_json::from_str(&line.map_err(|e| Error::io(path, e))?).map_err(|e| bad(1, e.to_string()))?
            }
            None => return Err(bad(1, "empty manifest".into())),
        };
        if header.format != MANIFEST_FORMAT {
            return Err(Error::VersionMismatch {
                expected: MANIFEST_FORMAT.into(),
                found: header.format,
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?);
        }
        if records.len() != header.records {
            return Err(bad(
                header.records + 1,
                format!("header declares {} records, found {}", header.records, records.len()),
            ));
        }
        let m = Self {
            source: header.source,
            root: header.root,
            gt_resolution: header.gt_resolution,
            records,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(&r.id) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            if self.source == SourceKind::Pix3dReal && r.split == Split::Train {
                return Err(Error::InvalidConfig(format!(
                    "sample {}: pix3d-real records are evaluation-only",
                    r.id
                )));
            }
            for p in r.images.iter().chain(&r.cloud).chain(&r.mesh) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::MissingFile {
                        record: r.id.clone(),
                        path: full,
                    });
                }
            }
        }
        Ok(())
    }
}
