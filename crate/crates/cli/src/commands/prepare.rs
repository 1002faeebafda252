use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rgb2point::data::{build_manifest, ManifestOptions, SourceKind, Split};
use rgb2point::Result;
use serde::Serialize;

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Dataset root: <root>/<category>/<id>/renders/*.png plus cloud.ply or mesh.obj
    #[arg(long)]
    pub root: PathBuf,
    /// Manifest path (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
    /// shapenet-synthetic or pix3d-real
    #[arg(long, default_value = "shapenet-synthetic")]
    pub source: SourceKind,
    /// JSON object mapping sample id to "train" or "test"; defaults to <root>/split.json when present
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    /// Ground-truth points per cloud
    #[arg(long, default_value_t = 1024)]
    pub gt_resolution: usize,
    /// Comma-separated category subset
    #[arg(long)]
    pub categories: Option<String>,
}

#[derive(Debug, Serialize)]
struct Summary {
    records: usize,
    train: usize,
    test: usize,
    per_category: BTreeMap<String, usize>,
}

pub fn run(args: PrepareArgs) -> Result<()> {
    let split_file = args.split_file.or_else(|| {
        let default = args.root.join("split.json");
        default.is_file().then_some(default)
    });
    let options = ManifestOptions {
        split_file,
        categories: args
            .categories
            .map(|c| c.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
    };
    let manifest = build_manifest(&args.root, args.source, args.gt_resolution, &options)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        super::create_dir(parent)?;
    }
    manifest.save(&args.out)?;
    let mut per_category = BTreeMap::new();
    for r in &manifest.records {
        *per_category.entry(r.category.clone()).or_insert(0) += 1;
    }
    let summary = Summary {
        records: manifest.records.len(),
        train: manifest.split(Split::Train).count(),
        test: manifest.split(Split::Test).count(),
        per_category,
    };
    super::write_json(&args.out.with_extension("summary.json"), &summary)?;
    eprintln!(
        "{} records ({} train, {} test) in {} categories -> {}",
        summary.records,
        summary.train,
        summary.test,
        summary.per_category.len(),
        args.out.display()
    );
    Ok(())
}
