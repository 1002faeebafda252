use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rgb2point::data::{load_gt_cloud, preprocess_image, DatasetManifest, PreprocessSpec, Split};
use rgb2point::metrics::{aggregate_report, metrics_from_list, Metric, MetricKind, MetricReport, MetricSettings, SampleScore};
use rgb2point::model::GeneratorModel;
use rgb2point::training::load_model;
use rgb2point::{Error, Result};
use serde::Serialize;

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long, required_unless_present = "precomputed")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, required_unless_present = "precomputed")]
    pub manifest: Option<PathBuf>,
    /// JSON object {category: {metric: value}} scored instead of a model
    #[arg(long, conflicts_with_all = ["checkpoint", "manifest"])]
    pub precomputed: Option<PathBuf>,
    /// Output directory for report.json and report.txt
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated metrics: cd, emd, fscore
    #[arg(long, default_value = "cd,emd,fscore")]
    pub metrics: String,
    /// F-score distance threshold
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// EMD solver: exact, sinkhorn or auto
    #[arg(long, default_value = "auto")]
    pub emd_solver: String,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Backbone weight bundle
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Evaluate only the first n records of the split
    #[arg(long)]
    pub limit: Option<usize>,
    /// Ground-truth subsampling seed
    #[arg(long, default_value_t = 0)]
    pub gt_seed: u64,
}

/// Scores `model` on the first render of each record in `split`.
pub fn evaluate_checkpoint(
    model: &GeneratorModel,
    manifest: &DatasetManifest,
    split: Split,
    metrics: &[Box<dyn Metric>],
    gt_seed: u64,
    limit: Option<usize>,
) -> Result<MetricReport> {
    if manifest.gt_resolution != model.n_points() {
        return Err(Error::ResolutionMismatch {
            record: manifest.root.display().to_string(),
            model: model.n_points(),
            gt: manifest.gt_resolution,
        });
    }
    let spec = PreprocessSpec::new(model.backbone().channel_stats());
    let mut scores = Vec::new();
    for (i, record) in manifest.records.iter().enumerate().filter(|(_, r)| r.split == split) {
        if limit.is_some_and(|l| scores.len() >= l) {
            break;
        }
        let image = record.images.first().ok_or_else(|| Error::MissingFile {
            record: record.id.clone(),
            path: manifest.resolve(std::path::Path::new("renders")),
        })?;
        let input = preprocess_image(&manifest.resolve(image), &spec)?;
        let generated = model.forward(&input)?;
        let gt = load_gt_cloud(manifest, record, manifest.gt_resolution, gt_seed.wrapping_add(i as u64))?;
        let mut score = SampleScore::new(&record.id, &record.category);
        for m in metrics {
            score = score.with(m.kind(), m.evaluate(&gt, &generated)?.value);
        }
        log::debug!("{} {:?}", record.id, score.values);
        scores.push(score);
    }
    aggregate_report(scores)
}

fn precomputed_scores(path: &std::path::Path) -> Result<Vec<SampleScore>> {
    let table: BTreeMap<String, BTreeMap<String, f64>> = super::read_json(path)?;
    table
        .into_iter()
        .map(|(category, values)| {
            let mut score = SampleScore::new(&category, &category);
            for (name, v) in values {
                score = score.with(name.parse::<MetricKind>()?, v);
            }
            Ok(score)
        })
        .collect()
}

pub fn run(args: EvalArgs) -> Result<()> {
    super::create_dir(&args.out)?;
    super::write_json(&args.out.join("eval_config.json"), &args)?;
    let report = match &args.precomputed {
        Some(path) => aggregate_report(precomputed_scores(path)?)?,
        None => {
            let split: Split = serde_json::from_value(serde_json::Value::String(args.split.clone()))
                .map_err(|_| Error::InvalidConfig(format!("unknown split {}", args.split)))?;
            let settings = MetricSettings {
                tau: args.tau,
                emd_solver: args.emd_solver.clone(),
                ..MetricSettings::default()
            };
            let metrics = metrics_from_list(&args.metrics, &settings)?;
            let manifest = DatasetManifest::load(args.manifest.as_deref().expect("required by clap"))?;
            let (model, _) = load_model(args.checkpoint.as_deref().expect("required by clap"), args.weights.as_deref())?;
            evaluate_checkpoint(&model, &manifest, split, &metrics, args.gt_seed, args.limit)?
        }
    };
    super::write_json(&args.out.join("report.json"), &report)?;
    let table = report.to_table();
    super::write_text(&args.out.join("report.txt"), &table)?;
    eprint!("{table}");
    Ok(())
}
