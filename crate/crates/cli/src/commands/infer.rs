use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use rgb2point::data::{preprocess_image, PreprocessSpec};
use rgb2point::pointcloud::{save_cloud, CloudFormat};
use rgb2point::training::load_model;
use rgb2point::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input RGB image (PNG or JPEG)
    #[arg(long)]
    pub image: PathBuf,
    /// Output cloud (.ply, .xyz or .npy by extension)
    #[arg(long)]
    pub out: PathBuf,
    /// Report wall-clock latency over repeated forwards
    #[arg(long)]
    pub time: bool,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Report peak resident memory of a batch-1 forward
    #[arg(long)]
    pub mem: bool,
    /// Resource report path; defaults to <out>.infer.json
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub warmup: usize,
    pub iterations: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferReport {
    pub points: usize,
    pub backbone: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
    /// Peak resident set size in MB while running one forward pass.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_rss_mb: Option<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn summarize(samples_ms: &[f64], warmup: usize) -> Timing {
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    Timing {
        warmup,
        iterations: sorted.len(),
        mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50_ms: percentile(&sorted, 0.5),
        p95_ms: percentile(&sorted, 0.95),
    }
}

fn status_kb(field: &str) -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(field))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Resets the kernel's peak-RSS counter where supported.
fn reset_peak_rss() {
    let _ = std::fs::write("/proc/self/clear_refs", "5");
}

fn default_report_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".infer.json");
    out.with_file_name(name)
}

pub fn run(args: InferArgs) -> Result<()> {
    let (model, _) = load_model(&args.checkpoint, args.weights.as_deref())?;
    let spec = PreprocessSpec::new(model.backbone().channel_stats());
    let input = preprocess_image(&args.image, &spec)?;

    reset_peak_rss();
    let cloud = model.forward(&input)?;
    let peak_rss_mb = if args.mem { status_kb("VmHWM:").map(|kb| kb / 1024.0) } else { None };

    let timing = if args.time {
        for _ in 0..args.warmup {
            model.forward(&preprocess_image(&args.image, &spec)?)?;
        }
        let mut samples = Vec::with_capacity(args.repeats);
        for _ in 0..args.repeats.max(1) {
            let t = Instant::now();
            model.forward(&preprocess_image(&args.image, &spec)?)?;
            samples.push(t.elapsed().as_secs_f64() * 1e3);
        }
        Some(summarize(&samples, args.warmup))
    } else {
        None
    };

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        super::create_dir(parent)?;
    }
    save_cloud(&cloud, &args.out, CloudFormat::from_path(&args.out))?;
    let report = InferReport {
        points: cloud.len(),
        backbone: model.config().backbone.clone(),
        timing,
        peak_rss_mb,
    };
    let report_path = args.report.clone().unwrap_or_else(|| default_report_path(&args.out));
    super::write_json(&report_path, &report)?;
    if let Some(t) = &report.timing {
        eprintln!(
            "latency over {} runs: mean {:.1} ms, p50 {:.1} ms, p95 {:.1} ms",
            t.iterations, t.mean_ms, t.p50_ms, t.p95_ms
        );
    }
    if let Some(mb) = report.peak_rss_mb {
        eprintln!("peak resident memory {mb:.1} MB");
    }
    eprintln!("wrote {} points to {}", cloud.len(), args.out.display());
    Ok(())
}
