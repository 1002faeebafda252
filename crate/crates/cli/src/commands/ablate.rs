use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, ValueEnum};
use rgb2point::metrics::{MetricKind, MetricReport};
use rgb2point::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigArgs, RunConfig};
use crate::report::difference_percent;

/// The sixteen `(H, D, A)` rows of the published grid, in table order.
pub const TABLE4_GRID: [(usize, usize, usize); 16] = [
    (2, 1024, 1024),
    (2, 1024, 2048),
    (2, 1024, 4096),
    (2, 2048, 1024),
    (2, 2048, 2048),
    (2, 2048, 4096),
    (4, 2048, 2048),
    (4, 2048, 1024),
    (4, 2048, 4096),
    (8, 2048, 2048),
    (8, 2048, 4096),
    (8, 2048, 1024),
    (16, 1024, 1024),
    (16, 1024, 2048),
    (16, 2048, 1024),
    (16, 2048, 2048),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum GridSpec {
    /// The sixteen published rows
    Table4,
    /// Only the configured (H, D, A)
    Default,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Cells to run; defaults to table4, or to the configured cell when --backbone is given
    #[arg(long, value_enum)]
    pub grid: Option<GridSpec>,
    /// Parallel cell subprocesses
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Metrics for the combined table
    #[arg(long, default_value = "cd,emd")]
    pub metrics: String,
    #[arg(long, default_value = "auto")]
    pub emd_solver: String,
    /// Evaluate only the first n test records per cell
    #[arg(long)]
    pub limit: Option<usize>,
    /// Base configuration; --no-pretrained adds randomly initialized counterparts of every cell
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub heads: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub pretrained: bool,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub heads: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    /// `metric:category` to value in table units (distances ×10²).
    pub cells: Vec<(String, f64)>,
    /// Difference to the pretrained row, percent, per metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub difference: Vec<(String, f64)>,
}

fn cell_dir(out: &Path, h: usize, d: usize, a: usize, pretrained: bool) -> PathBuf {
    let suffix = if pretrained { "" } else { "_nopre" };
    out.join("cells").join(format!("h{h}_d{d}_a{a}{suffix}"))
}

fn run_step(exe: &Path, args: &[&std::ffi::OsStr], log: &Path) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(log)
        .map_err(|e| Error::Io {
            path: log.to_path_buf(),
            source: e,
        })?;
    let status = Command::new(exe)
        .args(args)
        .stdout(Stdio::null())
        .stderr(file)
        .status()
        .map_err(|e| Error::Io {
            path: exe.to_path_buf(),
            source: e,
        })?;
    if !status.success() {
        return Err(Error::InvalidConfig(format!(
            "cell command {:?} failed with {status}; see {}",
            args.first().unwrap_or(&std::ffi::OsStr::new("")),
            log.display()
        )));
    }
    Ok(())
}

fn run_cell(exe: &Path, args: &AblateArgs, cfg: &RunConfig, dir: &Path) -> Result<MetricReport> {
    let report_path = dir.join("eval").join("report.json");
    if report_path.is_file() {
        log::info!("reusing {}", report_path.display());
        return super::read_json(&report_path);
    }
    let config_path = cfg.save(dir)?;
    let log = dir.join("stderr.log");
    run_step(exe, &["train".as_ref(), "--config".as_ref(), config_path.as_os_str()], &log)?;
    let best = dir.join("best.ckpt");
    let ckpt = if best.is_file() { best } else { dir.join("last.ckpt") };
    let eval_dir = dir.join("eval");
    let tau = cfg.tau.to_string();
    let limit = args.limit.map(|l| l.to_string());
    let mut eval_args: Vec<&std::ffi::OsStr> = vec![
        "eval".as_ref(),
        "--checkpoint".as_ref(),
        ckpt.as_os_str(),
        "--manifest".as_ref(),
        args.manifest.as_os_str(),
        "--out".as_ref(),
        eval_dir.as_os_str(),
        "--metrics".as_ref(),
        args.metrics.as_ref(),
        "--tau".as_ref(),
        tau.as_ref(),
        "--emd-solver".as_ref(),
        args.emd_solver.as_ref(),
    ];
    if let Some(w) = &cfg.weights {
        eval_args.extend([std::ffi::OsStr::new("--weights"), w.as_os_str()]);
    }
    if let Some(l) = &limit {
        eval_args.extend([std::ffi::OsStr::new("--limit"), std::ffi::OsStr::new(l)]);
    }
    run_step(exe, &eval_args, &log)?;
    super::read_json(&report_path)
}

/// Per-category and average cells of one grid row, distances ×10².
pub fn grid_row(cell: &CellResult, metrics: &[MetricKind]) -> GridRow {
    let mut cells = Vec::new();
    for &k in metrics {
        for row in &cell.report.per_category {
            if let Some(v) = row.means.get(&k) {
                cells.push((format!("{k}:{}", row.category), v * k.display_scale()));
            }
        }
    }
    for &k in metrics {
        if let Some(v) = cell.report.average.get(&k) {
            cells.push((format!("{k}:avg"), v * k.display_scale()));
        }
    }
    GridRow {
        heads: cell.heads,
        hidden_dim: cell.hidden_dim,
        feature_dim: cell.feature_dim,
        cells,
        difference: Vec::new(),
    }
}

/// Adds the per-metric average difference of each row against the row with
/// the same `(H, D, A)` in `pretrained`.
pub fn with_difference(rows: &mut [GridRow], pretrained: &[GridRow], metrics: &[MetricKind]) -> Result<()> {
    for row in rows {
        let Some(reference) = pretrained
            .iter()
            .find(|p| (p.heads, p.hidden_dim, p.feature_dim) == (row.heads, row.hidden_dim, row.feature_dim))
        else {
            continue;
        };
        let avg = |r: &GridRow, k: MetricKind| {
            let key = format!("{k}:avg");
            r.cells.iter().find(|(c, _)| *c == key).map(|(_, v)| *v)
        };
        for &k in metrics {
            if let (Some(ours), Some(base)) = (avg(row, k), avg(reference, k)) {
                row.difference.push((k.to_string(), difference_percent(ours, base)?));
            }
        }
    }
    Ok(())
}

pub fn grid_text(rows: &[GridRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut out = format!("{:>3} {:>5} {:>5}", "H", "D", "A");
    for (c, _) in &first.cells {
        let _ = write!(out, "  {c:>14}");
    }
    for (k, _) in &first.difference {
        let _ = write!(out, "  {:>14}", format!("{k} diff(%)"));
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:>3} {:>5} {:>5}", r.heads, r.hidden_dim, r.feature_dim);
        for (_, v) in &r.cells {
            let _ = write!(out, "  {v:>14.2}");
        }
        for (_, v) in &r.difference {
            let _ = write!(out, "  {v:>14.2}");
        }
        out.push('\n');
    }
    out
}

pub fn run(args: AblateArgs) -> Result<()> {
    let compare_pretraining = args.config.no_pretrained;
    let base_args = ConfigArgs {
        no_pretrained: false,
        ..args.config.clone()
    };
    let mut base = base_args.resolve()?;
    base.manifest = Some(args.manifest.clone());
    base.validate()?;
    if compare_pretraining && !base.model.pretrained {
        return Err(Error::InvalidConfig(
            "--no-pretrained compares against pretrained cells, but the base configuration is not pretrained".into(),
        ));
    }
    if args.jobs == 0 {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    let metrics: Vec<MetricKind> = args
        .metrics
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    let grid = args
        .grid
        .unwrap_or(if args.config.backbone.is_some() { GridSpec::Default } else { GridSpec::Table4 });
    let shapes: Vec<(usize, usize, usize)> = match grid {
        GridSpec::Table4 => TABLE4_GRID.to_vec(),
        GridSpec::Default => vec![(base.model.heads, base.model.hidden_dim, base.model.feature_dim)],
    };
    super::create_dir(&args.out_dir)?;
    super::write_json(&args.out_dir.join("ablate_config.json"), &(&args, &base))?;

    let mut jobs = Vec::new();
    let variants: &[bool] = if compare_pretraining { &[true, false] } else { &[base.model.pretrained] };
    for &pretrained in variants {
        for &(h, d, a) in &shapes {
            let mut cfg = base.clone();
            cfg.model.heads = h;
            cfg.model.hidden_dim = d;
            cfg.model.feature_dim = a;
            cfg.model.pretrained = pretrained;
            cfg.model.validate()?;
            let dir = cell_dir(&args.out_dir, h, d, a, pretrained);
            cfg.out_dir = Some(dir.clone());
            jobs.push((cfg, dir));
        }
    }

    let exe = std::env::current_exe().map_err(|e| Error::Io {
        path: PathBuf::from("rgb2point"),
        source: e,
    })?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<MetricReport>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..args.jobs.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((cfg, dir)) = jobs.get(i) else { break };
                eprintln!("cell {}/{}: {}", i + 1, jobs.len(), dir.display());
                let r = super::create_dir(dir).and_then(|_| run_cell(&exe, &args, cfg, dir));
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });

    let mut cells = Vec::new();
    for ((cfg, _), r) in jobs.iter().zip(results.into_inner().expect("results lock")) {
        let report = r.expect("every cell ran")?;
        cells.push(CellResult {
            heads: cfg.model.heads,
            hidden_dim: cfg.model.hidden_dim,
            feature_dim: cfg.model.feature_dim,
            pretrained: cfg.model.pretrained,
            report,
        });
    }
    let primary: Vec<GridRow> = cells
        .iter()
        .filter(|c| c.pretrained == variants[0])
        .map(|c| grid_row(c, &metrics))
        .collect();
    super::write_json(&args.out_dir.join("ablation.json"), &primary)?;
    super::write_text(&args.out_dir.join("ablation.txt"), &grid_text(&primary))?;
    eprint!("{}", grid_text(&primary));
    if compare_pretraining {
        let mut counterpart: Vec<GridRow> = cells
            .iter()
            .filter(|c| !c.pretrained)
            .map(|c| grid_row(c, &metrics))
            .collect();
        with_difference(&mut counterpart, &primary, &metrics)?;
        super::write_json(&args.out_dir.join("ablation_no_pretrained.json"), &counterpart)?;
        super::write_text(&args.out_dir.join("ablation_no_pretrained.txt"), &grid_text(&counterpart))?;
        eprint!("{}", grid_text(&counterpart));
    }
    Ok(())
}
