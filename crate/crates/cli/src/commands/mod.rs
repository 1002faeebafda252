mod ablate;
mod eval;
mod infer;
mod prepare;
mod report;
mod synth;
mod train;

use std::path::Path;

use clap::{Parser, Subcommand};
use rgb2point::{Error, Result};
use serde::Serialize;

pub use ablate::{AblateArgs, GridSpec, TABLE4_GRID};
pub use eval::{evaluate_checkpoint, EvalArgs};
pub use infer::{InferArgs, InferReport};
pub use prepare::PrepareArgs;
pub use report::ReportArgs;
pub use synth::SynthArgs;
pub use train::TrainArgs;

/// Single-image point cloud generation: data preparation, training,
/// evaluation, inference, ablation grids and comparison reports.
#[derive(Debug, Parser)]
#[command(name = "rgb2point", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic ShapeNet-style corpus (meshes, clouds, renders, split)
    Synth(SynthArgs),
    /// Scan a dataset tree and write its manifest
    Prepare(PrepareArgs),
    /// Train the generator head on a manifest
    Train(TrainArgs),
    /// Score a checkpoint, or precomputed per-category values
    Eval(EvalArgs),
    /// Generate one point cloud from an image, optionally timing it
    Infer(InferArgs),
    /// Train and evaluate an (H, D, A) grid
    Ablate(AblateArgs),
    /// Compare results against published baselines
    Report(ReportArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Prepare(a) => prepare::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Ablate(a) => ablate::run(a),
        Command::Report(a) => report::run(a),
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
        path: path.to_path_buf(),
        index: e.line(),
        reason: e.to_string(),
    })
}
