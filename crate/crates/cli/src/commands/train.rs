use std::path::PathBuf;

use clap::Args;
use rgb2point::data::DatasetManifest;
use rgb2point::model::{build_backbone, GeneratorModel};
use rgb2point::training::{load_checkpoint, Trainer};
use rgb2point::{Error, Result};

use crate::config::ConfigArgs;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest written by `prepare`
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Run directory for the config, log and checkpoints
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg = args.config.resolve()?;
    if args.manifest.is_some() {
        cfg.manifest = args.manifest;
    }
    if args.out_dir.is_some() {
        cfg.out_dir = args.out_dir;
    }
    if args.resume.is_some() {
        cfg.resume = args.resume;
    }
    cfg.validate()?;
    let manifest_path = cfg
        .manifest
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no manifest given (--manifest)".into()))?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no run directory given (--out-dir)".into()))?;
    cfg.save(&out_dir)?;
    let manifest = DatasetManifest::load(&manifest_path)?;

    let trainer = match &cfg.resume {
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(ckpt_path)?;
            let backbone = build_backbone(&ckpt.model_config, cfg.weights.as_deref())?;
            Trainer::resume(&manifest, &ckpt, backbone, Some(cfg.train.clone()))?
        }
        None => {
            let model = GeneratorModel::new(cfg.model.clone(), cfg.weights.as_deref())?;
            let counts = model.count_parameters();
            log::info!(
                "backbone {} ({} frozen parameters), head {} trainable parameters",
                cfg.model.backbone,
                counts.frozen,
                counts.trainable
            );
            Trainer::new(model, &manifest, cfg.train.clone())?
        }
    };
    let mut trainer = trainer.with_output(&out_dir)?;
    let report = trainer.run()?;
    super::write_json(&out_dir.join("fit_report.json"), &report)?;
    eprintln!(
        "trained {} steps ({} epochs), final loss {:.6}{}",
        report.steps,
        report.epochs,
        report.losses.last().copied().unwrap_or(f64::NAN),
        report
            .best_val_cd
            .map(|cd| format!(", best validation CD {cd:.6}"))
            .unwrap_or_default()
    );
    Ok(())
}
