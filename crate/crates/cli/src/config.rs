//! Flat JSON run configuration.
//!
//! Precedence, lowest first: built-in defaults, `--preset`, `--config` file,
//! individual flags.

use std::path::{Path, PathBuf};

use clap::Args;
use rgb2point::data::Split;
use rgb2point::metrics::DEFAULT_FSCORE_THRESHOLD;
use rgb2point::model::{backbone_registry, ModelConfig};
use rgb2point::training::TrainConfig;
use rgb2point::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Backbone weight bundle; falls back to `$RGB2POINT_CACHE`.
    pub weights: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub metrics: String,
    pub tau: f64,
    pub emd_solver: String,
    pub eval_split: Split,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            manifest: None,
            out_dir: None,
            weights: None,
            resume: None,
            metrics: "cd,emd,fscore".into(),
            tau: DEFAULT_FSCORE_THRESHOLD,
            emd_solver: "auto".into(),
            eval_split: Split::Test,
        }
    }
}

pub const PRESETS: [&str; 2] = ["paper", "desk"];

impl RunConfig {
    /// `paper`: H=4, D=2048, A=1024, alpha=5, lr=1e-4, batch 32 on the
    /// pretrained ViT-B/16. `desk`: a small randomly initialized model that
    /// trains in minutes on a CPU.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        match name {
            "paper" => {}
            "desk" => {
                cfg.model = ModelConfig {
                    backbone: "vit-tiny-imagenet".into(),
                    pretrained: false,
                    heads: 4,
                    hidden_dim: 512,
                    feature_dim: 256,
                    ..ModelConfig::default()
                };
                cfg.train.batch_size = 8;
                cfg.train.learning_rate = 3e-4;
                cfg.train.max_epochs = 30;
                cfg.metrics = "cd,fscore".into();
            }
            other => {
                return Err(Error::UnknownStrategy {
                    kind: "preset",
                    name: other.into(),
                    available: PRESETS.join(", "),
                })
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Overlays the keys present in `file` onto `self`.
    fn overlay_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
        let patch: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let serde_json::Value::Object(patch) = patch else {
            return Err(Error::InvalidConfig(format!("{} is not a JSON object", path.display())));
        };
        let mut base = serde_json::to_value(&self)?;
        let obj = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in patch {
            let key = match k.as_str() {
                "H" => "heads".to_string(),
                "D" => "hidden_dim".to_string(),
                "A" => "feature_dim".to_string(),
                "N" => "n_points".to_string(),
                _ => k,
            };
            obj.insert(key, v);
        }
        serde_json::from_value(base).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::NonpositiveThreshold(self.tau));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(RUN_CONFIG_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}

/// Accepts registered backbone names plus the short forms `vit`, `vit-tiny`
/// and `resnet50`.
pub fn resolve_backbone(name: &str) -> Result<String> {
    let reg = backbone_registry();
    if reg.contains(name) {
        return Ok(name.to_string());
    }
    let long = format!("{name}-imagenet");
    if reg.contains(&long) {
        return Ok(long);
    }
    reg.get(name).map(|_| name.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration (flat keys)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named starting configuration: paper or desk
    #[arg(long)]
    pub preset: Option<String>,
    /// Attention heads H
    #[arg(long)]
    pub heads: Option<usize>,
    /// Projection hidden width D
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Aggregator width A
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Output points N
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Image backbone (vit-imagenet, vit-tiny-imagenet, resnet50-imagenet)
    #[arg(long)]
    pub backbone: Option<String>,
    /// Backbone weight bundle (.safetensors)
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Randomly initialize the backbone instead of loading pretrained weights
    #[arg(long)]
    pub no_pretrained: bool,
    /// Replace the attention aggregator by mean pooling
    #[arg(long)]
    pub no_cfi: bool,
    /// Replace the MLP projection by a single linear layer
    #[arg(long)]
    pub no_gpm: bool,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub backbone_seed: Option<u64>,
    /// Loss weight alpha
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Data order seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.preset {
            Some(p) => RunConfig::preset(p)?,
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg = cfg.overlay_file(path)?;
        }
        let m = &mut cfg.model;
        let t = &mut cfg.train;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(m.heads, self.heads);
        set!(m.hidden_dim, self.hidden_dim);
        set!(m.feature_dim, self.feature_dim);
        set!(m.n_points, self.n_points);
        set!(m.init_seed, self.init_seed);
        set!(m.backbone_seed, self.backbone_seed);
        if let Some(b) = &self.backbone {
            m.backbone = resolve_backbone(b)?;
        }
        m.pretrained &= !self.no_pretrained;
        m.enable_cfi &= !self.no_cfi;
        m.enable_gpm &= !self.no_gpm;
        set!(t.alpha, self.alpha);
        set!(t.learning_rate, self.learning_rate);
        set!(t.batch_size, self.batch_size);
        set!(t.max_epochs, self.max_epochs);
        set!(t.seed, self.seed);
        set!(t.eval_every, self.eval_every);
        set!(t.checkpoint_every, self.checkpoint_every);
        if self.max_steps.is_some() {
            t.max_steps = self.max_steps;
        }
        if self.weights.is_some() {
            cfg.weights = self.weights.clone();
        }
        Ok(cfg)
    }
}
