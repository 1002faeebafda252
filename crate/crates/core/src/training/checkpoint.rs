//! Single-file checkpoints: head weights, optimizer moments and training
//! progress in a safetensors archive tagged `rgb2point-ckpt-v1`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Ix1, Ix2};

use super::adam::{Adam, AdamConfig};
use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::model::weights::{read_safetensors, write_safetensors, TensorMap};
use crate::model::{build_backbone, Backbone, GeneratorModel, Head, HeadGrads, ModelConfig};

pub const CHECKPOINT_FORMAT: &str = "rgb2point-ckpt-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: TensorMap,
    pub v: TensorMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub backbone_hash: String,
    pub head: TensorMap,
    pub optimizer: Option<OptimizerState>,
    pub state: Option<TrainState>,
    pub train_config: Option<TrainConfig>,
}

fn grads_to_tensors(head: &Head, grads: &HeadGrads) -> TensorMap {
    let mut t = TensorMap::new();
    for ((name, _), g) in head.named_layers().into_iter().zip(&grads.layers) {
        t.insert(format!("{name}.weight"), g.weight.clone().into_dyn());
        t.insert(format!("{name}.bias"), g.bias.clone().into_dyn());
    }
    t
}

fn grads_from_tensors(head: &Head, t: &TensorMap) -> std::result::Result<HeadGrads, String> {
    let mut grads = head.zero_grads();
    for ((name, _), g) in head.named_layers().into_iter().zip(grads.layers.iter_mut()) {
        let get = |suffix: &str| t.get(&format!("{name}.{suffix}")).ok_or(format!("missing moment {name}.{suffix}"));
        let w = get("weight")?.view().into_dimensionality::<Ix2>().map_err(|e| e.to_string())?;
        let b = get("bias")?.view().into_dimensionality::<Ix1>().map_err(|e| e.to_string())?;
        if w.dim() != g.weight.dim() || b.dim() != g.bias.dim() {
            return Err(format!("moment {name} has the wrong shape"));
        }
        g.weight.assign(&w);
        g.bias.assign(&b);
    }
    Ok(grads)
}

impl OptimizerState {
    pub fn capture(head: &Head, adam: &Adam) -> Self {
        Self {
            config: adam.config,
            t: adam.t,
            m: grads_to_tensors(head, &adam.m),
            v: grads_to_tensors(head, &adam.v),
        }
    }

    pub fn restore(&self, head: &Head) -> std::result::Result<Adam, String> {
        Ok(Adam {
            config: self.config,
            t: self.t,
            m: grads_from_tensors(head, &self.m)?,
            v: grads_from_tensors(head, &self.v)?,
        })
    }
}

fn with_prefix<'a>(prefix: &str, t: &'a TensorMap) -> impl Iterator<Item = (String, ndarray::ArrayD<f32>)> + 'a {
    let prefix = prefix.to_string();
    t.iter().map(move |(k, v)| (format!("{prefix}{k}"), v.clone()))
}

fn strip_prefix(prefix: &str, t: &TensorMap) -> TensorMap {
    t.iter()
        .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
        .collect()
}

impl Checkpoint {
    /// Weights-only checkpoint of `model`.
    pub fn from_model(model: &GeneratorModel) -> Self {
        Self {
            model_config: model.config().clone(),
            backbone_hash: model.backbone_hash(),
            head: model.head().to_tensors(),
            optimizer: None,
            state: None,
            train_config: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), CHECKPOINT_FORMAT.to_string());
        meta.insert("model_config".to_string(), serde_json::to_string(&self.model_config)?);
        meta.insert("backbone_hash".to_string(), self.backbone_hash.clone());
        let mut tensors: TensorMap = with_prefix("head.", &self.head).collect();
        if let Some(opt) = &self.optimizer {
            meta.insert("optimizer".to_string(), serde_json::to_string(&(opt.config, opt.t))?);
            tensors.extend(with_prefix("adam.m.", &opt.m));
            tensors.extend(with_prefix("adam.v.", &opt.v));
        }
        if let Some(state) = &self.state {
            meta.insert("train_state".to_string(), serde_json::to_string(state)?);
        }
        if let Some(cfg) = &self.train_config {
            meta.insert("train_config".to_string(), serde_json::to_string(cfg)?);
        }
        let tmp = path.with_extension("ckpt.partial");
        write_safetensors(&tmp, &tensors, &meta)?;
        std::fs::rename(&tmp, path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (tensors, meta) = read_safetensors(path)?;
        let corrupt = |reason: String| Error::CorruptArchive {
            path: path.to_path_buf(),
            reason,
        };
        let found = meta.get("format").cloned().unwrap_or_else(|| "<none>".into());
        if found != CHECKPOINT_FORMAT {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_FORMAT.into(),
                found,
            });
        }
        let field = |k: &str| meta.get(k).ok_or_else(|| corrupt(format!("metadata field {k} missing")));
        let parse_err = |k: &str, e: serde_json::Error| corrupt(format!("metadata field {k}: {e}"));
        let model_config: ModelConfig =
            serde_json::from_str(field("model_config")?).map_err(|e| parse_err("model_config", e))?;
        let backbone_hash = field("backbone_hash")?.clone();
        let optimizer = match meta.get("optimizer") {
            Some(s) => {
                let (config, t): (AdamConfig, u64) = serde_json::from_str(s).map_err(|e| parse_err("optimizer", e))?;
                Some(OptimizerState {
                    config,
                    t,
                    m: strip_prefix("adam.m.", &tensors),
                    v: strip_prefix("adam.v.", &tensors),
                })
            }
            None => None,
        };
        let state = meta
            .get("train_state")
            .map(|s| serde_json::from_str(s).map_err(|e| parse_err("train_state", e)))
            .transpose()?;
        let train_config = meta
            .get("train_config")
            .map(|s| serde_json::from_str(s).map_err(|e| parse_err("train_config", e)))
            .transpose()?;
        Ok(Self {
            model_config,
            backbone_hash,
            head: strip_prefix("head.", &tensors),
            optimizer,
            state,
            train_config,
        })
    }

    /// Rebuilds the model around `backbone`, which must hash to the recorded value.
    pub fn restore_model(&self, backbone: Arc<dyn Backbone>) -> Result<GeneratorModel> {
        let found = backbone.hash();
        if found != self.backbone_hash {
            return Err(Error::BackboneMismatch {
                expected: self.backbone_hash.clone(),
                found,
            });
        }
        let mut model = GeneratorModel::with_backbone(self.model_config.clone(), backbone)?;
        model.head_mut().load_tensors(&self.head).map_err(|reason| Error::CorruptArchive {
            path: Default::default(),
            reason,
        })?;
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

/// Loads a checkpoint and rebuilds its model, instantiating the backbone from
/// the stored configuration.
pub fn load_model(path: &Path, weights: Option<&Path>) -> Result<(GeneratorModel, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    let backbone = build_backbone(&ckpt.model_config, weights)?;
    let model = ckpt.restore_model(backbone).map_err(|e| match e {
        Error::CorruptArchive { reason, .. } => Error::CorruptArchive {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })?;
    Ok((model, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> GeneratorModel {
        let cfg = ModelConfig {
            backbone: "vit-tiny-imagenet".into(),
            pretrained: false,
            heads: 2,
            feature_dim: 8,
            hidden_dim: 8,
            n_points: 4,
            ..ModelConfig::default()
        };
        GeneratorModel::new(cfg, None).unwrap()
    }

    #[test]
    fn round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = small_model();
        let mut adam = Adam::new(model.head(), AdamConfig::default());
        adam.t = 7;
        adam.m.layers[0].weight.fill(0.25);
        let ckpt = Checkpoint {
            optimizer: Some(OptimizerState::capture(model.head(), &adam)),
            ..Checkpoint::from_model(&model)
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        let restored = back.restore_model(Arc::clone(model.backbone())).unwrap();
        assert_eq!(restored.head(), model.head());
        assert_eq!(back.optimizer.unwrap().restore(model.head()).unwrap(), adam);

        let (tensors, mut meta) = read_safetensors(&path).unwrap();
        meta.insert("format".into(), "rgb2point-ckpt-v0".into());
        write_safetensors(&path, &tensors, &meta).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch { .. })));

        std::fs::write(&path, b"\x08\x00\x00\x00\x00\x00\x00\x00{}").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch { .. }) | Err(Error::CorruptArchive { .. })));
        std::fs::write(&path, b"junk").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::CorruptArchive { .. })));
    }

    #[test]
    fn backbone_mismatch_detected() {
        let model = small_model();
        let ckpt = Checkpoint {
            backbone_hash: "0".repeat(64),
            ..Checkpoint::from_model(&model)
        };
        assert!(matches!(
            ckpt.restore_model(Arc::clone(model.backbone())),
            Err(Error::BackboneMismatch { .. })
        ));
    }
}
