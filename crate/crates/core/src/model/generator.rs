use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayD, Ix1, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backbone::{backbone_registry, resolve_bundle, Backbone, BackboneWeights};
use super::cfi::{CfiCache, ContextIntegrator};
use super::gpm::{GpmCache, ProjectionHead};
use super::input::{FeatureSequence, ImageInput};
use super::layers::{Linear, LinearGrad};
use super::weights::TensorMap;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

/// The trainable part of the generator: aggregator followed by projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub cfi: ContextIntegrator,
    pub gpm: ProjectionHead,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    cfi: CfiCache,
    gpm: GpmCache,
}

/// Gradients for every head layer, in [`Head::named_layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub layers: Vec<LinearGrad>,
}

impl HeadGrads {
    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()))
            .map(|&v| v as f64 * v as f64)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParameterCount {
    pub frozen: usize,
    pub trainable: usize,
}

impl Head {
    /// Fresh head for backbone tokens of width `input_width`, seeded by
    /// `cfg.init_seed`.
    pub fn new(cfg: &ModelConfig, input_width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let cfi = ContextIntegrator::new(input_width, cfg, &mut rng);
        let gpm = ProjectionHead::new(cfg, &mut rng);
        Self { cfi, gpm }
    }

    pub fn named_layers(&self) -> Vec<(String, &Linear)> {
        let cfi = self.cfi.layers().into_iter().map(|(n, l)| (format!("cfi.{n}"), l));
        let gpm = self.gpm.layers().into_iter().map(|(n, l)| (format!("gpm.{n}"), l));
        cfi.chain(gpm).collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = self.cfi.layers_mut();
        v.extend(self.gpm.layers_mut());
        v
    }

    pub fn zero_grads(&self) -> HeadGrads {
        HeadGrads {
            layers: self.named_layers().iter().map(|(_, l)| LinearGrad::zeros_like(l)).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_layers().iter().map(|(_, l)| l.parameter_count()).sum()
    }

    pub fn n_points(&self) -> usize {
        self.gpm.n_points()
    }

    /// `[B, 3N]` flattened coordinates for a batch of token sequences.
    pub fn forward(&self, feats: &[&FeatureSequence]) -> Result<(Array2<f32>, HeadCache)> {
        let (ctx, cfi) = self.cfi.forward(feats)?;
        let (out, gpm) = self.gpm.forward(&ctx)?;
        Ok((out, HeadCache { cfi, gpm }))
    }

    pub fn backward(&self, cache: &HeadCache, dy: &Array2<f32>) -> HeadGrads {
        let mut grads = self.zero_grads();
        let split = self.cfi.layers().len();
        let (g_cfi, g_gpm) = grads.layers.split_at_mut(split);
        let d_ctx = self.gpm.backward(&cache.gpm, dy, g_gpm);
        self.cfi.backward(&cache.cfi, &d_ctx, g_cfi);
        grads
    }

    /// Weights as `<layer>.weight` / `<layer>.bias` tensors.
    pub fn to_tensors(&self) -> TensorMap {
        let mut t = TensorMap::new();
        for (name, l) in self.named_layers() {
            t.insert(format!("{name}.weight"), l.weight.clone().into_dyn());
            t.insert(format!("{name}.bias"), l.bias.clone().into_dyn());
        }
        t
    }

    /// Overwrites weights from [`Head::to_tensors`] output; every tensor must
    /// be present with the current shape.
    pub fn load_tensors(&mut self, tensors: &TensorMap) -> std::result::Result<(), String> {
        let names: Vec<String> = self.named_layers().into_iter().map(|(n, _)| n).collect();
        for (name, layer) in names.iter().zip(self.layers_mut()) {
            let fetch = |suffix: &str| -> std::result::Result<&ArrayD<f32>, String> {
                let key = format!("{name}.{suffix}");
                tensors.get(&key).ok_or_else(|| format!("missing tensor {key}"))
            };
            let w = fetch("weight")?
                .view()
                .into_dimensionality::<Ix2>()
                .map_err(|e| format!("{name}.weight: {e}"))?;
            let b = fetch("bias")?
                .view()
                .into_dimensionality::<Ix1>()
                .map_err(|e| format!("{name}.bias: {e}"))?;
            if w.dim() != layer.weight.dim() || b.dim() != layer.bias.dim() {
                return Err(format!(
                    "{name}: stored shape {:?} does not match configured {:?}",
                    w.dim(),
                    layer.weight.dim()
                ));
            }
            layer.weight.assign(&w);
            layer.bias.assign(&b);
        }
        Ok(())
    }
}

/// Frozen backbone plus trainable head.
pub struct GeneratorModel {
    config: ModelConfig,
    backbone: Arc<dyn Backbone>,
    head: Head,
}

impl std::fmt::Debug for GeneratorModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorModel")
            .field("config", &self.config)
            .field("backbone", &self.backbone.name())
            .finish_non_exhaustive()
    }
}

/// Instantiates the backbone named in `config`. Pretrained weights come from
/// `weights` or the cache directory; otherwise parameters are drawn from
/// `config.backbone_seed`.
pub fn build_backbone(config: &ModelConfig, weights: Option<&Path>) -> Result<Arc<dyn Backbone>> {
    let factory = backbone_registry().get(&config.backbone)?;
    let source = if config.pretrained {
        BackboneWeights::Bundle(resolve_bundle(&config.backbone, weights)?)
    } else {
        BackboneWeights::Random {
            seed: config.backbone_seed,
        }
    };
    Ok(Arc::from(factory(&source)?))
}

impl GeneratorModel {
    pub fn new(config: ModelConfig, weights: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let backbone = build_backbone(&config, weights)?;
        Self::with_backbone(config, backbone)
    }

    /// Builds a fresh head around an existing backbone, which may be shared
    /// between models.
    pub fn with_backbone(config: ModelConfig, backbone: Arc<dyn Backbone>) -> Result<Self> {
        config.validate()?;
        if backbone.name() != config.backbone {
            return Err(Error::InvalidConfig(format!(
                "config names backbone {} but {} was supplied",
                config.backbone,
                backbone.name()
            )));
        }
        let head = Head::new(&config, backbone.width());
        Ok(Self { config, backbone, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &Arc<dyn Backbone> {
        &self.backbone
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        &mut self.head
    }

    pub fn n_points(&self) -> usize {
        self.config.n_points
    }

    pub fn backbone_hash(&self) -> String {
        self.backbone.hash()
    }

    pub fn extract_features(&self, image: &ImageInput) -> Result<FeatureSequence> {
        self.backbone.extract(image)
    }

    pub fn cfi_forward(&self, feats: &FeatureSequence) -> Result<Array1<f32>> {
        let (ctx, _) = self.head.cfi.forward(&[feats])?;
        Ok(ctx.row(0).to_owned())
    }

    pub fn gpm_forward(&self, ctx: &Array1<f32>) -> Result<PointCloud> {
        let row = ctx.view().insert_axis(ndarray::Axis(0)).to_owned();
        let (out, _) = self.head.gpm.forward(&row)?;
        PointCloud::from_flat(out.as_slice().expect("contiguous output"))
    }

    pub fn forward(&self, image: &ImageInput) -> Result<PointCloud> {
        let feats = self.extract_features(image)?;
        Ok(self.forward_features(&[&feats])?.remove(0))
    }

    /// Head-only forward for precomputed features.
    pub fn forward_features(&self, feats: &[&FeatureSequence]) -> Result<Vec<PointCloud>> {
        let (out, _) = self.head.forward(feats)?;
        out.rows()
            .into_iter()
            .map(|r| PointCloud::from_flat(r.as_slice().expect("contiguous row")))
            .collect()
    }

    pub fn count_parameters(&self) -> ParameterCount {
        ParameterCount {
            frozen: self.backbone.parameter_count(),
            trainable: self.head.parameter_count(),
        }
    }
}
