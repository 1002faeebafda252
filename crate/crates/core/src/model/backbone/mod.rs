//! Frozen image feature extractors, selected by name.
//!
//! Parameter names and layouts follow the widely published ImageNet
//! checkpoints (timm for vision transformers, torchvision for ResNet-50), so
//! a converted safetensors bundle loads without renaming.

mod resnet;
mod vit;

use std::path::{Path, PathBuf};

use ndarray::{ArrayD, ArrayView1, ArrayView2, Ix1, Ix2, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use resnet::ResNet50;
pub use vit::{VisionTransformer, VitConfig};

use super::input::{FeatureSequence, ImageInput};
use super::weights::{read_safetensors_where, tensor_hash, TensorMap};
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Environment variable naming the directory searched for `<backbone>.safetensors`.
pub const CACHE_ENV: &str = "RGB2POINT_CACHE";

/// Per-channel normalization used when the backbone was pretrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

pub const IMAGENET_STATS: ChannelStats = ChannelStats {
    mean: [0.485, 0.456, 0.406],
    std: [0.229, 0.224, 0.225],
};

pub const HALF_STATS: ChannelStats = ChannelStats {
    mean: [0.5, 0.5, 0.5],
    std: [0.5, 0.5, 0.5],
};

/// Where backbone parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BackboneWeights {
    /// Seeded random initialization (no pretrained bundle).
    Random { seed: u64 },
    /// A safetensors file holding the published checkpoint.
    Bundle(PathBuf),
}

pub trait Backbone: Send + Sync {
    fn name(&self) -> &str;

    /// Number of output tokens `L`.
    fn sequence_length(&self) -> usize;

    /// Width of each output token.
    fn width(&self) -> usize;

    fn channel_stats(&self) -> ChannelStats;

    /// Every named tensor, including non-trainable buffers.
    fn tensors(&self) -> &TensorMap;

    fn extract(&self, image: &ImageInput) -> Result<FeatureSequence>;

    /// Learnable parameter count; running statistics are excluded.
    fn parameter_count(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|(k, _)| !k.contains("running_"))
            .map(|(_, v)| v.len())
            .sum()
    }

    fn hash(&self) -> String {
        tensor_hash(self.tensors())
    }
}

pub type BackboneFactory = fn(&BackboneWeights) -> Result<Box<dyn Backbone>>;

pub fn backbone_registry() -> Registry<BackboneFactory> {
    let mut r: Registry<BackboneFactory> = Registry::new("backbone");
    r.register("vit-imagenet", |w| Ok(Box::new(VisionTransformer::new(VitConfig::base(), w)?)))
        .register("vit-tiny-imagenet", |w| Ok(Box::new(VisionTransformer::new(VitConfig::tiny(), w)?)))
        .register("resnet50-imagenet", |w| Ok(Box::new(ResNet50::new(w)?)));
    r
}

/// Finds the weight bundle for `name`: `explicit` if given, otherwise
/// `$RGB2POINT_CACHE/<name>.safetensors`.
pub fn resolve_bundle(name: &str, explicit: Option<&Path>) -> Result<PathBuf> {
    let candidate = match explicit {
        Some(p) => p.to_path_buf(),
        None => match std::env::var_os(CACHE_ENV) {
            Some(dir) => Path::new(&dir).join(format!("{name}.safetensors")),
            None => {
                return Err(Error::MissingPretrainedWeights(format!(
                    "no bundle for {name}: pass a weights path or set {CACHE_ENV}"
                )))
            }
        },
    };
    if candidate.is_file() {
        Ok(candidate)
    } else {
        Err(Error::MissingPretrainedWeights(format!(
            "{name}: {} does not exist",
            candidate.display()
        )))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum ParamInit {
    Zeros,
    Ones,
    Normal(f32),
}

pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: ParamInit) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Produces the named tensors described by `specs`, either by seeded
/// sampling or by reading them from a bundle (other tensors in the bundle
/// are ignored).
pub(crate) fn materialize(backbone: &str, specs: &[ParamSpec], weights: &BackboneWeights) -> Result<TensorMap> {
    match weights {
        BackboneWeights::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(specs
                .iter()
                .map(|s| {
                    let t = match s.init {
                        ParamInit::Zeros => ArrayD::zeros(IxDyn(&s.shape)),
                        ParamInit::Ones => ArrayD::ones(IxDyn(&s.shape)),
                        ParamInit::Normal(std) => {
                            let d = Normal::new(0.0, std).expect("positive std");
                            ArrayD::from_shape_simple_fn(IxDyn(&s.shape), || d.sample(&mut rng))
                        }
                    };
                    (s.name.clone(), t)
                })
                .collect())
        }
        BackboneWeights::Bundle(path) => {
            let wanted: std::collections::BTreeSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let (tensors, _) = read_safetensors_where(path, |n| wanted.contains(n))?;
            for s in specs {
                match tensors.get(&s.name) {
                    None => {
                        return Err(Error::MissingPretrainedWeights(format!(
                            "{backbone}: tensor {} absent from {}",
                            s.name,
                            path.display()
                        )))
                    }
                    Some(t) if t.shape() != s.shape.as_slice() => {
                        return Err(Error::CorruptArchive {
                            path: path.clone(),
                            reason: format!("tensor {} has shape {:?}, expected {:?}", s.name, t.shape(), s.shape),
                        })
                    }
                    Some(_) => {}
                }
            }
            Ok(tensors)
        }
    }
}

pub(crate) fn view1<'a>(t: &'a TensorMap, name: &str) -> ArrayView1<'a, f32> {
    t[name].view().into_dimensionality::<Ix1>().expect("rank-1 tensor")
}

pub(crate) fn view2<'a>(t: &'a TensorMap, name: &str) -> ArrayView2<'a, f32> {
    t[name].view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
}
