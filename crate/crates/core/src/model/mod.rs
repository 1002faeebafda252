//! The generator network: frozen image backbone, contextual feature
//! integrator (CFI) and geometric projection module (GPM).

pub mod backbone;
mod cfi;
mod config;
mod generator;
mod gpm;
mod input;
pub mod layers;
pub mod weights;

pub use backbone::{backbone_registry, Backbone, BackboneFactory, BackboneWeights, ChannelStats};
pub use cfi::{AttentionCfi, CfiCache, ContextIntegrator};
pub use config::{ModelConfig, LEAKY_SLOPE};
pub use generator::{build_backbone, GeneratorModel, Head, HeadCache, HeadGrads, ParameterCount};
pub use gpm::{GpmCache, ProjectionHead};
pub use input::{FeatureSequence, ImageInput, IMAGE_SIZE};
