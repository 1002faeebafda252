use serde::{Deserialize, Serialize};

use super::backbone::backbone_registry;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f32 = 0.2;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Attention heads `H`.
    #[serde(alias = "H")]
    pub heads: usize,
    /// Projection-head hidden width `D`.
    #[serde(alias = "D")]
    pub hidden_dim: usize,
    /// Aggregator feature width `A`.
    #[serde(alias = "A")]
    pub feature_dim: usize,
    /// Output point count `N`.
    #[serde(alias = "N")]
    pub n_points: usize,
    pub backbone: String,
    pub pretrained: bool,
    pub enable_cfi: bool,
    pub enable_gpm: bool,
    pub leaky_slope: f32,
    /// Seed for the trainable head's initialization.
    pub init_seed: u64,
    /// Seed for backbone initialization when `pretrained` is false.
    pub backbone_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            hidden_dim: 2048,
            feature_dim: 1024,
            n_points: 1024,
            backbone: "vit-imagenet".into(),
            pretrained: true,
            enable_cfi: true,
            enable_gpm: true,
            leaky_slope: LEAKY_SLOPE,
            init_seed: 0,
            backbone_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.heads == 0 || self.hidden_dim == 0 || self.feature_dim == 0 || self.n_points == 0 {
            return bad(format!(
                "H, D, A and N must be positive (H={}, D={}, A={}, N={})",
                self.heads, self.hidden_dim, self.feature_dim, self.n_points
            ));
        }
        if self.feature_dim % self.heads != 0 {
            return bad(format!("A={} is not divisible by H={}", self.feature_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad(format!("leaky_slope {} outside [0, 1)", self.leaky_slope));
        }
        backbone_registry().get(&self.backbone)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = ModelConfig::default();
        assert_eq!((c.heads, c.hidden_dim, c.feature_dim, c.n_points), (4, 2048, 1024, 1024));
        assert_eq!(c.leaky_slope, 0.2);
        c.validate().unwrap();

        let odd = ModelConfig { feature_dim: 1022, ..c.clone() };
        assert!(matches!(odd.validate(), Err(Error::InvalidConfig(_))));
        let zero = ModelConfig { n_points: 0, ..c.clone() };
        assert!(matches!(zero.validate(), Err(Error::InvalidConfig(_))));
        let unknown = ModelConfig { backbone: "alexnet".into(), ..c };
        assert!(matches!(unknown.validate(), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn letter_aliases_parse() {
        let c: ModelConfig = serde_json::from_str(r#"{"H": 8, "D": 512, "A": 256, "N": 256}"#).unwrap();
        assert_eq!((c.heads, c.hidden_dim, c.feature_dim, c.n_points), (8, 512, 256, 256));
        assert_eq!(c.backbone, "vit-imagenet");
    }
}
