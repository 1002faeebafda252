//! Geometric projection module: context vector to `N × 3` coordinates.

use ndarray::Array2;
use rand::Rng;

use super::layers::{leaky_relu, leaky_relu_backward, Init, Linear, LinearGrad};
use super::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionHead {
    /// `A → D`, LeakyReLU, `D → D`, LeakyReLU, `D → 3N`.
    Mlp {
        fc1: Linear,
        fc2: Linear,
        out: Linear,
        slope: f32,
    },
    /// Ablated head: one `A → 3N` map.
    Direct { out: Linear },
}

#[derive(Debug, Clone)]
pub enum GpmCache {
    Mlp {
        ctx: Array2<f32>,
        z1: Array2<f32>,
        h1: Array2<f32>,
        z2: Array2<f32>,
        h2: Array2<f32>,
    },
    Direct {
        ctx: Array2<f32>,
    },
}

impl ProjectionHead {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (a, d, n3) = (cfg.feature_dim, cfg.hidden_dim, cfg.n_points * 3);
        if cfg.enable_gpm {
            Self::Mlp {
                fc1: Linear::new(a, d, Init::KaimingUniform, rng),
                fc2: Linear::new(d, d, Init::KaimingUniform, rng),
                out: Linear::new(d, n3, Init::FanInUniform, rng),
                slope: cfg.leaky_slope,
            }
        } else {
            Self::Direct {
                out: Linear::new(a, n3, Init::FanInUniform, rng),
            }
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Self::Mlp { fc1, .. } => fc1.inputs(),
            Self::Direct { out } => out.inputs(),
        }
    }

    pub fn n_points(&self) -> usize {
        match self {
            Self::Mlp { out, .. } | Self::Direct { out } => out.outputs() / 3,
        }
    }

    pub fn final_layer(&self) -> &Linear {
        match self {
            Self::Mlp { out, .. } | Self::Direct { out } => out,
        }
    }

    pub fn layers(&self) -> Vec<(&'static str, &Linear)> {
        match self {
            Self::Mlp { fc1, fc2, out, .. } => vec![("fc1", fc1), ("fc2", fc2), ("out", out)],
            Self::Direct { out } => vec![("out", out)],
        }
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        match self {
            Self::Mlp { fc1, fc2, out, .. } => vec![fc1, fc2, out],
            Self::Direct { out } => vec![out],
        }
    }

    /// Maps `[B, A]` context rows to `[B, 3N]` flattened coordinates.
    pub fn forward(&self, ctx: &Array2<f32>) -> Result<(Array2<f32>, GpmCache)> {
        if ctx.ncols() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: ctx.ncols(),
            });
        }
        match self {
            Self::Mlp { fc1, fc2, out, slope } => {
                let z1 = fc1.forward(ctx.view());
                let h1 = leaky_relu(&z1, *slope);
                let z2 = fc2.forward(h1.view());
                let h2 = leaky_relu(&z2, *slope);
                let y = out.forward(h2.view());
                Ok((
                    y,
                    GpmCache::Mlp {
                        ctx: ctx.clone(),
                        z1,
                        h1,
                        z2,
                        h2,
                    },
                ))
            }
            Self::Direct { out } => Ok((out.forward(ctx.view()), GpmCache::Direct { ctx: ctx.clone() })),
        }
    }

    /// Accumulates parameter gradients (in [`ProjectionHead::layers`] order)
    /// and returns the gradient with respect to the context rows.
    pub fn backward(&self, cache: &GpmCache, dy: &Array2<f32>, grads: &mut [LinearGrad]) -> Array2<f32> {
        match (self, cache) {
            (Self::Mlp { fc1, fc2, out, slope }, GpmCache::Mlp { ctx, z1, h1, z2, h2 }) => {
                let dh2 = out.backward(h2.view(), dy.view(), &mut grads[2]);
                let dz2 = leaky_relu_backward(z2, &dh2, *slope);
                let dh1 = fc2.backward(h1.view(), dz2.view(), &mut grads[1]);
                let dz1 = leaky_relu_backward(z1, &dh1, *slope);
                fc1.backward(ctx.view(), dz1.view(), &mut grads[0])
            }
            (Self::Direct { out }, GpmCache::Direct { ctx }) => out.backward(ctx.view(), dy.view(), &mut grads[0]),
            _ => panic!("cache does not match projection variant"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_context_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for enable_gpm in [true, false] {
            let cfg = ModelConfig {
                feature_dim: 16,
                hidden_dim: 32,
                n_points: 10,
                enable_gpm,
                ..ModelConfig::default()
            };
            let gpm = ProjectionHead::new(&cfg, &mut rng);
            let (y, _) = gpm.forward(&Array2::zeros((1, 16))).unwrap();
            assert_eq!(y.dim(), (1, 30));
            assert!(y.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn final_layer_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gpm = ProjectionHead::new(&ModelConfig::default(), &mut rng);
        assert_eq!(gpm.final_layer().parameter_count(), 2048 * 3072 + 3072);
        assert_eq!(gpm.n_points(), 1024);
    }

    #[test]
    fn wrong_context_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = ModelConfig {
            feature_dim: 8,
            hidden_dim: 8,
            n_points: 2,
            ..ModelConfig::default()
        };
        let gpm = ProjectionHead::new(&cfg, &mut rng);
        assert!(matches!(
            gpm.forward(&Array2::zeros((1, 7))),
            Err(Error::WidthMismatch { expected: 8, got: 7 })
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ModelConfig {
            feature_dim: 4,
            hidden_dim: 5,
            n_points: 2,
            ..ModelConfig::default()
        };
        let gpm = ProjectionHead::new(&cfg, &mut rng);
        let ctx = Array2::from_shape_simple_fn((3, 4), || rng.gen_range(-1.0..1.0f32));
        let dy = Array2::from_shape_simple_fn((3, 6), || rng.gen_range(-1.0..1.0f32));
        let (_, cache) = gpm.forward(&ctx).unwrap();
        let mut grads: Vec<LinearGrad> = gpm.layers().iter().map(|(_, l)| LinearGrad::zeros_like(l)).collect();
        let dctx = gpm.backward(&cache, &dy, &mut grads);
        let loss = |c: &Array2<f32>| {
            let (y, _) = gpm.forward(c).unwrap();
            y.iter().zip(&dy).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>()
        };
        let h = 1e-2f32;
        for (idx, _) in ctx.indexed_iter() {
            let (mut p, mut m) = (ctx.clone(), ctx.clone());
            p[idx] += h;
            m[idx] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h as f64);
            assert!((fd - dctx[idx] as f64).abs() < 2e-3 * (1.0 + fd.abs()), "{fd} vs {}", dctx[idx]);
        }
    }
}
