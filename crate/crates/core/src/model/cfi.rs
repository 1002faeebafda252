//! Contextual feature integrator: token lift, multi-head self-attention and
//! mean pooling down to one width-`A` vector per image.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::input::FeatureSequence;
use super::layers::{leaky_relu, leaky_relu_backward, softmax_rows, Init, Linear, LinearGrad};
use crate::error::{Error, Result};

/// Attention aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCfi {
    pub lift: Linear,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub slope: f32,
}

/// Either the attention aggregator or the ablated mean-pool + linear resize.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextIntegrator {
    Attention(AttentionCfi),
    Pooled { resize: Linear },
}

#[derive(Debug, Clone)]
pub enum CfiCache {
    Attention {
        x: Array2<f32>,
        offsets: Vec<usize>,
        lifted_pre: Array2<f32>,
        lifted: Array2<f32>,
        q: Array2<f32>,
        k: Array2<f32>,
        v: Array2<f32>,
        /// Attention probabilities per (sample, head).
        probs: Vec<Array2<f32>>,
        /// Column means of `probs`: the pooled attention weights.
        pooled: Vec<Array1<f32>>,
        concat: Array2<f32>,
    },
    Pooled {
        means: Array2<f32>,
    },
}

fn check_width(feats: &[&FeatureSequence], expected: usize) -> Result<()> {
    match feats.iter().find(|f| f.width() != expected) {
        Some(f) => Err(Error::WidthMismatch {
            expected,
            got: f.width(),
        }),
        None if feats.is_empty() => Err(Error::EmptyInput),
        None => Ok(()),
    }
}

impl AttentionCfi {
    pub fn new(input: usize, width: usize, heads: usize, slope: f32, rng: &mut impl Rng) -> Self {
        Self {
            lift: Linear::new(input, width, Init::KaimingUniform, rng),
            query: Linear::new(width, width, Init::FanInUniform, rng),
            key: Linear::new(width, width, Init::FanInUniform, rng),
            value: Linear::new(width, width, Init::FanInUniform, rng),
            output: Linear::new(width, width, Init::FanInUniform, rng),
            heads,
            slope,
        }
    }

    fn head_dim(&self) -> usize {
        self.output.inputs() / self.heads
    }

    fn project(&self, tokens: ArrayView2<f32>) -> (Array2<f32>, Array2<f32>, Array2<f32>, Array2<f32>, Array2<f32>) {
        let pre = self.lift.forward(tokens);
        let lifted = leaky_relu(&pre, self.slope);
        let q = self.query.forward(lifted.view());
        let k = self.key.forward(lifted.view());
        let v = self.value.forward(lifted.view());
        (pre, lifted, q, k, v)
    }

    fn scores(&self, q: ArrayView2<f32>, k: ArrayView2<f32>) -> Array2<f32> {
        let scale = 1.0 / (self.head_dim() as f32).sqrt();
        let mut s = q.dot(&k.t()) * scale;
        softmax_rows(&mut s);
        s
    }

    /// Per-token attention output (heads concatenated), before pooling.
    pub fn attend_tokens(&self, feats: &FeatureSequence) -> Array2<f32> {
        let (_, _, q, k, v) = self.project(feats.tokens());
        let dh = self.head_dim();
        let mut out = Array2::zeros(v.raw_dim());
        for h in 0..self.heads {
            let c = s![.., h * dh..(h + 1) * dh];
            let p = self.scores(q.slice(c), k.slice(c));
            out.slice_mut(c).assign(&p.dot(&v.slice(c)));
        }
        out
    }
}

impl ContextIntegrator {
    pub fn new(input: usize, cfg: &super::ModelConfig, rng: &mut impl Rng) -> Self {
        if cfg.enable_cfi {
            Self::Attention(AttentionCfi::new(input, cfg.feature_dim, cfg.heads, cfg.leaky_slope, rng))
        } else {
            Self::Pooled {
                resize: Linear::new(input, cfg.feature_dim, Init::FanInUniform, rng),
            }
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Self::Attention(a) => a.lift.inputs(),
            Self::Pooled { resize } => resize.inputs(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Self::Attention(a) => a.output.outputs(),
            Self::Pooled { resize } => resize.outputs(),
        }
    }

    pub fn layers(&self) -> Vec<(&'static str, &Linear)> {
        match self {
            Self::Attention(a) => vec![
                ("lift", &a.lift),
                ("query", &a.query),
                ("key", &a.key),
                ("value", &a.value),
                ("output", &a.output),
            ],
            Self::Pooled { resize } => vec![("resize", resize)],
        }
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        match self {
            Self::Attention(a) => vec![&mut a.lift, &mut a.query, &mut a.key, &mut a.value, &mut a.output],
            Self::Pooled { resize } => vec![resize],
        }
    }

    /// One context vector per input sequence, as rows of `[B, A]`.
    pub fn forward(&self, feats: &[&FeatureSequence]) -> Result<(Array2<f32>, CfiCache)> {
        check_width(feats, self.input_width())?;
        match self {
            Self::Pooled { resize } => {
                let mut means = Array2::zeros((feats.len(), resize.inputs()));
                for (b, f) in feats.iter().enumerate() {
                    means.row_mut(b).assign(&f.tokens().mean_axis(Axis(0)).expect("nonempty"));
                }
                Ok((resize.forward(means.view()), CfiCache::Pooled { means }))
            }
            Self::Attention(a) => {
                let mut offsets = vec![0];
                for f in feats {
                    offsets.push(offsets.last().unwrap() + f.len());
                }
                let mut x = Array2::zeros((*offsets.last().unwrap(), a.lift.inputs()));
                for (b, f) in feats.iter().enumerate() {
                    x.slice_mut(s![offsets[b]..offsets[b + 1], ..]).assign(&f.tokens());
                }
                let (lifted_pre, lifted, q, k, v) = a.project(x.view());
                let dh = a.head_dim();
                let mut concat = Array2::zeros((feats.len(), a.output.inputs()));
                let mut probs = Vec::with_capacity(feats.len() * a.heads);
                let mut pooled = Vec::with_capacity(feats.len() * a.heads);
                for b in 0..feats.len() {
                    let rows = offsets[b]..offsets[b + 1];
                    for h in 0..a.heads {
                        let c = h * dh..(h + 1) * dh;
                        let p = a.scores(
                            q.slice(s![rows.clone(), c.clone()]),
                            k.slice(s![rows.clone(), c.clone()]),
                        );
                        let w = p.mean_axis(Axis(0)).expect("nonempty");
                        concat
                            .slice_mut(s![b, c.clone()])
                            .assign(&w.dot(&v.slice(s![rows.clone(), c])));
                        probs.push(p);
                        pooled.push(w);
                    }
                }
                let out = a.output.forward(concat.view());
                Ok((
                    out,
                    CfiCache::Attention {
                        x,
                        offsets,
                        lifted_pre,
                        lifted,
                        q,
                        k,
                        v,
                        probs,
                        pooled,
                        concat,
                    },
                ))
            }
        }
    }

    /// Accumulates parameter gradients (in [`ContextIntegrator::layers`]
    /// order) for output gradient `dy` of shape `[B, A]`.
    pub fn backward(&self, cache: &CfiCache, dy: &Array2<f32>, grads: &mut [LinearGrad]) {
        match (self, cache) {
            (Self::Pooled { resize }, CfiCache::Pooled { means }) => {
                resize.accumulate(means.view(), dy.view(), &mut grads[0]);
            }
            (
                Self::Attention(a),
                CfiCache::Attention {
                    x,
                    offsets,
                    lifted_pre,
                    lifted,
                    q,
                    k,
                    v,
                    probs,
                    pooled,
                    concat,
                },
            ) => {
                let (g_lift, rest) = grads.split_first_mut().expect("five layer grads");
                let d_concat = a.output.backward(concat.view(), dy.view(), &mut rest[3]);
                let dh = a.head_dim();
                let scale = 1.0 / (dh as f32).sqrt();
                let mut dq = Array2::zeros(q.raw_dim());
                let mut dk = Array2::zeros(k.raw_dim());
                let mut dv = Array2::zeros(v.raw_dim());
                for b in 0..offsets.len() - 1 {
                    let rows = offsets[b]..offsets[b + 1];
                    let len = (rows.end - rows.start) as f32;
                    for h in 0..a.heads {
                        let c = h * dh..(h + 1) * dh;
                        let (p, w) = (&probs[b * a.heads + h], &pooled[b * a.heads + h]);
                        let d_head = d_concat.slice(s![b, c.clone()]);
                        let vh = v.slice(s![rows.clone(), c.clone()]);
                        // Gradient of the pooled weights, then through the row softmax.
                        let g = vh.dot(&d_head) / len;
                        let mut ds = p.clone();
                        for mut row in ds.rows_mut() {
                            let dot = row.dot(&g);
                            row.zip_mut_with(&g, |pij, gj| *pij *= gj - dot);
                        }
                        ds *= scale;
                        let w2 = w.view().insert_axis(Axis(1));
                        dv.slice_mut(s![rows.clone(), c.clone()])
                            .assign(&w2.dot(&d_head.insert_axis(Axis(0))));
                        dq.slice_mut(s![rows.clone(), c.clone()])
                            .assign(&ds.dot(&k.slice(s![rows.clone(), c.clone()])));
                        dk.slice_mut(s![rows.clone(), c.clone()])
                            .assign(&ds.t().dot(&q.slice(s![rows.clone(), c])));
                    }
                }
                let mut d_lifted = a.query.backward(lifted.view(), dq.view(), &mut rest[0]);
                d_lifted += &a.key.backward(lifted.view(), dk.view(), &mut rest[1]);
                d_lifted += &a.value.backward(lifted.view(), dv.view(), &mut rest[2]);
                let d_pre = leaky_relu_backward(lifted_pre, &d_lifted, a.slope);
                a.lift.accumulate(x.view(), d_pre.view(), g_lift);
            }
            _ => panic!("cache does not match integrator variant"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(enable_cfi: bool) -> ModelConfig {
        ModelConfig {
            heads: 2,
            feature_dim: 6,
            enable_cfi,
            ..ModelConfig::default()
        }
    }

    fn random_seq(rng: &mut impl Rng, l: usize, w: usize) -> FeatureSequence {
        FeatureSequence::new(Array2::from_shape_simple_fn((l, w), || rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn constant_tokens_attend_to_their_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ContextIntegrator::Attention(a) = ContextIntegrator::new(5, &small_cfg(true), &mut rng) else {
            unreachable!()
        };
        let v: Vec<f32> = (0..5).map(|i| i as f32 * 0.3 - 0.5).collect();
        let tokens = Array2::from_shape_fn((9, 5), |(_, j)| v[j]);
        let out = a.attend_tokens(&FeatureSequence::new(tokens.clone()).unwrap());
        let expected = a.value.forward(leaky_relu(&a.lift.forward(tokens.view()), 0.2).view());
        for i in 0..9 {
            for j in 0..6 {
                assert!((out[[i, j]] - expected[[0, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn output_width_is_feature_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ModelConfig::default();
        let cfi = ContextIntegrator::new(32, &cfg, &mut rng);
        let f = random_seq(&mut rng, 7, 32);
        let (y, _) = cfi.forward(&[&f]).unwrap();
        assert_eq!(y.dim(), (1, 1024));
    }

    #[test]
    fn pooled_output_invariant_to_token_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for enable in [true, false] {
            let cfi = ContextIntegrator::new(8, &small_cfg(enable), &mut rng);
            let f = random_seq(&mut rng, 11, 8);
            let perm: Vec<usize> = (0..11).rev().collect();
            let g = FeatureSequence::new(f.tokens().select(Axis(0), &perm)).unwrap();
            let (a, _) = cfi.forward(&[&f]).unwrap();
            let (b, _) = cfi.forward(&[&g]).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-5));
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfi = ContextIntegrator::new(8, &small_cfg(true), &mut rng);
        let f = random_seq(&mut rng, 3, 9);
        assert!(matches!(
            cfi.forward(&[&f]),
            Err(Error::WidthMismatch { expected: 8, got: 9 })
        ));
    }

    #[test]
    fn batched_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfi = ContextIntegrator::new(8, &small_cfg(true), &mut rng);
        let f1 = random_seq(&mut rng, 4, 8);
        let f2 = random_seq(&mut rng, 6, 8);
        let (both, _) = cfi.forward(&[&f1, &f2]).unwrap();
        let (one, _) = cfi.forward(&[&f2]).unwrap();
        assert!(both.row(1).iter().zip(one.row(0)).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for enable in [true, false] {
            let mut cfi = ContextIntegrator::new(5, &small_cfg(enable), &mut rng);
            let f1 = random_seq(&mut rng, 4, 5);
            let f2 = random_seq(&mut rng, 3, 5);
            let dy = Array2::from_shape_simple_fn((2, 6), || rng.gen_range(-1.0..1.0f32));
            let loss = |c: &ContextIntegrator| {
                let (y, _) = c.forward(&[&f1, &f2]).unwrap();
                y.iter().zip(&dy).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>()
            };
            let (_, cache) = cfi.forward(&[&f1, &f2]).unwrap();
            let mut grads: Vec<LinearGrad> = cfi.layers().iter().map(|(_, l)| LinearGrad::zeros_like(l)).collect();
            cfi.backward(&cache, &dy, &mut grads);
            let h = 1e-2f32;
            let n_layers = grads.len();
            for li in 0..n_layers {
                for idx in [[0usize, 0usize], [1, 2], [3, 4]] {
                    let base = cfi.layers_mut()[li].weight[idx];
                    cfi.layers_mut()[li].weight[idx] = base + h;
                    let up = loss(&cfi);
                    cfi.layers_mut()[li].weight[idx] = base - h;
                    let down = loss(&cfi);
                    cfi.layers_mut()[li].weight[idx] = base;
                    let fd = (up - down) / (2.0 * h as f64);
                    let an = grads[li].weight[idx] as f64;
                    assert!((fd - an).abs() < 2e-3 * (1.0 + an.abs()), "layer {li} {idx:?}: fd {fd} vs {an}");
                }
                let base = cfi.layers_mut()[li].bias[1];
                cfi.layers_mut()[li].bias[1] = base + h;
                let up = loss(&cfi);
                cfi.layers_mut()[li].bias[1] = base - h;
                let down = loss(&cfi);
                cfi.layers_mut()[li].bias[1] = base;
                let fd = (up - down) / (2.0 * h as f64);
                assert!((fd - grads[li].bias[1] as f64).abs() < 2e-3 * (1.0 + fd.abs()));
            }
        }
    }
}
