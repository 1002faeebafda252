//! Vision transformer with 16×16 patches at 224², pre-norm blocks.

use ndarray::{s, Array2, Axis};

use super::{materialize, view1, view2, Backbone, BackboneWeights, ChannelStats, ParamInit, ParamSpec, HALF_STATS};
use crate::error::Result;
use crate::model::input::{FeatureSequence, ImageInput, IMAGE_SIZE};
use crate::model::layers::{gelu_inplace, layer_norm, softmax_rows};
use crate::model::weights::TensorMap;

const PATCH: usize = 16;
const GRID: usize = IMAGE_SIZE / PATCH;
const LN_EPS: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct VitConfig {
    pub name: &'static str,
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp: usize,
}

impl VitConfig {
    /// ViT-B/16.
    pub fn base() -> Self {
        Self {
            name: "vit-imagenet",
            width: 768,
            depth: 12,
            heads: 12,
            mlp: 3072,
        }
    }

    /// ViT-Ti/16.
    pub fn tiny() -> Self {
        Self {
            name: "vit-tiny-imagenet",
            width: 192,
            depth: 12,
            heads: 3,
            mlp: 768,
        }
    }

    pub fn sequence_length(&self) -> usize {
        GRID * GRID + 1
    }

    fn specs(&self) -> Vec<ParamSpec> {
        let (w, l) = (self.width, self.sequence_length());
        let mut v = vec![
            ParamSpec::new("cls_token", &[1, 1, w], ParamInit::Normal(1e-6)),
            ParamSpec::new("pos_embed", &[1, l, w], ParamInit::Normal(0.02)),
            ParamSpec::new("patch_embed.proj.weight", &[w, 3, PATCH, PATCH], ParamInit::Normal(0.02)),
            ParamSpec::new("patch_embed.proj.bias", &[w], ParamInit::Zeros),
        ];
        for b in 0..self.depth {
            let p = |n: &str| format!("blocks.{b}.{n}");
            v.extend([
                ParamSpec::new(p("norm1.weight"), &[w], ParamInit::Ones),
                ParamSpec::new(p("norm1.bias"), &[w], ParamInit::Zeros),
                ParamSpec::new(p("attn.qkv.weight"), &[3 * w, w], ParamInit::Normal(0.02)),
                ParamSpec::new(p("attn.qkv.bias"), &[3 * w], ParamInit::Zeros),
                ParamSpec::new(p("attn.proj.weight"), &[w, w], ParamInit::Normal(0.02)),
                ParamSpec::new(p("attn.proj.bias"), &[w], ParamInit::Zeros),
                ParamSpec::new(p("norm2.weight"), &[w], ParamInit::Ones),
                ParamSpec::new(p("norm2.bias"), &[w], ParamInit::Zeros),
                ParamSpec::new(p("mlp.fc1.weight"), &[self.mlp, w], ParamInit::Normal(0.02)),
                ParamSpec::new(p("mlp.fc1.bias"), &[self.mlp], ParamInit::Zeros),
                ParamSpec::new(p("mlp.fc2.weight"), &[w, self.mlp], ParamInit::Normal(0.02)),
                ParamSpec::new(p("mlp.fc2.bias"), &[w], ParamInit::Zeros),
            ]);
        }
        v.push(ParamSpec::new("norm.weight", &[w], ParamInit::Ones));
        v.push(ParamSpec::new("norm.bias", &[w], ParamInit::Zeros));
        v
    }
}

pub struct VisionTransformer {
    config: VitConfig,
    tensors: TensorMap,
}

impl VisionTransformer {
    pub fn new(config: VitConfig, weights: &BackboneWeights) -> Result<Self> {
        let tensors = materialize(config.name, &config.specs(), weights)?;
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &VitConfig {
        &self.config
    }

    fn linear(&self, x: &Array2<f32>, prefix: &str) -> Array2<f32> {
        let mut y = x.dot(&view2(&self.tensors, &format!("{prefix}.weight")).t());
        y += &view1(&self.tensors, &format!("{prefix}.bias"));
        y
    }

    fn norm(&self, x: &Array2<f32>, prefix: &str) -> Array2<f32> {
        layer_norm(
            x,
            &view1(&self.tensors, &format!("{prefix}.weight")).to_owned(),
            &view1(&self.tensors, &format!("{prefix}.bias")).to_owned(),
            LN_EPS,
        )
    }

    fn embed(&self, image: &ImageInput) -> Array2<f32> {
        let w = self.config.width;
        let px = image.pixels();
        let k = 3 * PATCH * PATCH;
        let patches = Array2::from_shape_fn((GRID * GRID, k), |(p, col)| {
            let (gy, gx) = (p / GRID, p % GRID);
            let (c, rem) = (col / (PATCH * PATCH), col % (PATCH * PATCH));
            px[[c, gy * PATCH + rem / PATCH, gx * PATCH + rem % PATCH]]
        });
        let kernel = self.tensors["patch_embed.proj.weight"]
            .view()
            .into_shape_with_order((w, k))
            .expect("contiguous patch kernel");
        let mut tokens = patches.dot(&kernel.t());
        tokens += &view1(&self.tensors, "patch_embed.proj.bias");

        let mut x = Array2::zeros((self.config.sequence_length(), w));
        x.row_mut(0).assign(&self.tensors["cls_token"].view().into_shape_with_order(w).unwrap());
        x.slice_mut(s![1.., ..]).assign(&tokens);
        x += &self.tensors["pos_embed"]
            .view()
            .into_shape_with_order((self.config.sequence_length(), w))
            .unwrap();
        x
    }

    fn attention(&self, h: &Array2<f32>, b: usize) -> Array2<f32> {
        let w = self.config.width;
        let dh = w / self.config.heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let qkv = self.linear(h, &format!("blocks.{b}.attn.qkv"));
        let mut out = Array2::zeros((h.nrows(), w));
        for head in 0..self.config.heads {
            let c = head * dh;
            let q = qkv.slice(s![.., c..c + dh]);
            let k = qkv.slice(s![.., w + c..w + c + dh]);
            let v = qkv.slice(s![.., 2 * w + c..2 * w + c + dh]);
            let mut scores = q.dot(&k.t()) * scale;
            softmax_rows(&mut scores);
            out.slice_mut(s![.., c..c + dh]).assign(&scores.dot(&v));
        }
        self.linear(&out, &format!("blocks.{b}.attn.proj"))
    }
}

impl Backbone for VisionTransformer {
    fn name(&self) -> &str {
        self.config.name
    }

    fn sequence_length(&self) -> usize {
        self.config.sequence_length()
    }

    fn width(&self) -> usize {
        self.config.width
    }

    fn channel_stats(&self) -> ChannelStats {
        HALF_STATS
    }

    fn tensors(&self) -> &TensorMap {
        &self.tensors
    }

    fn extract(&self, image: &ImageInput) -> Result<FeatureSequence> {
        let mut x = self.embed(image);
        for b in 0..self.config.depth {
            let h = self.norm(&x, &format!("blocks.{b}.norm1"));
            x += &self.attention(&h, b);
            let h = self.norm(&x, &format!("blocks.{b}.norm2"));
            let mut m = self.linear(&h, &format!("blocks.{b}.mlp.fc1"));
            gelu_inplace(&mut m);
            x += &self.linear(&m, &format!("blocks.{b}.mlp.fc2"));
        }
        let x = self.norm(&x, "norm");
        debug_assert_eq!(x.len_of(Axis(0)), self.config.sequence_length());
        FeatureSequence::new(x)
    }
}
