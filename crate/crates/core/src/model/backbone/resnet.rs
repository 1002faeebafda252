//! ResNet-50 (torchvision layout, stride on the 3×3 convolution), eval-mode
//! batch norm, truncated before global pooling.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use super::{materialize, view1, Backbone, BackboneWeights, ChannelStats, ParamInit, ParamSpec, IMAGENET_STATS};
use crate::error::Result;
use crate::model::input::{FeatureSequence, ImageInput};
use crate::model::weights::TensorMap;

const NAME: &str = "resnet50-imagenet";
const BN_EPS: f32 = 1e-5;
const STAGES: [(usize, usize); 4] = [(3, 64), (4, 128), (6, 256), (3, 512)];
const EXPANSION: usize = 4;
const WIDTH: usize = 2048;
const GRID: usize = 7;

fn conv_spec(v: &mut Vec<ParamSpec>, name: &str, out: usize, inp: usize, k: usize) {
    let std = (2.0 / (out * k * k) as f32).sqrt();
    v.push(ParamSpec::new(format!("{name}.weight"), &[out, inp, k, k], ParamInit::Normal(std)));
}

fn bn_spec(v: &mut Vec<ParamSpec>, name: &str, c: usize, zero_gamma: bool) {
    let gamma = if zero_gamma { ParamInit::Zeros } else { ParamInit::Ones };
    v.extend([
        ParamSpec::new(format!("{name}.weight"), &[c], gamma),
        ParamSpec::new(format!("{name}.bias"), &[c], ParamInit::Zeros),
        ParamSpec::new(format!("{name}.running_mean"), &[c], ParamInit::Zeros),
        ParamSpec::new(format!("{name}.running_var"), &[c], ParamInit::Ones),
    ]);
}

fn specs() -> Vec<ParamSpec> {
    let mut v = Vec::new();
    conv_spec(&mut v, "conv1", 64, 3, 7);
    bn_spec(&mut v, "bn1", 64, false);
    let mut inp = 64;
    for (li, &(blocks, planes)) in STAGES.iter().enumerate() {
        for b in 0..blocks {
            let p = format!("layer{}.{b}", li + 1);
            conv_spec(&mut v, &format!("{p}.conv1"), planes, inp, 1);
            bn_spec(&mut v, &format!("{p}.bn1"), planes, false);
            conv_spec(&mut v, &format!("{p}.conv2"), planes, planes, 3);
            bn_spec(&mut v, &format!("{p}.bn2"), planes, false);
            conv_spec(&mut v, &format!("{p}.conv3"), planes * EXPANSION, planes, 1);
            // zero_init_residual
            bn_spec(&mut v, &format!("{p}.bn3"), planes * EXPANSION, true);
            if b == 0 {
                conv_spec(&mut v, &format!("{p}.downsample.0"), planes * EXPANSION, inp, 1);
                bn_spec(&mut v, &format!("{p}.downsample.1"), planes * EXPANSION, false);
            }
            inp = planes * EXPANSION;
        }
    }
    v
}

/// 2D convolution without bias via im2col. `x` is `[C, H, W]`.
fn conv2d(x: &Array3<f32>, weight: &ndarray::ArrayD<f32>, stride: usize, pad: usize) -> Array3<f32> {
    let (c, h, w) = x.dim();
    let (o, k) = (weight.shape()[0], weight.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let kernel: ArrayView2<f32> = weight.view().into_shape_with_order((o, c * k * k)).expect("contiguous kernel");
    let out = if k == 1 && stride == 1 && pad == 0 {
        kernel.dot(&x.view().into_shape_with_order((c, h * w)).expect("contiguous input"))
    } else {
        let mut cols = Array2::<f32>::zeros((c * k * k, ho * wo));
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let mut row = cols.row_mut((ci * k + ky) * k + kx);
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                row[oy * wo + ox] = x[[ci, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
            }
        }
        kernel.dot(&cols)
    };
    out.into_shape_with_order((o, ho, wo)).expect("output reshape")
}

fn max_pool_3x3_s2(x: &Array3<f32>) -> Array3<f32> {
    let (c, h, w) = x.dim();
    let (ho, wo) = ((h + 2 - 3) / 2 + 1, (w + 2 - 3) / 2 + 1);
    Array3::from_shape_fn((c, ho, wo), |(ci, oy, ox)| {
        let mut m = f32::NEG_INFINITY;
        for ky in 0..3 {
            for kx in 0..3 {
                let (iy, ix) = ((oy * 2 + ky) as isize - 1, (ox * 2 + kx) as isize - 1);
                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                    m = m.max(x[[ci, iy as usize, ix as usize]]);
                }
            }
        }
        m
    })
}

pub struct ResNet50 {
    tensors: TensorMap,
}

impl ResNet50 {
    pub fn new(weights: &BackboneWeights) -> Result<Self> {
        Ok(Self {
            tensors: materialize(NAME, &specs(), weights)?,
        })
    }

    fn conv(&self, x: &Array3<f32>, name: &str, stride: usize, pad: usize) -> Array3<f32> {
        conv2d(x, &self.tensors[&format!("{name}.weight")], stride, pad)
    }

    fn batch_norm(&self, x: &mut Array3<f32>, name: &str, relu: bool) {
        let t = |s: &str| view1(&self.tensors, &format!("{name}.{s}"));
        let (gamma, beta, mean, var) = (t("weight"), t("bias"), t("running_mean"), t("running_var"));
        for (ci, mut plane) in x.axis_iter_mut(Axis(0)).enumerate() {
            let scale = gamma[ci] / (var[ci] + BN_EPS).sqrt();
            let shift = beta[ci] - mean[ci] * scale;
            plane.mapv_inplace(|v| {
                let y = v * scale + shift;
                if relu {
                    y.max(0.0)
                } else {
                    y
                }
            });
        }
    }

    fn bottleneck(&self, x: &Array3<f32>, prefix: &str, stride: usize, downsample: bool) -> Array3<f32> {
        let mut out = self.conv(x, &format!("{prefix}.conv1"), 1, 0);
        self.batch_norm(&mut out, &format!("{prefix}.bn1"), true);
        let mut out = self.conv(&out, &format!("{prefix}.conv2"), stride, 1);
        self.batch_norm(&mut out, &format!("{prefix}.bn2"), true);
        let mut out = self.conv(&out, &format!("{prefix}.conv3"), 1, 0);
        self.batch_norm(&mut out, &format!("{prefix}.bn3"), false);
        if downsample {
            let src = if stride == 1 {
                x.clone()
            } else {
                x.slice(ndarray::s![.., ..;stride, ..;stride]).as_standard_layout().into_owned()
            };
            let mut id = self.conv(&src, &format!("{prefix}.downsample.0"), 1, 0);
            self.batch_norm(&mut id, &format!("{prefix}.downsample.1"), false);
            out += &id;
        } else {
            out += x;
        }
        out.mapv_inplace(|v| v.max(0.0));
        out
    }
}

impl Backbone for ResNet50 {
    fn name(&self) -> &str {
        NAME
    }

    fn sequence_length(&self) -> usize {
        GRID * GRID
    }

    fn width(&self) -> usize {
        WIDTH
    }

    fn channel_stats(&self) -> ChannelStats {
        IMAGENET_STATS
    }

    fn tensors(&self) -> &TensorMap {
        &self.tensors
    }

    fn extract(&self, image: &ImageInput) -> Result<FeatureSequence> {
        let mut x = self.conv(image.pixels(), "conv1", 2, 3);
        self.batch_norm(&mut x, "bn1", true);
        let mut x = max_pool_3x3_s2(&x);
        for (li, &(blocks, _)) in STAGES.iter().enumerate() {
            for b in 0..blocks {
                let stride = if li > 0 && b == 0 { 2 } else { 1 };
                x = self.bottleneck(&x, &format!("layer{}.{b}", li + 1), stride, b == 0);
            }
        }
        let (c, h, w) = x.dim();
        let tokens = x.into_shape_with_order((c, h * w)).expect("contiguous features").reversed_axes();
        FeatureSequence::new(tokens.as_standard_layout().into_owned())
    }
}
