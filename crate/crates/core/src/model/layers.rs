//! Dense layers and activations with hand-written backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

/// Fully connected layer, `y = x Wᵀ + b`, with `W` stored `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

/// Accumulated gradients for a [`Linear`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl LinearGrad {
    pub fn zeros_like(layer: &Linear) -> Self {
        Self {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

/// Weight initialization scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform `±sqrt(6 / fan_in)`: keeps variance through (leaky) ReLU units.
    KaimingUniform,
    /// Uniform `±1 / sqrt(fan_in)`: for layers not followed by an activation.
    FanInUniform,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, init: Init, rng: &mut impl Rng) -> Self {
        let bound = match init {
            Init::KaimingUniform => (6.0 / inputs as f64).sqrt(),
            Init::FanInUniform => 1.0 / (inputs as f64).sqrt(),
        } as f32;
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || rng.gen_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients for output gradient `dy` at input `x`
    /// and returns the input gradient.
    pub fn backward(&self, x: ArrayView2<f32>, dy: ArrayView2<f32>, grad: &mut LinearGrad) -> Array2<f32> {
        self.accumulate(x, dy, grad);
        dy.dot(&self.weight)
    }

    /// Like [`Linear::backward`] but skips the input gradient.
    pub fn accumulate(&self, x: ArrayView2<f32>, dy: ArrayView2<f32>, grad: &mut LinearGrad) {
        ndarray::linalg::general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

pub fn leaky_relu(x: &Array2<f32>, slope: f32) -> Array2<f32> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// `dy ⊙ f'(pre)` for the leaky ReLU, with derivative `slope` at zero.
pub fn leaky_relu_backward(pre: &Array2<f32>, dy: &Array2<f32>, slope: f32) -> Array2<f32> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d *= slope;
        }
    });
    dx
}

/// Row-wise softmax in place.
pub fn softmax_rows(x: &mut Array2<f32>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Row-wise layer normalization with affine parameters.
pub fn layer_norm(x: &Array2<f32>, gamma: &Array1<f32>, beta: &Array1<f32>, eps: f32) -> Array2<f32> {
    let mut out = x.clone();
    let n = x.ncols() as f32;
    for mut row in out.rows_mut() {
        let mean = row.sum() / n;
        let var = row.fold(0.0, |a, &v| a + (v - mean) * (v - mean)) / n;
        let inv = 1.0 / (var + eps).sqrt();
        Zip::from(&mut row).and(gamma).and(beta).for_each(|v, &g, &b| {
            *v = (*v - mean) * inv * g + b;
        });
    }
    out
}

/// Exact (erf-based) GELU.
pub fn gelu_inplace(x: &mut Array2<f32>) {
    x.mapv_inplace(|v| 0.5 * v * (1.0 + libm::erff(v * std::f32::consts::FRAC_1_SQRT_2)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_forward_matches_manual() {
        let l = Linear {
            weight: array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]],
            bias: array![0.5, 0.0, -1.0],
        };
        let y = l.forward(array![[1.0, 1.0]].view());
        assert_eq!(y, array![[3.5, -1.0, 2.5]]);
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Linear::new(4, 3, Init::KaimingUniform, &mut rng);
        let x = Array2::from_shape_fn((2, 4), |(i, j)| (i as f32 - j as f32) * 0.3);
        let dy = Array2::from_shape_fn((2, 3), |(i, j)| 0.1 + i as f32 * 0.2 - j as f32 * 0.1);
        // loss = sum(y ⊙ dy)
        let loss = |l: &Linear, x: &Array2<f32>| (&l.forward(x.view()) * &dy).sum() as f64;
        let mut g = LinearGrad::zeros_like(&l);
        let dx = l.backward(x.view(), dy.view(), &mut g);
        let h = 1e-2f32;
        for (idx, _) in l.weight.indexed_iter() {
            let (mut p, mut m) = (l.clone(), l.clone());
            p.weight[idx] += h;
            m.weight[idx] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h as f64);
            assert!((fd - g.weight[idx] as f64).abs() < 1e-3);
        }
        for (idx, _) in x.indexed_iter() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[idx] += h;
            m[idx] -= h;
            let fd = (loss(&l, &p) - loss(&l, &m)) / (2.0 * h as f64);
            assert!((fd - dx[idx] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn activations() {
        let x = array![[-2.0f32, 0.0, 3.0]];
        assert_eq!(leaky_relu(&x, 0.2), array![[-0.4, 0.0, 3.0]]);
        let d = leaky_relu_backward(&x, &array![[1.0, 1.0, 1.0]], 0.2);
        assert_eq!(d, array![[0.2, 0.2, 1.0]]);

        let mut s = array![[1.0f32, 1.0, 1.0], [0.0, 1000.0, 0.0]];
        softmax_rows(&mut s);
        assert!((s[[0, 0]] - 1.0 / 3.0).abs() < 1e-6);
        assert!((s[[1, 1]] - 1.0).abs() < 1e-6);

        let mut g = array![[0.0f32, 1.0, -1.0]];
        gelu_inplace(&mut g);
        assert!((g[[0, 1]] - 0.841_344_7).abs() < 1e-5);
        assert!((g[[0, 2]] + 0.158_655_3).abs() < 1e-5);

        let ln = layer_norm(&array![[1.0f32, 3.0]], &array![1.0, 1.0], &array![0.0, 0.5], 0.0);
        assert!((ln[[0, 0]] + 1.0).abs() < 1e-6 && (ln[[0, 1]] - 1.5).abs() < 1e-6);
    }
}
