use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::model::{Head, HeadGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per head layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: HeadGrads,
    pub v: HeadGrads,
}

impl Adam {
    pub fn new(head: &Head, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: head.zero_grads(),
            v: head.zero_grads(),
        }
    }

    pub fn step(&mut self, head: &mut Head, grads: &HeadGrads) {
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let step = (c.learning_rate / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = c.eps as f32;
        let layers = head.layers_mut();
        for (i, layer) in layers.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m.layers[i], &mut self.v.layers[i], &grads.layers[i]);
            let update = |p: &mut f32, m: &mut f32, v: &mut f32, &g: &f32| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / ((*v).sqrt() / bc2_sqrt + eps);
            };
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
    }
}
