//! RMSProp over the parameters of an [`Mlp`].

use ndarray::Zip;

use super::mlp::{Gradients, Layer, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropParams {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.9,
            epsilon: 1e-6,
        }
    }
}

/// Running mean of squared gradients, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub params: RmsPropParams,
    pub cache: Vec<Layer>,
}

impl RmsPropState {
    pub fn new(net: &Mlp, params: RmsPropParams) -> Self {
        Self {
            params,
            cache: net.layers().iter().map(|l| Layer::zeros(l.fan_in(), l.fan_out())).collect(),
        }
    }

    /// `c <- decay c + (1 - decay) g^2`, `theta <- theta - lr g / (sqrt(c) + eps)`.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) {
        let RmsPropParams {
            learning_rate: lr,
            decay,
            epsilon,
        } = self.params;
        for ((layer, cache), g) in net.layers_mut().iter_mut().zip(&mut self.cache).zip(&grads.layers) {
            Zip::from(&mut layer.w).and(&mut cache.w).and(&g.w).for_each(|p, c, &g| {
                *c = decay * *c + (1.0 - decay) * g * g;
                *p -= lr * g / (c.sqrt() + epsilon);
            });
            Zip::from(&mut layer.b).and(&mut cache.b).and(&g.b).for_each(|p, c, &g| {
                *c = decay * *c + (1.0 - decay) * g * g;
                *p -= lr * g / (c.sqrt() + epsilon);
            });
        }
    }
}
