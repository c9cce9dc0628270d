//! Fully connected ReLU network with a linear head and manual backprop.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::DqnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`, so a batch `X (B x fan_in)` maps to `X W + b`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

/// Gradients with the same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Activations kept from a forward pass: the input and every layer output
/// (after ReLU for hidden layers).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            layer.w.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, DqnError> {
        if layers.is_empty() {
            return Err(DqnError::Shape("no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(DqnError::Shape(format!(
                    "layer {} outputs {} but layer {} takes {}",
                    i,
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
        }
        if let Some((i, l)) = layers.iter().enumerate().find(|(_, l)| l.b.len() != l.fan_out()) {
            return Err(DqnError::Shape(format!("layer {i} bias has {} entries, expected {}", l.b.len(), l.fan_out())));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(Layer::fan_out));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DqnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, DqnError> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w) + &layer.b;
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, DqnError> {
        self.check_input(x.ncols())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = acts[i].dot(&layer.w) + &layer.b;
            if i < last {
                h.mapv_inplace(relu);
            }
            acts.push(h);
        }
        Ok(ForwardCache { acts })
    }

    /// Backpropagates `d_out = dL/d(output)` through a cached pass.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Gradients {
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.acts[i];
            let w_grad = input.t().dot(&delta);
            let b_grad = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d_in = delta.dot(&self.layers[i].w.t());
                // ReLU gate from the stored post-activation
                d_in.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_in;
            }
            grads.push(Layer { w: w_grad, b: b_grad });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    fn check_input(&self, got: usize) -> Result<(), DqnError> {
        if got != self.input_len() {
            return Err(DqnError::Dimension {
                expected: self.input_len(),
                got,
            });
        }
        Ok(())
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}
