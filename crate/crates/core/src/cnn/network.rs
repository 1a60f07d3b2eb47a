//! The trainable network: parameters, cached forward pass and
//! backpropagation of the mean softmax cross-entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{infer_shapes, LayerSpec};
use super::layers::{self, ConvGeometry, LrnParams};
use super::volume::{Shape, Volume};
use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Learnable parameters of one layer; empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros(weights: usize, bias: usize) -> Self {
        LayerParams {
            weights: vec![0.0; weights],
            bias: vec![0.0; bias],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weight initialization. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Init {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with std `sqrt(2 / fan_in)`.
    Msra,
}

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian { std: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    input: Shape,
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    shapes: Vec<Shape>,
}

/// Gradients share the parameter layout.
pub type Gradients = Vec<LayerParams>;

impl NetworkModel {
    /// Builds a model with zero parameters after checking that the layer
    /// chain is shape-consistent and ends in a 2-way softmax.
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let shapes = infer_shapes(input, &layers)?;
        match layers.last() {
            Some(LayerSpec::Softmax) => {}
            _ => return Err(Error::InvalidArgument("network must end with a softmax layer".into())),
        }
        if *shapes.last().unwrap() != Shape::new(2, 1, 1) {
            return Err(Error::Shape(format!(
                "network must produce 2 logits, produces {}",
                shapes.last().unwrap()
            )));
        }
        let params = layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| {
                let (w, b) = l.param_counts(s);
                LayerParams::zeros(w, b)
            })
            .collect();
        Ok(NetworkModel {
            input,
            layers,
            params,
            shapes,
        })
    }

    pub fn initialized(input: Shape, layers: Vec<LayerSpec>, init: Init, seed: u64) -> Result<Self> {
        let mut model = Self::new(input, layers)?;
        model.initialize(init, seed)?;
        Ok(model)
    }

    pub fn initialize(&mut self, init: Init, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (p, &shape) in self.params.iter_mut().zip(&self.shapes) {
            if p.weights.is_empty() {
                continue;
            }
            let fan_in = p.weights.len() / p.bias.len();
            let std = match init {
                Init::Gaussian { std } => std,
                Init::Msra => (2.0 / fan_in as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std)
                .map_err(|e| Error::InvalidArgument(format!("init std {std}: {e}")))?;
            p.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
            p.bias.fill(0.0);
            let _ = shape;
        }
        Ok(())
    }

    /// Zeroes the classifier weights so both classes score equally.
    pub fn zero_classifier(&mut self) {
        for (l, p) in self.layers.iter().zip(&mut self.params) {
            if matches!(l, LayerSpec::InnerProduct { .. }) {
                p.weights.fill(0.0);
                p.bias.fill(0.0);
            }
        }
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    /// Replaces all parameters; block sizes must match the architecture.
    pub fn set_params(&mut self, params: Vec<LayerParams>) -> Result<()> {
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(a, b)| a.weights.len() != b.weights.len() || a.bias.len() != b.bias.len())
        {
            return Err(Error::Shape("parameter blocks do not match the architecture".into()));
        }
        if params.iter().flat_map(|p| p.weights.iter().chain(&p.bias)).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(LayerParams::len).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.params
            .iter()
            .map(|p| LayerParams::zeros(p.weights.len(), p.bias.len()))
            .collect()
    }

    fn check_input(&self, input: &Volume) -> Result<()> {
        if input.shape() != self.input {
            return Err(Error::Shape(format!(
                "model expects {} input, got {}",
                self.input,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate needed by [`backward`].
    ///
    /// [`backward`]: NetworkModel::backward
    pub fn forward(&self, input: &Volume) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (layer, p) in self.layers.iter().zip(&self.params) {
            let (next, extra) = match *layer {
                LayerSpec::Conv { .. } => {
                    let g = layer.conv_geometry(x.channels).unwrap();
                    (layers::conv_forward(&x, &p.weights, &p.bias, &g)?, Aux::None)
                }
                LayerSpec::MaxPool { window, stride } => {
                    let (out, arg) = layers::maxpool_forward(&x, window, stride)?;
                    (out, Aux::Argmax(arg))
                }
                LayerSpec::Relu => (layers::relu(&x), Aux::None),
                LayerSpec::Lrn { .. } => {
                    let (out, scale) = layers::lrn_forward(&x, &layer.lrn_params().unwrap())?;
                    (out, Aux::Scale(scale))
                }
                LayerSpec::InnerProduct { outputs } => {
                    let logits = layers::inner_product_forward(&x, &p.weights, &p.bias)?;
                    (Volume::from_vec(outputs, 1, 1, logits)?, Aux::None)
                }
                LayerSpec::Softmax => (Volume::from_vec(x.channels, 1, 1, layers::softmax(&x.data))?, Aux::None),
            };
            inputs.push(x);
            aux.push(extra);
            x = next;
        }
        Ok(ForwardCache {
            inputs,
            aux,
            probs: x.data,
        })
    }

    /// Class probabilities `[p(non-salient), p(salient)]`.
    pub fn probabilities(&self, input: &Volume) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.probs)
    }

    /// Softmax probability of the salient class for one patch.
    pub fn predict_patch(&self, patch: &PlaneStack) -> Result<f64> {
        Ok(self.probabilities(&Volume::from(patch))?[1])
    }

    /// Gradient of `loss_scale · CE(softmax, label)` with respect to every
    /// parameter (accumulated into `grads`) and to the input (returned).
    pub fn backward(&self, cache: &ForwardCache, label: usize, loss_scale: f64, grads: &mut Gradients) -> Volume {
        // softmax + cross-entropy: d/dlogits = p - onehot
        let mut delta: Vec<f64> = cache.probs.clone();
        delta[label] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= loss_scale);
        let mut g = Volume::from_vec(delta.len(), 1, 1, delta).unwrap();

        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let p = &self.params[i];
            g = match (&self.layers[i], &cache.aux[i]) {
                (LayerSpec::Softmax, _) => g,
                (LayerSpec::InnerProduct { .. }, _) => {
                    let gp = &mut grads[i];
                    layers::inner_product_backward(x, &p.weights, &g.data, &mut gp.weights, &mut gp.bias)
                }
                (LayerSpec::Conv { .. }, _) => {
                    let geom: ConvGeometry = self.layers[i].conv_geometry(x.channels).unwrap();
                    let gp = &mut grads[i];
                    layers::conv_backward(x, &p.weights, &geom, &g, &mut gp.weights, &mut gp.bias)
                }
                (LayerSpec::MaxPool { .. }, Aux::Argmax(arg)) => layers::maxpool_backward(x.shape(), arg, &g),
                (LayerSpec::Relu, _) => layers::relu_backward(x, &g),
                (LayerSpec::Lrn { .. }, Aux::Scale(scale)) => {
                    let lp: LrnParams = self.layers[i].lrn_params().unwrap();
                    layers::lrn_backward(x, scale, &lp, &g)
                }
                _ => unreachable!("cache entry does not match layer kind"),
            };
        }
        g
    }

    /// Mean cross-entropy and its parameter gradient over a batch, scaled by
    /// `loss_scale`.
    ///
    /// Samples are processed in parallel in fixed-size chunks whose partial
    /// sums are combined in order, so the result does not depend on the
    /// number of worker threads.
    pub fn batch_gradients(&self, batch: &[&Sample], loss_scale: f64) -> Result<(f64, Gradients)> {
        const CHUNK: usize = 4;
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = batch.len() as f64;
        let partials: Vec<(f64, Gradients)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = self.zero_gradients();
                let mut loss = 0.0;
                for s in chunk {
                    let cache = self.forward(&s.input)?;
                    loss += layers::cross_entropy(&cache.probs, s.label);
                    self.backward(&cache, s.label, loss_scale / n, &mut grads);
                }
                Ok((loss, grads))
            })
            .collect::<Result<_>>()?;
        let mut iter = partials.into_iter();
        let (mut loss, mut total) = iter.next().unwrap();
        for (l, g) in iter {
            loss += l;
            for (acc, part) in total.iter_mut().zip(g) {
                acc.weights.iter_mut().zip(part.weights).for_each(|(a, b)| *a += b);
                acc.bias.iter_mut().zip(part.bias).for_each(|(a, b)| *a += b);
            }
        }
        Ok((loss_scale * loss / n, total))
    }

    /// Mean cross-entropy over a batch (no gradients).
    pub fn loss(&self, batch: &[&Sample]) -> Result<f64> {
        let losses: Vec<f64> = batch
            .par_iter()
            .map(|s| Ok(layers::cross_entropy(&self.probabilities(&s.input)?, s.label)))
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / batch.len() as f64)
    }

    /// Fraction of samples whose arg-max class matches the label.
    pub fn accuracy(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("accuracy over an empty set".into()));
        }
        let hits: Vec<bool> = samples
            .par_iter()
            .map(|s| {
                let p = self.probabilities(&s.input)?;
                let predicted = usize::from(p[1] > p[0]);
                Ok(predicted == s.label)
            })
            .collect::<Result<_>>()?;
        Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
    }
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Argmax(Vec<usize>),
    Scale(Vec<f64>),
}

/// Per-layer inputs and auxiliaries from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Volume>,
    aux: Vec<Aux>,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// One labelled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Volume,
    pub label: usize,
}

impl Sample {
    pub fn new(input: Volume, label: usize) -> Self {
        Sample { input, label }
    }
}

impl From<&crate::sampler::PatchRecord> for Sample {
    fn from(r: &crate::sampler::PatchRecord) -> Self {
        Sample {
            input: Volume::from(&r.data),
            label: usize::from(r.label),
        }
    }
}
