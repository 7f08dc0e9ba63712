//! A small fully-connected feature extractor with hand-written backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation {other:?}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation. ReLU passes gradient only
    /// where the pre-activation is strictly positive.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out_dim × in_dim]`
    pub weights: Tensor,
    /// `[out_dim]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "layer weights must be a matrix, got shape {:?}",
                weights.shape()
            )));
        }
        if bias.shape() != [weights.rows()] {
            return Err(Error::Dimension(format!(
                "bias shape {:?} does not match {} outputs",
                bias.shape(),
                weights.rows()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform initialization in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]` for weights and bias.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
        let weights =
            Tensor::new(vec![out_dim, in_dim], draw(out_dim * in_dim)).expect("consistent shape");
        let bias = Tensor::new(vec![out_dim], draw(out_dim)).expect("consistent shape");
        DenseLayer {
            weights,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn pre_activation(&self, inputs: &Tensor) -> Tensor {
        let (batch, out_dim) = (inputs.rows(), self.out_dim());
        let bias = self.bias.data();
        let mut out = Vec::with_capacity(batch * out_dim);
        for x in inputs.row_iter() {
            for (o, b) in bias.iter().enumerate() {
                out.push(dot(self.weights.row(o), x) + b);
            }
        }
        Tensor::new(vec![batch, out_dim], out).expect("consistent shape")
    }

    fn activate(&self, pre: &Tensor) -> Tensor {
        let data = pre
            .data()
            .iter()
            .map(|&v| self.activation.apply(v))
            .collect();
        Tensor::new(pre.shape().to_vec(), data).expect("consistent shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorGrads {
    /// One entry per layer, in forward order.
    pub layers: Vec<LayerGrads>,
    pub inputs: Tensor,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Tensor,
    pre: Tensor,
}

/// Chain of dense layers mapping `[B × in_dim]` inputs to `[B × feature_dim]` features.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    layers: Vec<DenseLayer>,
    cache: Option<Vec<LayerCache>>,
}

impl PartialEq for FeatureExtractor {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl FeatureExtractor {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("feature extractor needs a layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(FeatureExtractor {
            layers,
            cache: None,
        })
    }

    /// Random MLP over `sizes = [in_dim, hidden.., feature_dim]`: ReLU on hidden
    /// layers, identity on the output layer.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Validation(format!(
                "layer sizes {sizes:?} need at least two positive entries"
            )));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                DenseLayer::random(w[0], w[1], act, rng)
            })
            .collect();
        FeatureExtractor::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in_dim, hidden.., feature_dim]`
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    fn check_inputs(&self, inputs: &Tensor) -> Result<()> {
        if inputs.shape().len() != 2 || inputs.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "expected [B × {}] inputs, got {:?}",
                self.in_dim(),
                inputs.shape()
            )));
        }
        if !inputs.is_finite() {
            return Err(Error::NonFinite("feature extractor input".into()));
        }
        Ok(())
    }

    /// Forward pass that keeps per-layer activations for [`backward`](Self::backward).
    pub fn forward(&mut self, inputs: &Tensor) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for layer in &self.layers {
            let pre = layer.pre_activation(&x);
            let out = layer.activate(&pre);
            cache.push(LayerCache { input: x, pre });
            x = out;
        }
        self.cache = Some(cache);
        Ok(x)
    }

    /// Forward pass without caching; parameters are only read.
    pub fn infer(&self, inputs: &Tensor) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        let mut x = inputs.clone();
        for layer in &self.layers {
            x = layer.activate(&layer.pre_activation(&x));
        }
        Ok(x)
    }

    /// Gradients of a scalar objective given its gradient with respect to the
    /// features of the last cached forward pass.
    pub fn backward(&self, grad_features: &Tensor) -> Result<ExtractorGrads> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let batch = cache[0].input.rows();
        if grad_features.shape() != [batch, self.feature_dim()] {
            return Err(Error::Dimension(format!(
                "feature gradient {:?} does not match cached batch [{batch} × {}]",
                grad_features.shape(),
                self.feature_dim()
            )));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_features.clone();
        for (layer, cached) in self.layers.iter().zip(cache).rev() {
            let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
            // dL/dpre = upstream ⊙ act'(pre)
            let delta: Vec<f64> = upstream
                .data()
                .iter()
                .zip(cached.pre.data())
                .map(|(g, &p)| g * layer.activation.derivative(p))
                .collect();

            let mut gw = vec![0.0; out_dim * in_dim];
            let mut gb = vec![0.0; out_dim];
            let mut gx = vec![0.0; batch * in_dim];
            for b in 0..batch {
                let x = cached.input.row(b);
                let d = &delta[b * out_dim..(b + 1) * out_dim];
                let gx_row = &mut gx[b * in_dim..(b + 1) * in_dim];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    let w = layer.weights.row(o);
                    let gw_row = &mut gw[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        gw_row[i] += dv * x[i];
                        gx_row[i] += dv * w[i];
                    }
                }
            }
            grads.push(LayerGrads {
                weights: Tensor::new(vec![out_dim, in_dim], gw)?,
                bias: Tensor::new(vec![out_dim], gb)?,
            });
            upstream = Tensor::new(vec![batch, in_dim], gx)?;
        }
        grads.reverse();
        Ok(ExtractorGrads {
            layers: grads,
            inputs: upstream,
        })
    }
}
