//! Feature extractor plus classifier head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::heads::{Head, HeadKind, IsoMaxHead, SoftMaxHead};
use crate::nn::FeatureExtractor;
use crate::optim::ParamSlot;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub extractor: FeatureExtractor,
    pub head: Head,
}

impl Model {
    pub fn new(extractor: FeatureExtractor, head: Head) -> Result<Self> {
        if extractor.feature_dim() != head.feature_dim() {
            return Err(Error::Dimension(format!(
                "extractor emits {} features, head expects {}",
                extractor.feature_dim(),
                head.feature_dim()
            )));
        }
        Ok(Model { extractor, head })
    }

    /// Random extractor over `[in_dim, hidden.., feature_dim]`; SoftMax heads are
    /// drawn like dense layers, IsoMax prototypes start at zero.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        num_classes: usize,
        head: HeadKind,
        entropic_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![in_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(feature_dim);
        let extractor = FeatureExtractor::random(&sizes, rng)?;
        let head = match head {
            HeadKind::SoftMax => Head::SoftMax(SoftMaxHead::random(feature_dim, num_classes, rng)),
            HeadKind::IsoMax => {
                Head::IsoMax(IsoMaxHead::new(feature_dim, num_classes, entropic_scale)?)
            }
        };
        Model::new(extractor, head)
    }

    pub fn in_dim(&self) -> usize {
        self.extractor.in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn features(&self, inputs: &Tensor) -> Result<Tensor> {
        self.extractor.infer(inputs)
    }

    /// Inference probabilities.
    pub fn probabilities(&self, inputs: &Tensor) -> Result<Tensor> {
        self.head.probabilities(&self.features(inputs)?)
    }

    pub fn training_probabilities(&self, inputs: &Tensor) -> Result<Tensor> {
        self.head.training_probabilities(&self.features(inputs)?)
    }

    pub fn predict(&self, inputs: &Tensor) -> Result<Vec<usize>> {
        self.head.predict(&self.features(inputs)?)
    }

    /// Optimizer slots: layer weights (decayed), layer biases, then the head.
    pub fn param_slots<'a>(
        &'a mut self,
        layer_grads: &'a [crate::nn::LayerGrads],
        head_grads: &'a [Tensor],
    ) -> Vec<ParamSlot<'a>> {
        let mut slots = Vec::new();
        for (layer, g) in self.extractor.layers_mut().iter_mut().zip(layer_grads) {
            slots.push(ParamSlot {
                value: layer.weights.data_mut(),
                grad: g.weights.data(),
                decay: true,
            });
            slots.push(ParamSlot {
                value: layer.bias.data_mut(),
                grad: g.bias.data(),
                decay: false,
            });
        }
        slots.extend(self.head.param_slots(head_grads));
        slots
    }
}
