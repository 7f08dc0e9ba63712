//! Classifier heads: the affine SoftMax head and the distance-based IsoMax head.
//!
//! Both heads map a `[B × F]` feature batch to `C` class logits. The IsoMax
//! head uses `-E_s · ‖f − p_j‖` as logits while training and `-‖f − p_j‖`
//! (scale removed) at inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseLayer;
use crate::optim::ParamSlot;
use crate::tensor::Tensor;

/// Added under the square root so the distance is differentiable at `f = p`.
pub const DISTANCE_EPSILON: f64 = 1e-12;

/// Default entropic scale.
pub const DEFAULT_ENTROPIC_SCALE: f64 = 10.0;

/// How the cross-entropy is formed from logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogMode {
    /// Normalize to probabilities first, then take `ln` as a separate step.
    Sequential,
    /// Log-sum-exp log-softmax.
    Fused,
}

impl LogMode {
    pub fn name(self) -> &'static str {
        match self {
            LogMode::Sequential => "sequential",
            LogMode::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(LogMode::Sequential),
            "fused" => Ok(LogMode::Fused),
            other => Err(Error::Format(format!("unknown log mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    /// Batch-mean cross-entropy, in nats.
    pub loss: f64,
    /// Training-time probabilities `[B × C]`.
    pub probabilities: Tensor,
    pub grad_features: Tensor,
    /// Same order and shapes as the head's parameters.
    pub grad_params: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftMaxHead {
    /// `[C × F]`
    pub weights: Tensor,
    /// `[C]`
    pub biases: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoMaxHead {
    /// `[C × F]`
    pub prototypes: Tensor,
    pub entropic_scale: f64,
}

fn check_targets(targets: &[usize], batch: usize, classes: usize) -> Result<()> {
    if targets.len() != batch {
        return Err(Error::Dimension(format!(
            "{} targets for a batch of {batch}",
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::Index {
            index: t,
            bound: classes,
        });
    }
    Ok(())
}

fn check_features(features: &Tensor, feature_dim: usize) -> Result<()> {
    if features.shape().len() != 2 || features.cols() != feature_dim {
        return Err(Error::Dimension(format!(
            "expected [B × {feature_dim}] features, got {:?}",
            features.shape()
        )));
    }
    Ok(())
}

/// Max-subtracted softmax of one row of logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln Σ exp(z)` computed around the maximum.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of one row against `target`, plus the probabilities and
/// `dL/dlogits = p − onehot(target)`.
fn cross_entropy_row(logits: &[f64], target: usize, mode: LogMode) -> (f64, Vec<f64>, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let loss = match mode {
        // -ln p_k taken as ln(Σe / e_k): the normalized ratio first, then a
        // separate logarithm. Uniform rows give exactly ln C.
        LogMode::Sequential => (sum / exps[target]).ln(),
        LogMode::Fused => log_sum_exp(logits) - logits[target],
    };
    let mut grad = probs.clone();
    grad[target] -= 1.0;
    (loss, probs, grad)
}

impl SoftMaxHead {
    pub fn new(weights: Tensor, biases: Tensor) -> Result<Self> {
        if weights.shape().len() != 2 || biases.shape() != [weights.rows()] {
            return Err(Error::Dimension(format!(
                "weights {:?} and biases {:?} disagree",
                weights.shape(),
                biases.shape()
            )));
        }
        Ok(SoftMaxHead { weights, biases })
    }

    /// Same uniform initialization as a dense layer.
    pub fn random<R: Rng + ?Sized>(feature_dim: usize, num_classes: usize, rng: &mut R) -> Self {
        let layer = DenseLayer::random(
            feature_dim,
            num_classes,
            crate::nn::Activation::Identity,
            rng,
        );
        SoftMaxHead {
            weights: layer.weights,
            biases: layer.bias,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `w_jᵀ f + b_j` for every row.
    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        check_features(features, self.feature_dim())?;
        let mut z = features.matmul_transposed(&self.weights)?;
        let c = self.num_classes();
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v += self.biases.data()[i % c];
        }
        Ok(z)
    }

    pub fn loss(&self, features: &Tensor, targets: &[usize]) -> Result<LossResult> {
        self.loss_with(features, targets, LogMode::Fused)
    }

    pub fn loss_with(
        &self,
        features: &Tensor,
        targets: &[usize],
        mode: LogMode,
    ) -> Result<LossResult> {
        let logits = self.logits(features)?;
        let (batch, c, f) = (features.rows(), self.num_classes(), self.feature_dim());
        check_targets(targets, batch, c)?;
        let scale = 1.0 / batch as f64;

        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(batch * c);
        let mut gf = vec![0.0; batch * f];
        let mut gw = vec![0.0; c * f];
        let mut gb = vec![0.0; c];
        for (i, &t) in targets.iter().enumerate() {
            let (l, p, dz) = cross_entropy_row(logits.row(i), t, mode);
            // Running mean: exact when every row has the same loss.
            loss += (l - loss) / (i + 1) as f64;
            probs.extend_from_slice(&p);
            let x = features.row(i);
            for (j, &g) in dz.iter().enumerate() {
                let g = g * scale;
                gb[j] += g;
                let w = self.weights.row(j);
                for d in 0..f {
                    gw[j * f + d] += g * x[d];
                    gf[i * f + d] += g * w[d];
                }
            }
        }
        Ok(LossResult {
            loss,
            probabilities: Tensor::new(vec![batch, c], probs)?,
            grad_features: Tensor::new(vec![batch, f], gf)?,
            grad_params: vec![Tensor::new(vec![c, f], gw)?, Tensor::new(vec![c], gb)?],
        })
    }

    pub fn probabilities(&self, features: &Tensor) -> Result<Tensor> {
        let logits = self.logits(features)?;
        let data = logits.row_iter().flat_map(softmax).collect();
        Tensor::new(logits.shape().to_vec(), data)
    }
}

impl IsoMaxHead {
    /// All prototypes start at the origin.
    pub fn new(feature_dim: usize, num_classes: usize, entropic_scale: f64) -> Result<Self> {
        IsoMaxHead::with_prototypes(
            Tensor::zeros(vec![num_classes, feature_dim]),
            entropic_scale,
        )
    }

    pub fn with_prototypes(prototypes: Tensor, entropic_scale: f64) -> Result<Self> {
        if prototypes.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "prototypes must be [C × F], got {:?}",
                prototypes.shape()
            )));
        }
        if !(entropic_scale > 0.0 && entropic_scale.is_finite()) {
            return Err(Error::Validation(format!(
                "entropic scale must be positive, got {entropic_scale}"
            )));
        }
        Ok(IsoMaxHead {
            prototypes,
            entropic_scale,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.prototypes.cols()
    }

    /// `d_ij = sqrt(Σ_d (f_id − p_jd)² + ε)`
    pub fn distances(&self, features: &Tensor) -> Result<Tensor> {
        check_features(features, self.feature_dim())?;
        let c = self.num_classes();
        let mut out = Vec::with_capacity(features.rows() * c);
        for f in features.row_iter() {
            for j in 0..c {
                out.push(stabilized_distance(f, self.prototypes.row(j)));
            }
        }
        Tensor::new(vec![features.rows(), c], out)
    }

    /// Training loss with the entropic scale, computed sequentially.
    pub fn loss(&self, features: &Tensor, targets: &[usize]) -> Result<LossResult> {
        self.loss_with(features, targets, LogMode::Sequential)
    }

    pub fn loss_with(
        &self,
        features: &Tensor,
        targets: &[usize],
        mode: LogMode,
    ) -> Result<LossResult> {
        let dist = self.distances(features)?;
        let (batch, c, f) = (features.rows(), self.num_classes(), self.feature_dim());
        check_targets(targets, batch, c)?;
        let scale = 1.0 / batch as f64;
        let es = self.entropic_scale;

        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(batch * c);
        let mut gf = vec![0.0; batch * f];
        let mut gp = vec![0.0; c * f];
        for (i, &t) in targets.iter().enumerate() {
            let d = dist.row(i);
            let logits: Vec<f64> = d.iter().map(|&dj| -es * dj).collect();
            let (l, p, dz) = cross_entropy_row(&logits, t, mode);
            loss += (l - loss) / (i + 1) as f64;
            probs.extend_from_slice(&p);
            let x = features.row(i);
            for j in 0..c {
                // dL/dd_j = -E_s · dL/dz_j; dd_j/df = (f − p_j)/d_j
                let coef = -es * dz[j] * scale / d[j];
                let proto = self.prototypes.row(j);
                for k in 0..f {
                    let diff = coef * (x[k] - proto[k]);
                    gf[i * f + k] += diff;
                    gp[j * f + k] -= diff;
                }
            }
        }
        Ok(LossResult {
            loss,
            probabilities: Tensor::new(vec![batch, c], probs)?,
            grad_features: Tensor::new(vec![batch, f], gf)?,
            grad_params: vec![Tensor::new(vec![c, f], gp)?],
        })
    }

    /// Softmax over `-E_s · d` (the probabilities the loss is trained on).
    pub fn training_probabilities(&self, features: &Tensor) -> Result<Tensor> {
        self.scaled_probabilities(features, self.entropic_scale)
    }

    /// Inference probabilities: softmax over `-d`, entropic scale removed.
    pub fn probabilities(&self, features: &Tensor) -> Result<Tensor> {
        self.scaled_probabilities(features, 1.0)
    }

    fn scaled_probabilities(&self, features: &Tensor, scale: f64) -> Result<Tensor> {
        let dist = self.distances(features)?;
        let data = dist
            .row_iter()
            .flat_map(|d| softmax(&d.iter().map(|&v| -scale * v).collect::<Vec<_>>()))
            .collect();
        Tensor::new(dist.shape().to_vec(), data)
    }

    /// Index of the nearest prototype for every row; lowest index wins ties.
    pub fn nearest_prototype(&self, features: &Tensor) -> Result<Vec<usize>> {
        let dist = self.distances(features)?;
        Ok(dist
            .row_iter()
            .map(|d| {
                let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                argmax(&neg)
            })
            .collect())
    }
}

fn stabilized_distance(f: &[f64], p: &[f64]) -> f64 {
    let sq: f64 = f.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq + DISTANCE_EPSILON).sqrt()
}

/// Either classifier head behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    SoftMax(SoftMaxHead),
    IsoMax(IsoMaxHead),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    SoftMax,
    IsoMax,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::SoftMax => "softmax",
            HeadKind::IsoMax => "isomax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(HeadKind::SoftMax),
            "isomax" => Ok(HeadKind::IsoMax),
            other => Err(Error::Format(format!(
                "unknown head {other:?} (expected softmax or isomax)"
            ))),
        }
    }
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::SoftMax(_) => HeadKind::SoftMax,
            Head::IsoMax(_) => HeadKind::IsoMax,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Head::SoftMax(h) => h.num_classes(),
            Head::IsoMax(h) => h.num_classes(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Head::SoftMax(h) => h.feature_dim(),
            Head::IsoMax(h) => h.feature_dim(),
        }
    }

    /// Entropic scale of an IsoMax head; `None` for SoftMax.
    pub fn entropic_scale(&self) -> Option<f64> {
        match self {
            Head::SoftMax(_) => None,
            Head::IsoMax(h) => Some(h.entropic_scale),
        }
    }

    pub fn loss(&self, features: &Tensor, targets: &[usize], mode: LogMode) -> Result<LossResult> {
        match self {
            Head::SoftMax(h) => h.loss_with(features, targets, mode),
            Head::IsoMax(h) => h.loss_with(features, targets, mode),
        }
    }

    /// Inference probabilities (for IsoMax, with the entropic scale removed).
    pub fn probabilities(&self, features: &Tensor) -> Result<Tensor> {
        match self {
            Head::SoftMax(h) => h.probabilities(features),
            Head::IsoMax(h) => h.probabilities(features),
        }
    }

    /// Probabilities the training loss sees.
    pub fn training_probabilities(&self, features: &Tensor) -> Result<Tensor> {
        match self {
            Head::SoftMax(h) => h.probabilities(features),
            Head::IsoMax(h) => h.training_probabilities(features),
        }
    }

    /// Argmax of the inference probabilities, lowest index on ties.
    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        Ok(self
            .probabilities(features)?
            .row_iter()
            .map(argmax)
            .collect())
    }

    /// Named parameter tensors in gradient order.
    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Head::SoftMax(h) => vec![("weights", &h.weights), ("biases", &h.biases)],
            Head::IsoMax(h) => vec![("prototypes", &h.prototypes)],
        }
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Head::SoftMax(h) => vec![("weights", &mut h.weights), ("biases", &mut h.biases)],
            Head::IsoMax(h) => vec![("prototypes", &mut h.prototypes)],
        }
    }

    /// Optimizer slots; prototypes decay like weights, SoftMax biases do not.
    pub fn param_slots<'a>(&'a mut self, grads: &'a [Tensor]) -> Vec<ParamSlot<'a>> {
        match self {
            Head::SoftMax(h) => vec![
                ParamSlot {
                    value: h.weights.data_mut(),
                    grad: grads[0].data(),
                    decay: true,
                },
                ParamSlot {
                    value: h.biases.data_mut(),
                    grad: grads[1].data(),
                    decay: false,
                },
            ],
            Head::IsoMax(h) => vec![ParamSlot {
                value: h.prototypes.data_mut(),
                grad: grads[0].data(),
                decay: true,
            }],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}
