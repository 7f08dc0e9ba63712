//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Everything here is plain Rust on native targets, so the same functions are
//! unit-tested without a browser.

use isomax::data::BlobSpec;
use isomax::experiment::{self, BlobData, DataSpec, ExperimentConfig, ExperimentData};
use isomax::heads::{softmax, HeadKind, IsoMaxHead, SoftMaxHead};
use isomax::metrics::{roc_curve, samples_from_scores};
use isomax::scores::{entropy, ScoreKind};
use isomax::{Model, Tensor};
use wasm_bindgen::prelude::*;

fn js_err(e: isomax::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn grid(x_min: f64, x_max: f64, y_min: f64, y_max: f64, n: usize) -> Result<Tensor, isomax::Error> {
    let n = n.max(2);
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut data = Vec::with_capacity(n * n * 2);
    // Row-major image order: top row first.
    for r in 0..n {
        let y = step(y_max, y_min, r);
        for c in 0..n {
            data.push(step(x_min, x_max, c));
            data.push(y);
        }
    }
    Tensor::new(vec![n * n, 2], data)
}

fn score_rows(probs: &Tensor, score: &str) -> Result<Vec<f64>, isomax::Error> {
    let kind = ScoreKind::parse(score)?;
    probs.row_iter().map(|p| kind.score(p)).collect()
}

/// Entropy (nats) of `softmax(-scale · d)` for every scale.
#[wasm_bindgen]
pub fn entropy_curve(distances: &[f64], scales: &[f64]) -> Vec<f64> {
    scales
        .iter()
        .map(|&s| {
            let logits: Vec<f64> = distances.iter().map(|&d| -s * d).collect();
            entropy(&softmax(&logits))
        })
        .collect()
}

/// Score of the IsoMax inference probabilities over an `n × n` grid of 2-D
/// features. `prototypes` is row-major `[C × 2]`.
#[wasm_bindgen]
pub fn isomax_score_field(
    prototypes: &[f64],
    score: &str,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsValue> {
    let c = prototypes.len() / 2;
    let head = Tensor::new(vec![c, 2], prototypes.to_vec())
        .and_then(|p| IsoMaxHead::with_prototypes(p, 1.0))
        .map_err(js_err)?;
    let pts = grid(x_min, x_max, y_min, y_max, n).map_err(js_err)?;
    head.probabilities(&pts)
        .and_then(|p| score_rows(&p, score))
        .map_err(js_err)
}

/// Same field for an affine SoftMax head: `weights` is `[C × 2]`, `biases` `[C]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn softmax_score_field(
    weights: &[f64],
    biases: &[f64],
    score: &str,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsValue> {
    let c = biases.len();
    let head = Tensor::new(vec![c, 2], weights.to_vec())
        .and_then(|w| SoftMaxHead::new(w, Tensor::new(vec![c], biases.to_vec())?))
        .map_err(js_err)?;
    let pts = grid(x_min, x_max, y_min, y_max, n).map_err(js_err)?;
    head.probabilities(&pts)
        .and_then(|p| score_rows(&p, score))
        .map_err(js_err)
}

/// A SoftMax and an IsoMax model trained on the same 2-D blobs.
#[wasm_bindgen]
pub struct DemoRun {
    data: ExperimentData,
    softmax: Model,
    isomax: Model,
}

#[wasm_bindgen]
impl DemoRun {
    /// Trains both heads on 4 blobs with a ring of radius 12 as OOD data.
    #[wasm_bindgen(constructor)]
    pub fn new(
        seed: u32,
        entropic_scale: f64,
        epochs: usize,
        sigma: f64,
    ) -> Result<DemoRun, JsValue> {
        let epochs = epochs.max(1);
        let decay: Vec<usize> = [0.5, 2.0 / 3.0, 5.0 / 6.0]
            .iter()
            .map(|f| ((epochs as f64) * f).round() as usize)
            .filter(|&e| e > 0)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut base = ExperimentConfig {
            data: DataSpec::Blobs(BlobData {
                blobs: BlobSpec {
                    cluster_sigma: sigma,
                    samples_per_class: 250,
                    ..BlobSpec::default()
                },
                ring_radii: vec![12.0],
            }),
            hidden: vec![32, 32],
            feature_dim: 8,
            epochs,
            seed: u64::from(seed),
            entropic_scale,
            ..ExperimentConfig::default()
        };
        base.sgd.decay_epochs = decay;
        let data = experiment::load_data(&base).map_err(js_err)?;
        let iso_cfg = ExperimentConfig {
            head: HeadKind::IsoMax,
            ..base.clone()
        };
        let sm_cfg = ExperimentConfig {
            head: HeadKind::SoftMax,
            ..base
        };
        let (isomax, _) = experiment::fit(&iso_cfg, &data).map_err(js_err)?;
        let (softmax, _) = experiment::fit(&sm_cfg, &data).map_err(js_err)?;
        Ok(DemoRun {
            data,
            softmax,
            isomax,
        })
    }

    fn model(&self, head: &str) -> Result<&Model, JsValue> {
        match HeadKind::parse(head).map_err(js_err)? {
            HeadKind::SoftMax => Ok(&self.softmax),
            HeadKind::IsoMax => Ok(&self.isomax),
        }
    }

    /// Flattened `[x, y, label]` triples of the training set.
    pub fn train_points(&self) -> Vec<f64> {
        points(&self.data.train.inputs, &self.data.train.labels)
    }

    /// Flattened `[x, y]` pairs of the ring OOD set.
    pub fn ood_points(&self) -> Vec<f64> {
        self.data.ood[0].inputs.data().to_vec()
    }

    /// Detection score over an `n × n` grid of inputs, top row first.
    #[allow(clippy::too_many_arguments)]
    pub fn score_grid(
        &self,
        head: &str,
        score: &str,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        n: usize,
    ) -> Result<Vec<f64>, JsValue> {
        let model = self.model(head)?;
        let pts = grid(x_min, x_max, y_min, y_max, n).map_err(js_err)?;
        model
            .probabilities(&pts)
            .and_then(|p| score_rows(&p, score))
            .map_err(js_err)
    }

    /// ROC curve against the ring, flattened `[fpr, tpr]` pairs.
    pub fn roc(&self, head: &str, score: &str) -> Result<Vec<f64>, JsValue> {
        let samples = self.samples(head, score)?;
        let curve = roc_curve(&samples).map_err(js_err)?;
        Ok(curve.points.iter().flat_map(|p| [p.fpr, p.tpr]).collect())
    }

    /// `[tnr_at_tpr95, auroc, dtacc, test_accuracy]`
    pub fn metrics(&self, head: &str, score: &str) -> Result<Vec<f64>, JsValue> {
        let model = self.model(head)?;
        let kind = ScoreKind::parse(score).map_err(js_err)?;
        let eval =
            experiment::evaluate(model, &self.data.test, &self.data.ood, kind).map_err(js_err)?;
        let r = eval.reports[0].report;
        Ok(vec![r.tnr_at_tpr95, r.auroc, r.dtacc, eval.test_accuracy])
    }
}

impl DemoRun {
    fn samples(&self, head: &str, score: &str) -> Result<Vec<isomax::ScoredSample>, JsValue> {
        let model = self.model(head)?;
        let kind = ScoreKind::parse(score).map_err(js_err)?;
        let ins = experiment::score_inputs(model, &self.data.test.inputs, kind).map_err(js_err)?;
        let outs =
            experiment::score_inputs(model, &self.data.ood[0].inputs, kind).map_err(js_err)?;
        Ok(samples_from_scores(&ins, &outs))
    }
}

fn points(inputs: &Tensor, labels: &[usize]) -> Vec<f64> {
    inputs
        .row_iter()
        .zip(labels)
        .flat_map(|(x, &l)| [x[0], x[1], l as f64])
        .collect()
}
