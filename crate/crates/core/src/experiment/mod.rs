//! Training runs, evaluation, the entropic-scale sweep, and reports.

pub mod checkpoint;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    compose_test_set, generate_blobs, generate_ood_ring, load_idx, BlobSpec, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::metrics::{detection_report, DetectionReport, ScoredSample};
use crate::model::Model;
use crate::optim::Sgd;
use crate::scores::{mean_entropy, ScoreKind};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{BlobData, DataSpec, ExperimentConfig, IdxData};
pub use report::{
    read_records, write_curves_csv, write_metrics_csv, write_report, write_sweep_csv,
};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const RECORD_FILE: &str = "record.json";

/// Offset between the experiment seed and the model/shuffle stream.
const MODEL_SEED_OFFSET: u64 = 0x5eed_0000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub ood: Vec<LabeledDataset>,
}

impl ExperimentData {
    pub fn in_dim(&self) -> usize {
        self.train.in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes
    }
}

/// Blob train/test draws use `seed` and `seed + 1`; ring `k` uses `seed + 2 + k`.
pub fn blob_data(blob: &BlobData, seed: u64) -> Result<ExperimentData> {
    let with_seed = |s: u64| BlobSpec {
        seed: s,
        ..blob.blobs.clone()
    };
    let train = generate_blobs(&with_seed(seed))?;
    let test = generate_blobs(&with_seed(seed.wrapping_add(1)))?;
    let ood = blob
        .ring_radii
        .iter()
        .enumerate()
        .map(|(k, &r)| generate_ood_ring(&with_seed(seed.wrapping_add(2 + k as u64)), r))
        .collect::<Result<_>>()?;
    Ok(ExperimentData { train, test, ood })
}

/// Drops held-out classes and renumbers the rest to `0..C`.
fn remap_classes(
    ds: &LabeledDataset,
    map: &[Option<usize>],
    classes: usize,
) -> Result<LabeledDataset> {
    let kept = ds.filter_labels(|l| map.get(l).copied().flatten().is_some())?;
    let labels = kept.labels.iter().map(|&l| map[l].expect("kept")).collect();
    LabeledDataset::new(kept.inputs, labels, classes, kept.name)
}

pub fn idx_data(idx: &IdxData) -> Result<ExperimentData> {
    let train = load_idx(&idx.train_images, &idx.train_labels)?;
    let test = load_idx(&idx.test_images, &idx.test_labels)?;
    if train.in_dim() != test.in_dim() {
        return Err(Error::Validation(format!(
            "train images have {} pixels, test images {}",
            train.in_dim(),
            test.in_dim()
        )));
    }
    let total = train.num_classes.max(test.num_classes);
    let mut map = vec![None; total];
    let mut next = 0;
    for (c, slot) in map.iter_mut().enumerate() {
        if !idx.holdout_classes.contains(&c) {
            *slot = Some(next);
            next += 1;
        }
    }
    if next < 2 {
        return Err(Error::Validation(
            "fewer than two in-distribution classes remain".into(),
        ));
    }
    let mut ood = Vec::new();
    if !idx.holdout_classes.is_empty() {
        let mut held = test.filter_labels(|l| idx.holdout_classes.contains(&l))?;
        held.labels.iter_mut().for_each(|l| *l = 0);
        held.name = "holdout".into();
        ood.push(held);
    }
    if let (Some(images), Some(labels)) = (&idx.ood_images, &idx.ood_labels) {
        ood.push(load_idx(images, labels)?);
    }
    Ok(ExperimentData {
        train: remap_classes(&train, &map, next)?,
        test: remap_classes(&test, &map, next)?,
        ood,
    })
}

pub fn load_data(config: &ExperimentConfig) -> Result<ExperimentData> {
    match &config.data {
        DataSpec::Blobs(b) => blob_data(b, config.seed),
        DataSpec::Idx(idx) => idx_data(idx),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Mean entropy of the training-time probabilities on the training set.
    pub train_entropy: f64,
    /// Mean entropy of the inference probabilities on the training set.
    pub inference_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub epochs: Vec<EpochStats>,
    /// Loss of the very first minibatch, before any update.
    pub first_batch_loss: f64,
}

/// Accuracy of `model` on a labeled set.
pub fn accuracy(model: &Model, data: &LabeledDataset) -> Result<f64> {
    let pred = model.predict(&data.inputs)?;
    let hits = pred
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

pub fn init_model(config: &ExperimentConfig, in_dim: usize, num_classes: usize) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(MODEL_SEED_OFFSET));
    Model::random(
        in_dim,
        &config.hidden,
        config.feature_dim,
        num_classes,
        config.head,
        config.entropic_scale,
        &mut rng,
    )
}

/// Minibatch SGD over `data.train`. Single-threaded and deterministic in the seed.
pub fn fit(config: &ExperimentConfig, data: &ExperimentData) -> Result<(Model, FitOutcome)> {
    config.validate()?;
    let mut model = init_model(config, data.in_dim(), data.num_classes())?;
    // Shuffling uses its own stream so the model draw matches across heads.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(MODEL_SEED_OFFSET + 1));
    let mut sgd = Sgd::new(config.sgd.clone())?;
    let mode = config.log_mode();
    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut first_batch_loss = None;
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.sgd.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let inputs = data.train.inputs.select_rows(batch)?;
            let targets: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
            let features = model.extractor.forward(&inputs)?;
            let out = model.head.loss(&features, &targets, mode)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {b}",
                    out.loss
                )));
            }
            first_batch_loss.get_or_insert(out.loss);
            loss_sum += out.loss * batch.len() as f64;
            let grads = model.extractor.backward(&out.grad_features)?;
            let slots = model.param_slots(&grads.layers, &out.grad_params);
            sgd.step(slots, lr).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{m} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
        }
        let features = model.features(&data.train.inputs)?;
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: accuracy(&model, &data.train)?,
            test_acc: accuracy(&model, &data.test)?,
            train_entropy: mean_entropy(&model.head.training_probabilities(&features)?)?,
            inference_entropy: mean_entropy(&model.head.probabilities(&features)?)?,
        });
    }
    let first_batch_loss = first_batch_loss.expect("at least one batch");
    Ok((
        model,
        FitOutcome {
            epochs,
            first_batch_loss,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub out_data: String,
    pub report: DetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: ScoreKind,
    pub test_accuracy: f64,
    /// Mean inference entropy on the in-distribution test set.
    pub mean_entropy: f64,
    pub reports: Vec<OodReport>,
}

/// Scores of every row of `inputs` under `score`.
pub fn score_inputs(model: &Model, inputs: &Tensor, score: ScoreKind) -> Result<Vec<f64>> {
    model
        .probabilities(inputs)?
        .row_iter()
        .map(|p| score.score(p))
        .collect()
}

pub fn evaluate(
    model: &Model,
    in_test: &LabeledDataset,
    ood_sets: &[LabeledDataset],
    score: ScoreKind,
) -> Result<Evaluation> {
    if in_test.in_dim() != model.in_dim() {
        return Err(Error::Validation(format!(
            "model expects {} inputs, data has {}",
            model.in_dim(),
            in_test.in_dim()
        )));
    }
    let in_scores = score_inputs(model, &in_test.inputs, score)?;
    let mut reports = Vec::with_capacity(ood_sets.len());
    for ood in ood_sets {
        let composed = compose_test_set(in_test, ood)?;
        let out_scores = score_inputs(model, &ood.inputs, score)?;
        let samples: Vec<ScoredSample> = in_scores
            .iter()
            .chain(&out_scores)
            .zip(&composed.in_distribution)
            .map(|(&s, &flag)| ScoredSample::new(s, flag))
            .collect();
        reports.push(OodReport {
            out_data: ood.name.clone(),
            report: detection_report(&samples)?,
        });
    }
    Ok(Evaluation {
        score,
        test_accuracy: accuracy(model, in_test)?,
        mean_entropy: mean_entropy(&model.probabilities(&in_test.inputs)?)?,
        reports,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub head: HeadKind,
    pub entropic_scale: Option<f64>,
    pub seed: u64,
    pub in_data: String,
    pub fit: FitOutcome,
    /// One evaluation per detection score.
    pub evaluations: Vec<Evaluation>,
    pub wall_seconds: f64,
}

/// Equality ignores `wall_seconds`.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.run_id == other.run_id
            && self.head == other.head
            && self.entropic_scale == other.entropic_scale
            && self.seed == other.seed
            && self.in_data == other.in_data
            && self.fit == other.fit
            && self.evaluations == other.evaluations
    }
}

impl RunRecord {
    pub fn evaluation(&self, score: ScoreKind) -> Option<&Evaluation> {
        self.evaluations.iter().find(|e| e.score == score)
    }

    pub fn test_accuracy(&self) -> f64 {
        self.evaluations
            .first()
            .map_or(f64::NAN, |e| e.test_accuracy)
    }

    pub fn mean_entropy(&self) -> f64 {
        self.evaluations
            .first()
            .map_or(f64::NAN, |e| e.mean_entropy)
    }
}

/// Fits a model and evaluates it under both scores, without touching disk.
pub fn run(config: &ExperimentConfig, data: &ExperimentData) -> Result<(Model, RunRecord)> {
    #[cfg(not(target_arch = "wasm32"))]
    let start = std::time::Instant::now();
    let (model, fit) = fit(config, data)?;
    let evaluations = ScoreKind::ALL
        .iter()
        .map(|&s| evaluate(&model, &data.test, &data.ood, s))
        .collect::<Result<_>>()?;
    #[cfg(not(target_arch = "wasm32"))]
    let wall_seconds = start.elapsed().as_secs_f64();
    #[cfg(target_arch = "wasm32")]
    let wall_seconds = 0.0;
    let record = RunRecord {
        run_id: config.run_id(),
        head: config.head,
        entropic_scale: model.head.entropic_scale(),
        seed: config.seed,
        in_data: data.train.name.clone(),
        fit,
        evaluations,
        wall_seconds,
    };
    Ok((model, record))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub record: RunRecord,
    pub model: Model,
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
}

/// Trains per `config` and writes the checkpoint, the run record, and the
/// run's CSVs into `output_dir/run_id`.
pub fn train(config: &ExperimentConfig) -> Result<TrainOutput> {
    let data = load_data(config)?;
    train_on(config, &data)
}

pub fn train_on(config: &ExperimentConfig, data: &ExperimentData) -> Result<TrainOutput> {
    let (model, record) = run(config, data)?;
    let run_dir = config.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::file(&run_dir, e))?;
    let checkpoint = run_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &checkpoint)?;
    let record_path = run_dir.join(RECORD_FILE);
    let json = serde_json::to_string_pretty(&record)?;
    std::fs::write(&record_path, json).map_err(|e| Error::file(&record_path, e))?;
    let config_path = run_dir.join("config.txt");
    std::fs::write(&config_path, config.to_config_string())
        .map_err(|e| Error::file(&config_path, e))?;
    write_report(std::slice::from_ref(&record), &run_dir)?;
    Ok(TrainOutput {
        record,
        model,
        run_dir,
        checkpoint,
    })
}

/// Loads a checkpoint and evaluates it on the data named by `config`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    config: &ExperimentConfig,
    score: ScoreKind,
) -> Result<Evaluation> {
    let model = load_checkpoint(checkpoint)?;
    let data = load_data(config)?;
    evaluate(&model, &data.test, &data.ood, score)
}

/// Configs for one SoftMax baseline followed by one IsoMax run per scale.
/// Only the head differs between them.
pub fn sweep_configs(base: &ExperimentConfig, scales: &[f64]) -> Result<Vec<ExperimentConfig>> {
    if base.head != HeadKind::IsoMax {
        return Err(Error::Validation("sweep needs head = isomax".into()));
    }
    if scales.is_empty() {
        return Err(Error::Validation("sweep needs at least one scale".into()));
    }
    let mut configs = vec![ExperimentConfig {
        head: HeadKind::SoftMax,
        run_id: None,
        ..base.clone()
    }];
    for &es in scales {
        let cfg = ExperimentConfig {
            entropic_scale: es,
            run_id: None,
            ..base.clone()
        };
        cfg.validate()?;
        configs.push(cfg);
    }
    Ok(configs)
}

/// Runs the sweep in memory, one thread per run. Records come back in
/// `sweep_configs` order.
pub fn sweep_records(
    base: &ExperimentConfig,
    scales: &[f64],
    data: &ExperimentData,
) -> Result<Vec<(Model, RunRecord)>> {
    let configs = sweep_configs(base, scales)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| s.spawn(move || run(cfg, data)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

/// Full sweep: trains every run, persists each like [`train`], and writes
/// `sweep.csv`, `metrics.csv` and `curves.csv` into `output_dir`.
pub fn sweep(base: &ExperimentConfig, scales: &[f64]) -> Result<Vec<RunRecord>> {
    let data = load_data(base)?;
    let configs = sweep_configs(base, scales)?;
    let runs = sweep_records(base, scales, &data)?;
    let mut records = Vec::with_capacity(runs.len());
    for (cfg, (model, record)) in configs.iter().zip(runs) {
        let dir = cfg.run_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        save_checkpoint(&model, &dir.join(CHECKPOINT_FILE))?;
        let path = dir.join(RECORD_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&record)?)
            .map_err(|e| Error::file(&path, e))?;
        records.push(record);
    }
    let out = &base.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    write_sweep_csv(&records, &out.join("sweep.csv"))?;
    write_report(&records, out)?;
    Ok(records)
}
