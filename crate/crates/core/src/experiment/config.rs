//! Experiment configuration and its flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key maps onto
//! one field; unknown or repeated keys are errors. Keys left out keep their
//! defaults.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::BlobSpec;
use crate::error::{Error, Result};
use crate::heads::{HeadKind, LogMode, DEFAULT_ENTROPIC_SCALE};
use crate::optim::SgdConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobData {
    /// `seed` here is ignored; data seeds derive from the experiment seed.
    pub blobs: BlobSpec,
    /// One ring-shaped OOD set per radius.
    pub ring_radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdxData {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Classes removed from training and used (from the test files) as an OOD set.
    pub holdout_classes: Vec<usize>,
    /// Optional second corpus used as an OOD set.
    pub ood_images: Option<PathBuf>,
    pub ood_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSpec {
    Blobs(BlobData),
    Idx(IdxData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub head: HeadKind,
    pub entropic_scale: f64,
    /// `None` picks sequential for IsoMax and fused for SoftMax.
    pub log_mode: Option<LogMode>,
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub run_id: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSpec::Blobs(BlobData {
                blobs: BlobSpec::default(),
                ring_radii: vec![12.0],
            }),
            hidden: vec![64, 64],
            feature_dim: 16,
            head: HeadKind::IsoMax,
            entropic_scale: DEFAULT_ENTROPIC_SCALE,
            log_mode: None,
            sgd: SgdConfig::default(),
            epochs: 30,
            batch_size: 64,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            run_id: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Validation("layer sizes must be positive".into()));
        }
        if self.head == HeadKind::IsoMax
            && !(self.entropic_scale > 0.0 && self.entropic_scale.is_finite())
        {
            return Err(Error::Validation(format!(
                "entropic_scale must be positive, got {}",
                self.entropic_scale
            )));
        }
        self.sgd.validate()?;
        match &self.data {
            DataSpec::Blobs(b) => {
                b.blobs.validate()?;
                if b.ring_radii.is_empty() {
                    return Err(Error::Validation("blob data needs a ring_radius".into()));
                }
            }
            DataSpec::Idx(idx) => {
                if idx.ood_images.is_some() != idx.ood_labels.is_some() {
                    return Err(Error::Validation(
                        "idx_ood_images and idx_ood_labels go together".into(),
                    ));
                }
                if idx.holdout_classes.is_empty() && idx.ood_images.is_none() {
                    return Err(Error::Validation(
                        "idx data needs idx_holdout_classes or an OOD corpus".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn log_mode(&self) -> LogMode {
        self.log_mode.unwrap_or(match self.head {
            HeadKind::IsoMax => LogMode::Sequential,
            HeadKind::SoftMax => LogMode::Fused,
        })
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| match self.head {
            HeadKind::SoftMax => format!("softmax-s{}", self.seed),
            HeadKind::IsoMax => format!("isomax-es{}-s{}", self.entropic_scale, self.seed),
        })
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_id())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg: Self = text.parse()?;
        // Relative IDX paths are taken relative to the config file.
        if let (DataSpec::Idx(idx), Some(base)) = (&mut cfg.data, path.parent()) {
            for p in [
                Some(&mut idx.train_images),
                Some(&mut idx.train_labels),
                Some(&mut idx.test_images),
                Some(&mut idx.test_labels),
                idx.ood_images.as_mut(),
                idx.ood_labels.as_mut(),
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Renders the config in the file format accepted by `from_str`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.data {
            DataSpec::Blobs(b) => {
                put("dataset", "blobs".into());
                put("num_classes", b.blobs.num_classes.to_string());
                put("dim", b.blobs.dim.to_string());
                put("cluster_radius", b.blobs.cluster_radius.to_string());
                put("cluster_sigma", b.blobs.cluster_sigma.to_string());
                put("samples_per_class", b.blobs.samples_per_class.to_string());
                put("ring_radius", join(&b.ring_radii));
            }
            DataSpec::Idx(idx) => {
                put("dataset", "idx".into());
                put("idx_train_images", idx.train_images.display().to_string());
                put("idx_train_labels", idx.train_labels.display().to_string());
                put("idx_test_images", idx.test_images.display().to_string());
                put("idx_test_labels", idx.test_labels.display().to_string());
                if !idx.holdout_classes.is_empty() {
                    put("idx_holdout_classes", join(&idx.holdout_classes));
                }
                if let (Some(i), Some(l)) = (&idx.ood_images, &idx.ood_labels) {
                    put("idx_ood_images", i.display().to_string());
                    put("idx_ood_labels", l.display().to_string());
                }
            }
        }
        put("hidden", join(&self.hidden));
        put("feature_dim", self.feature_dim.to_string());
        put("head", self.head.name().into());
        put("entropic_scale", self.entropic_scale.to_string());
        if let Some(m) = self.log_mode {
            put("log_mode", m.name().into());
        }
        put("learning_rate", self.sgd.learning_rate.to_string());
        put("momentum", self.sgd.momentum.to_string());
        put("weight_decay", self.sgd.weight_decay.to_string());
        put("decay_epochs", join(&self.sgd.decay_epochs));
        put("decay_factor", self.sgd.decay_factor.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        if let Some(id) = &self.run_id {
            put("run_id", id.clone());
        }
        out
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        message: format!("cannot parse {key} = {value:?}"),
    })
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_value(line, key, v.trim()))
        .collect()
}

#[derive(Default)]
struct IdxKeys {
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    holdout_classes: Vec<usize>,
    ood_images: Option<PathBuf>,
    ood_labels: Option<PathBuf>,
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut blobs = BlobSpec::default();
        let mut ring_radii = vec![12.0];
        let mut idx = IdxKeys::default();
        let mut dataset = String::from("blobs");
        let mut seen = HashSet::new();

        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected key = value, got {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key {key:?}"),
                });
            }
            let bad = |e: Error| Error::Config {
                line,
                message: e.to_string(),
            };
            match key {
                "dataset" => dataset = value.to_string(),
                "num_classes" => blobs.num_classes = parse_value(line, key, value)?,
                "dim" => blobs.dim = parse_value(line, key, value)?,
                "cluster_radius" => blobs.cluster_radius = parse_value(line, key, value)?,
                "cluster_sigma" => blobs.cluster_sigma = parse_value(line, key, value)?,
                "samples_per_class" => blobs.samples_per_class = parse_value(line, key, value)?,
                "ring_radius" => ring_radii = parse_list(line, key, value)?,
                "idx_train_images" => idx.train_images = Some(value.into()),
                "idx_train_labels" => idx.train_labels = Some(value.into()),
                "idx_test_images" => idx.test_images = Some(value.into()),
                "idx_test_labels" => idx.test_labels = Some(value.into()),
                "idx_holdout_classes" => idx.holdout_classes = parse_list(line, key, value)?,
                "idx_ood_images" => idx.ood_images = Some(value.into()),
                "idx_ood_labels" => idx.ood_labels = Some(value.into()),
                "hidden" => cfg.hidden = parse_list(line, key, value)?,
                "feature_dim" => cfg.feature_dim = parse_value(line, key, value)?,
                "head" => cfg.head = HeadKind::parse(value).map_err(bad)?,
                "entropic_scale" => cfg.entropic_scale = parse_value(line, key, value)?,
                "log_mode" => cfg.log_mode = Some(LogMode::parse(value).map_err(bad)?),
                "learning_rate" => cfg.sgd.learning_rate = parse_value(line, key, value)?,
                "momentum" => cfg.sgd.momentum = parse_value(line, key, value)?,
                "weight_decay" => cfg.sgd.weight_decay = parse_value(line, key, value)?,
                "decay_epochs" => cfg.sgd.decay_epochs = parse_list(line, key, value)?,
                "decay_factor" => cfg.sgd.decay_factor = parse_value(line, key, value)?,
                "epochs" => cfg.epochs = parse_value(line, key, value)?,
                "batch_size" => cfg.batch_size = parse_value(line, key, value)?,
                "seed" => cfg.seed = parse_value(line, key, value)?,
                "output_dir" => cfg.output_dir = value.into(),
                "run_id" => cfg.run_id = Some(value.to_string()),
                other => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }

        cfg.data = match dataset.as_str() {
            "blobs" => DataSpec::Blobs(BlobData { blobs, ring_radii }),
            "idx" => {
                let need = |p: Option<PathBuf>, key: &str| {
                    p.ok_or_else(|| Error::Config {
                        line: 0,
                        message: format!("dataset = idx requires {key}"),
                    })
                };
                DataSpec::Idx(IdxData {
                    train_images: need(idx.train_images, "idx_train_images")?,
                    train_labels: need(idx.train_labels, "idx_train_labels")?,
                    test_images: need(idx.test_images, "idx_test_images")?,
                    test_labels: need(idx.test_labels, "idx_test_labels")?,
                    holdout_classes: idx.holdout_classes,
                    ood_images: idx.ood_images,
                    ood_labels: idx.ood_labels,
                })
            }
            other => {
                return Err(Error::Config {
                    line: 0,
                    message: format!("unknown dataset {other:?} (expected blobs or idx)"),
                })
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
