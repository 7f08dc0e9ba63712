//! Versioned plain-text checkpoints.
//!
//! ```text
//! isomax-checkpoint 1
//! head isomax
//! entropic_scale 1.0000000000000000e1
//! activations relu relu identity
//! tensor layer0.weights 64 2
//! <one matrix row per line, 17 significant digits>
//! ...
//! end
//! ```
//! Tensors appear in the order: every layer's weights and bias, then the
//! head parameters (`head.weights`, `head.biases` or `head.prototypes`).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::heads::{Head, HeadKind, IsoMaxHead, SoftMaxHead};
use crate::model::Model;
use crate::nn::{Activation, DenseLayer, FeatureExtractor};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "isomax-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_tensor(out: &mut String, name: &str, t: &Tensor) {
    let dims: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "tensor {name} {}", dims.join(" "));
    let rows = if t.shape().len() >= 2 { t.rows() } else { 1 };
    for row in t.data().chunks(t.len() / rows) {
        let vals: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
}

pub fn to_checkpoint_string(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "head {}", model.head.kind().name());
    if let Some(es) = model.head.entropic_scale() {
        let _ = writeln!(out, "entropic_scale {}", fmt_f64(es));
    }
    let acts: Vec<&str> = model
        .extractor
        .layers()
        .iter()
        .map(|l| l.activation.name())
        .collect();
    let _ = writeln!(out, "activations {}", acts.join(" "));
    for (i, layer) in model.extractor.layers().iter().enumerate() {
        write_tensor(&mut out, &format!("layer{i}.weights"), &layer.weights);
        write_tensor(&mut out, &format!("layer{i}.bias"), &layer.bias);
    }
    for (name, t) in model.head.named_params() {
        write_tensor(&mut out, &format!("head.{name}"), t);
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| Error::Format("checkpoint ends early".into()))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            _ => Err(Error::Format(format!(
                "checkpoint line {n}: expected {key:?}, got {line:?}"
            ))),
        }
    }

    fn tensor(&mut self, name: &str) -> Result<Tensor> {
        let (n, rest) = self.keyed("tensor")?;
        let mut parts = rest.split_whitespace();
        if parts.next() != Some(name) {
            return Err(Error::Format(format!(
                "checkpoint line {n}: expected tensor {name}, got {rest:?}"
            )));
        }
        let shape: Vec<usize> = parts
            .map(|d| {
                d.parse()
                    .map_err(|_| Error::Format(format!("checkpoint line {n}: bad dimension {d:?}")))
            })
            .collect::<Result<_>>()?;
        let rows = if shape.len() >= 2 { shape[0] } else { 1 };
        let mut data = Vec::with_capacity(shape.iter().product());
        for _ in 0..rows {
            let (n, line) = self.next()?;
            for v in line.split_whitespace() {
                data.push(
                    v.parse::<f64>().map_err(|_| {
                        Error::Format(format!("checkpoint line {n}: bad value {v:?}"))
                    })?,
                );
            }
        }
        Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor {name}: {e}")))
    }
}

pub fn from_checkpoint_str(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, version) = lines.keyed(CHECKPOINT_MAGIC)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version:?}"
        )));
    }
    let (_, head) = lines.keyed("head")?;
    let head_kind = HeadKind::parse(head)?;
    let entropic_scale = match head_kind {
        HeadKind::IsoMax => {
            let (n, v) = lines.keyed("entropic_scale")?;
            Some(v.parse::<f64>().map_err(|_| {
                Error::Format(format!("checkpoint line {n}: bad entropic scale {v:?}"))
            })?)
        }
        HeadKind::SoftMax => None,
    };
    let (_, acts) = lines.keyed("activations")?;
    let acts: Vec<Activation> = acts
        .split_whitespace()
        .map(Activation::parse)
        .collect::<Result<_>>()?;

    let mut layers = Vec::with_capacity(acts.len());
    for (i, act) in acts.into_iter().enumerate() {
        let w = lines.tensor(&format!("layer{i}.weights"))?;
        let b = lines.tensor(&format!("layer{i}.bias"))?;
        layers.push(DenseLayer::new(w, b, act)?);
    }
    let extractor = FeatureExtractor::from_layers(layers)?;
    let head = match (head_kind, entropic_scale) {
        (HeadKind::IsoMax, Some(es)) => Head::IsoMax(IsoMaxHead::with_prototypes(
            lines.tensor("head.prototypes")?,
            es,
        )?),
        _ => {
            let w = lines.tensor("head.weights")?;
            let b = lines.tensor("head.biases")?;
            Head::SoftMax(SoftMaxHead::new(w, b)?)
        }
    };
    let (n, end) = lines.next()?;
    if end != "end" {
        return Err(Error::Format(format!(
            "checkpoint line {n}: expected end, got {end:?}"
        )));
    }
    Model::new(extractor, head)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_checkpoint_string(model)).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    from_checkpoint_str(&text)
}
