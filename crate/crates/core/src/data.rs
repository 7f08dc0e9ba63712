//! Datasets: seeded Gaussian blobs, a ring-shaped out-distribution, and the
//! IDX binary image format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `[N × in_dim]`
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(
        inputs: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} labels for inputs of shape {:?}",
                labels.len(),
                inputs.shape()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Index {
                index: l,
                bound: num_classes,
            });
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Keeps samples whose label satisfies `keep`.
    pub fn filter_labels(&self, keep: impl Fn(usize) -> bool) -> Result<LabeledDataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        if idx.is_empty() {
            return Err(Error::Validation(format!(
                "no samples of {} left after filtering",
                self.name
            )));
        }
        Ok(LabeledDataset {
            inputs: self.inputs.select_rows(&idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            name: self.name.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Distance of every class mean from the origin.
    pub cluster_radius: f64,
    pub cluster_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            num_classes: 4,
            dim: 2,
            cluster_radius: 4.0,
            cluster_sigma: 0.75,
            samples_per_class: 500,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Validation(
                "blob classes, dim and samples per class must be positive".into(),
            ));
        }
        if !(self.cluster_radius > 0.0 && self.cluster_radius.is_finite()) {
            return Err(Error::Validation(format!(
                "cluster radius must be positive, got {}",
                self.cluster_radius
            )));
        }
        if !(self.cluster_sigma >= 0.0 && self.cluster_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "cluster sigma must be non-negative, got {}",
                self.cluster_sigma
            )));
        }
        if self.dim > 2 && self.num_classes > 2 * self.dim {
            return Err(Error::Validation(format!(
                "{} classes do not fit on the ±axes of a {}-dim space",
                self.num_classes, self.dim
            )));
        }
        Ok(())
    }

    /// Class means: evenly spaced on a circle in 2-D, on `±radius·e_k` otherwise.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let r = self.cluster_radius;
        (0..self.num_classes)
            .map(|j| {
                let mut mean = vec![0.0; self.dim];
                match self.dim {
                    1 => mean[0] = if j % 2 == 0 { r } else { -r },
                    2 => {
                        let angle = std::f64::consts::TAU * j as f64 / self.num_classes as f64;
                        let (s, c) = angle.sin_cos();
                        mean[0] = snap_to_zero(r * c, r);
                        mean[1] = snap_to_zero(r * s, r);
                    }
                    _ => {
                        let axis = j % self.dim;
                        mean[axis] = if j < self.dim { r } else { -r };
                    }
                }
                mean
            })
            .collect()
    }
}

/// Rounding residue of `sin`/`cos` at multiples of π/2 is set to exact zero.
fn snap_to_zero(v: f64, scale: f64) -> f64 {
    if v.abs() < 1e-12 * scale {
        0.0
    } else {
        v
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Isotropic Gaussian blobs, grouped by class. Pure function of `spec`.
pub fn generate_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in spec.class_means().iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for &m in mean {
                data.push(m + spec.cluster_sigma * gaussian(&mut rng));
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(
        Tensor::new(vec![n, spec.dim], data)?,
        labels,
        spec.num_classes,
        format!("blobs{}", spec.num_classes),
    )
}

/// Points on a sphere of `ring_radius` plus Gaussian noise of the blob sigma,
/// `num_classes · samples_per_class` of them, all labeled 0.
pub fn generate_ood_ring(spec: &BlobSpec, ring_radius: f64) -> Result<LabeledDataset> {
    spec.validate()?;
    let margin = spec.cluster_radius + 3.0 * spec.cluster_sigma;
    if !(ring_radius > margin && ring_radius.is_finite()) {
        return Err(Error::Validation(format!(
            "ring radius {ring_radius} must exceed cluster radius + 3 sigma = {margin}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut dir = vec![0.0; spec.dim];
    for _ in 0..n {
        let norm = loop {
            dir.iter_mut().for_each(|v| *v = gaussian(&mut rng));
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break norm;
            }
        };
        for &d in &dir {
            data.push(ring_radius * d / norm + spec.cluster_sigma * gaussian(&mut rng));
        }
    }
    LabeledDataset::new(
        Tensor::new(vec![n, spec.dim], data)?,
        vec![0; n],
        spec.num_classes,
        format!("ring{ring_radius}"),
    )
}

fn read_u32<R: Read>(reader: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    reader.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::file(path, e))
}

fn check_magic<R: Read>(reader: &mut R, expected: u32, path: &Path) -> Result<()> {
    let magic = read_u32(reader).map_err(|e| Error::file(path, e))?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{}: magic {magic:#010x}, expected {expected:#010x}",
            path.display()
        )));
    }
    Ok(())
}

/// Reads exactly `len` bytes, rejecting short and over-long files.
fn read_payload<R: Read>(reader: &mut R, len: usize, path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::file(path, e))?;
    if bytes.len() != len {
        return Err(Error::Format(format!(
            "{}: header promises {len} payload bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

/// Raw IDX image payload: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = open(path)?;
    check_magic(&mut r, IDX_IMAGES_MAGIC, path)?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = read_u32(&mut r).map_err(|e| Error::file(path, e))? as usize;
    }
    let [n, rows, cols] = dims;
    let pixels = read_payload(&mut r, n * rows * cols, path)?;
    Ok((n, rows, cols, pixels))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = open(path)?;
    check_magic(&mut r, IDX_LABELS_MAGIC, path)?;
    let n = read_u32(&mut r).map_err(|e| Error::file(path, e))? as usize;
    read_payload(&mut r, n, path)
}

/// Loads an image/label IDX pair. Pixels are divided by 255; each image is
/// flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (n, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(Error::Consistency(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    if n == 0 || rows * cols == 0 {
        return Err(Error::Validation(format!(
            "{} holds no pixels",
            images_path.display()
        )));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let name = images_path
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    LabeledDataset::new(
        Tensor::new(vec![n, rows * cols], data)?,
        labels,
        num_classes,
        name,
    )
}

/// Writes a dataset with inputs in `[0, 1]` back to IDX, rounding to bytes.
pub fn write_idx(
    dataset: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    if rows * cols != dataset.in_dim() {
        return Err(Error::Dimension(format!(
            "{rows}×{cols} images cannot hold {} inputs",
            dataset.in_dim()
        )));
    }
    if let Some(&l) = dataset.labels.iter().find(|&&l| l > 255) {
        return Err(Error::Validation(format!(
            "label {l} does not fit in a byte"
        )));
    }
    let n = dataset.len() as u32;

    let mut w = BufWriter::new(File::create(images_path).map_err(|e| Error::file(images_path, e))?);
    let mut header = Vec::with_capacity(16);
    for v in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        header.extend_from_slice(&v.to_be_bytes());
    }
    let pixels: Vec<u8> = dataset
        .inputs
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&header)
        .and_then(|_| w.write_all(&pixels))
        .and_then(|_| w.flush())
        .map_err(|e| Error::file(images_path, e))?;

    let mut w = BufWriter::new(File::create(labels_path).map_err(|e| Error::file(labels_path, e))?);
    let mut bytes = Vec::with_capacity(8 + dataset.len());
    bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&n.to_be_bytes());
    bytes.extend(dataset.labels.iter().map(|&l| l as u8));
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::file(labels_path, e))?;
    Ok(())
}

/// In-distribution samples followed by out-of-distribution samples, flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedTestSet {
    pub inputs: Tensor,
    pub in_distribution: Vec<bool>,
}

impl ComposedTestSet {
    pub fn len(&self) -> usize {
        self.in_distribution.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_distribution.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], bool)> {
        self.inputs
            .row_iter()
            .zip(self.in_distribution.iter().copied())
    }
}

pub fn compose_test_set(in_test: &LabeledDataset, ood: &LabeledDataset) -> Result<ComposedTestSet> {
    if in_test.is_empty() || ood.is_empty() {
        return Err(Error::Validation(
            "both in-distribution and OOD sets must be non-empty".into(),
        ));
    }
    if in_test.in_dim() != ood.in_dim() {
        return Err(Error::Validation(format!(
            "in-distribution inputs have {} dims, OOD inputs {}",
            in_test.in_dim(),
            ood.in_dim()
        )));
    }
    let inputs = in_test.inputs.vstack(&ood.inputs)?;
    let mut flags = vec![true; in_test.len()];
    flags.extend(std::iter::repeat_n(false, ood.len()));
    Ok(ComposedTestSet {
        inputs,
        in_distribution: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sigma: f64, per_class: usize) -> BlobSpec {
        BlobSpec {
            num_classes: 2,
            dim: 2,
            cluster_radius: 4.0,
            cluster_sigma: sigma,
            samples_per_class: per_class,
            seed: 7,
        }
    }

    #[test]
    fn zero_variance_blobs_sit_on_means() {
        let d = generate_blobs(&spec(0.0, 5)).unwrap();
        for (x, &l) in d.inputs.row_iter().zip(&d.labels) {
            let expected = if l == 0 { [4.0, 0.0] } else { [-4.0, 0.0] };
            assert_eq!(x, expected);
        }
    }

    #[test]
    fn empirical_means_converge() {
        let s = spec(1.0, 1000);
        let d = generate_blobs(&s).unwrap();
        for (class, mean) in s.class_means().iter().enumerate() {
            let mut acc = [0.0; 2];
            for (x, _) in d
                .inputs
                .row_iter()
                .zip(&d.labels)
                .filter(|(_, &l)| l == class)
            {
                acc[0] += x[0];
                acc[1] += x[1];
            }
            for k in 0..2 {
                assert!((acc[k] / 1000.0 - mean[k]).abs() < 0.15);
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let s = spec(1.0, 50);
        assert_eq!(generate_blobs(&s).unwrap(), generate_blobs(&s).unwrap());
        assert_eq!(
            generate_ood_ring(&s, 12.0).unwrap(),
            generate_ood_ring(&s, 12.0).unwrap()
        );
        let other = BlobSpec {
            seed: 8,
            ..s.clone()
        };
        assert_ne!(generate_blobs(&s).unwrap(), generate_blobs(&other).unwrap());
    }

    #[test]
    fn high_dim_means_on_axes() {
        let s = BlobSpec {
            num_classes: 5,
            dim: 3,
            ..BlobSpec::default()
        };
        let means = s.class_means();
        assert_eq!(means[0], vec![4.0, 0.0, 0.0]);
        assert_eq!(means[4], vec![0.0, -4.0, 0.0]);
        let too_many = BlobSpec {
            num_classes: 7,
            ..s
        };
        assert!(generate_blobs(&too_many).is_err());
    }

    #[test]
    fn ring_norms() {
        let ring = generate_ood_ring(&spec(1.0, 500), 12.0).unwrap();
        for x in ring.inputs.row_iter() {
            let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((7.0..=17.0).contains(&n), "norm {n}");
        }
        let ring = generate_ood_ring(&spec(0.0, 50), 12.0).unwrap();
        for x in ring.inputs.row_iter() {
            let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((n - 12.0).abs() < 1e-12);
        }
        assert!(ring.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn ring_margin_is_enforced() {
        assert!(matches!(
            generate_ood_ring(&spec(1.0, 5), 7.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn compose_counts_and_flags() {
        let s = spec(1.0, 50);
        let inside = generate_blobs(&s).unwrap();
        let ring = generate_ood_ring(&s, 12.0).unwrap();
        let set = compose_test_set(&inside, &ring).unwrap();
        assert_eq!(set.len(), 200);
        assert_eq!(set.in_distribution.iter().filter(|&&f| f).count(), 100);
        for (i, (x, flag)) in set.iter().enumerate() {
            if i < 100 {
                assert!(flag);
                assert_eq!(x, inside.inputs.row(i));
            } else {
                assert!(!flag);
                assert_eq!(x, ring.inputs.row(i - 100));
            }
        }
    }

    #[test]
    fn compose_rejects_bad_inputs() {
        let s = spec(1.0, 5);
        let inside = generate_blobs(&s).unwrap();
        let three_d = generate_blobs(&BlobSpec { dim: 3, ..s }).unwrap();
        assert!(matches!(
            compose_test_set(&inside, &three_d),
            Err(Error::Validation(_))
        ));
        let empty = LabeledDataset {
            inputs: Tensor::empty_rows(2),
            labels: vec![],
            num_classes: 2,
            name: "empty".into(),
        };
        assert!(matches!(
            compose_test_set(&inside, &empty),
            Err(Error::Validation(_))
        ));
    }
}
