//! IDX reading from hand-built byte fixtures.

use isomax::data::{load_idx, read_idx_images, read_idx_labels};
use isomax::Error;
use std::path::{Path, PathBuf};

fn be(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_be_bytes()).collect()
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

/// Two 2×2 images.
fn images() -> Vec<u8> {
    let mut b = be(&[0x803, 2, 2, 2]);
    b.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 255]);
    b
}

fn labels(n: u32, values: &[u8]) -> Vec<u8> {
    let mut b = be(&[0x801, n]);
    b.extend_from_slice(values);
    b
}

#[test]
fn reads_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(dir.path(), "img", &images());
    assert_eq!(std::fs::metadata(&img).unwrap().len(), 24);
    let lab = write(dir.path(), "lab", &labels(2, &[3, 1]));

    let (n, rows, cols, px) = read_idx_images(&img).unwrap();
    assert_eq!((n, rows, cols), (2, 2, 2));
    assert_eq!(px.len(), 8);
    assert_eq!(read_idx_labels(&lab).unwrap(), vec![3, 1]);

    let ds = load_idx(&img, &lab).unwrap();
    assert_eq!(ds.inputs.shape(), &[2, 4]);
    assert_eq!(ds.inputs.row(0), &[0.0, 1.0, 0.2, 0.4]);
    assert_eq!(ds.inputs.row(1), &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(ds.labels, vec![3, 1]);
    assert_eq!(ds.num_classes, 4);
}

#[test]
fn rejects_swapped_magic() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = images();
    bad[3] = 0x04;
    let img = write(dir.path(), "img", &bad);
    assert!(matches!(read_idx_images(&img), Err(Error::Format(_))));
    let lab = write(dir.path(), "lab", &images());
    assert!(matches!(read_idx_labels(&lab), Err(Error::Format(_))));
}

#[test]
fn rejects_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(dir.path(), "img", &images());
    let lab = write(dir.path(), "lab", &labels(3, &[0, 1, 2]));
    assert!(matches!(load_idx(&img, &lab), Err(Error::Consistency(_))));
}

#[test]
fn rejects_truncated_and_oversized_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let full = images();
    let short = write(dir.path(), "short", &full[..20]);
    assert!(read_idx_images(&short).is_err());
    let header_only = write(dir.path(), "head", &full[..10]);
    assert!(read_idx_images(&header_only).is_err());
    let mut long = full.clone();
    long.push(7);
    let long = write(dir.path(), "long", &long);
    assert!(read_idx_images(&long).is_err());
    let huge = write(dir.path(), "huge", &labels(u32::MAX, &[1, 2]));
    assert!(read_idx_labels(&huge).is_err());
}

#[test]
fn missing_file_names_path() {
    let err = read_idx_labels(Path::new("/nonexistent/labels.idx")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/labels.idx"));
}
