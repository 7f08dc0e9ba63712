#![allow(dead_code)]

use isomax::heads::{IsoMaxHead, SoftMaxHead};
use isomax::metrics::ScoredSample;
use isomax::Tensor;
use rand::Rng;

/// `|a − n| / max(|a|, |n|, 1e-4)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Central difference of `f` with respect to `x[i]`.
pub fn central_difference(
    x: &mut [f64],
    i: usize,
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

pub fn random_isomax<R: Rng>(rng: &mut R, c: usize, f: usize) -> IsoMaxHead {
    let es = [1.0, 3.0, 10.0][rng.random_range(0..3)];
    IsoMaxHead::with_prototypes(random_tensor(rng, vec![c, f], 1.5), es).unwrap()
}

pub fn random_softmax<R: Rng>(rng: &mut R, c: usize, f: usize) -> SoftMaxHead {
    SoftMaxHead::new(
        random_tensor(rng, vec![c, f], 1.5),
        random_tensor(rng, vec![c], 1.0),
    )
    .unwrap()
}

/// Pairwise Mann–Whitney count, ties worth ½.
pub fn brute_force_auroc(samples: &[ScoredSample]) -> f64 {
    let ins: Vec<f64> = samples
        .iter()
        .filter(|s| s.is_in_distribution)
        .map(|s| s.score)
        .collect();
    let outs: Vec<f64> = samples
        .iter()
        .filter(|s| !s.is_in_distribution)
        .map(|s| s.score)
        .collect();
    let mut wins = 0.0;
    for &a in &ins {
        for &b in &outs {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (ins.len() * outs.len()) as f64
}

/// Candidate thresholds: −∞, every score, +∞.
fn thresholds(samples: &[ScoredSample]) -> Vec<f64> {
    let mut t: Vec<f64> = samples.iter().map(|s| s.score).collect();
    t.push(f64::NEG_INFINITY);
    t.push(f64::INFINITY);
    t
}

fn counts(samples: &[ScoredSample], delta: f64) -> (usize, usize, usize, usize) {
    let n_in = samples.iter().filter(|s| s.is_in_distribution).count();
    let n_out = samples.len() - n_in;
    let in_above = samples
        .iter()
        .filter(|s| s.is_in_distribution && s.score > delta)
        .count();
    let out_above = samples
        .iter()
        .filter(|s| !s.is_in_distribution && s.score > delta)
        .count();
    (n_in, n_out, in_above, out_above)
}

/// Exhaustive: best TNR among thresholds with TPR ≥ 95%.
pub fn brute_force_tnr95(samples: &[ScoredSample]) -> f64 {
    thresholds(samples)
        .into_iter()
        .filter_map(|d| {
            let (n_in, n_out, in_above, out_above) = counts(samples, d);
            (20 * in_above >= 19 * n_in).then(|| 1.0 - out_above as f64 / n_out as f64)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exhaustive: `1 − min ½(P_in(o ≤ δ) + P_out(o > δ))`.
pub fn brute_force_dtacc(samples: &[ScoredSample]) -> f64 {
    let min = thresholds(samples)
        .into_iter()
        .map(|d| {
            let (n_in, n_out, in_above, out_above) = counts(samples, d);
            0.5 * ((n_in - in_above) as f64 / n_in as f64 + out_above as f64 / n_out as f64)
        })
        .fold(f64::INFINITY, f64::min);
    1.0 - min
}

/// Random scored samples with both classes present and plenty of ties.
pub fn random_samples<R: Rng>(rng: &mut R, n: usize) -> Vec<ScoredSample> {
    let levels = rng.random_range(2..=50);
    let mut s: Vec<ScoredSample> = (0..n)
        .map(|_| {
            let flag = rng.random_bool(0.5);
            let shift = if flag {
                rng.random_range(0..=levels / 2)
            } else {
                0
            };
            let level = (rng.random_range(0..levels) + shift).min(levels);
            ScoredSample::new(level as f64 / levels as f64, flag)
        })
        .collect();
    s[0].is_in_distribution = true;
    s[n - 1].is_in_distribution = false;
    s
}
