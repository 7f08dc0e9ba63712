//! OOD detection metrics. In-distribution is the positive class and a sample
//! is accepted as in-distribution when its score is strictly above the
//! threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub is_in_distribution: bool,
}

impl ScoredSample {
    pub fn new(score: f64, is_in_distribution: bool) -> Self {
        ScoredSample {
            score,
            is_in_distribution,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Points ordered by increasing threshold: `-∞`, every distinct score, `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tnr_at_tpr95: f64,
    pub auroc: f64,
    pub dtacc: f64,
    pub n_in: usize,
    pub n_out: usize,
}

/// Counts at one threshold: samples of each class at or below it.
#[derive(Debug, Clone, Copy)]
struct Cut {
    threshold: f64,
    in_at_or_below: usize,
    out_at_or_below: usize,
}

struct Sweep {
    n_in: usize,
    n_out: usize,
    cuts: Vec<Cut>,
}

impl Sweep {
    fn new(samples: &[ScoredSample]) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
            return Err(Error::Validation(format!("non-finite score {}", s.score)));
        }
        let n_in = samples.iter().filter(|s| s.is_in_distribution).count();
        let n_out = samples.len() - n_in;
        if n_in == 0 || n_out == 0 {
            return Err(Error::Validation(format!(
                "need both classes, got {n_in} in-distribution and {n_out} out-of-distribution"
            )));
        }
        let mut sorted: Vec<ScoredSample> = samples.to_vec();
        sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

        let mut cuts = Vec::with_capacity(sorted.len() + 2);
        cuts.push(Cut {
            threshold: f64::NEG_INFINITY,
            in_at_or_below: 0,
            out_at_or_below: 0,
        });
        let (mut ins, mut outs) = (0, 0);
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].score;
            while i < sorted.len() && sorted[i].score == t {
                if sorted[i].is_in_distribution {
                    ins += 1;
                } else {
                    outs += 1;
                }
                i += 1;
            }
            cuts.push(Cut {
                threshold: t,
                in_at_or_below: ins,
                out_at_or_below: outs,
            });
        }
        cuts.push(Cut {
            threshold: f64::INFINITY,
            in_at_or_below: n_in,
            out_at_or_below: n_out,
        });
        Ok(Sweep { n_in, n_out, cuts })
    }

    fn tpr(&self, c: &Cut) -> f64 {
        (self.n_in - c.in_at_or_below) as f64 / self.n_in as f64
    }

    fn fpr(&self, c: &Cut) -> f64 {
        (self.n_out - c.out_at_or_below) as f64 / self.n_out as f64
    }
}

pub fn roc_curve(samples: &[ScoredSample]) -> Result<RocCurve> {
    let sweep = Sweep::new(samples)?;
    let points = sweep
        .cuts
        .iter()
        .map(|c| RocPoint {
            threshold: c.threshold,
            tpr: sweep.tpr(c),
            fpr: sweep.fpr(c),
        })
        .collect();
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area; tied scores produce diagonal segments worth ½.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[0].fpr - w[1].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
            .sum()
    }
}

pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    Ok(roc_curve(samples)?.area())
}

/// TNR at the largest threshold whose TPR is still at least 95%. No
/// interpolation between operating points.
pub fn tnr_at_tpr95(samples: &[ScoredSample]) -> Result<f64> {
    let sweep = Sweep::new(samples)?;
    Ok(tnr_at_tpr95_from(&sweep))
}

fn tnr_at_tpr95_from(sweep: &Sweep) -> f64 {
    // TPR ≥ 0.95 ⇔ 20·accepted ≥ 19·n_in, in integers.
    let cut = sweep
        .cuts
        .iter()
        .rev()
        .find(|c| 20 * (sweep.n_in - c.in_at_or_below) >= 19 * sweep.n_in)
        .expect("the -inf threshold accepts everything");
    1.0 - sweep.fpr(cut)
}

/// `1 − min_δ ½(P_in(o ≤ δ) + P_out(o > δ))` with equal priors.
pub fn dtacc(samples: &[ScoredSample]) -> Result<f64> {
    let sweep = Sweep::new(samples)?;
    Ok(dtacc_from(&sweep))
}

fn dtacc_from(sweep: &Sweep) -> f64 {
    let min_error = sweep
        .cuts
        .iter()
        .map(|c| {
            let in_err = c.in_at_or_below as f64 / sweep.n_in as f64;
            let out_err = (sweep.n_out - c.out_at_or_below) as f64 / sweep.n_out as f64;
            0.5 * (in_err + out_err)
        })
        .fold(f64::INFINITY, f64::min);
    1.0 - min_error
}

pub fn detection_report(samples: &[ScoredSample]) -> Result<DetectionReport> {
    let sweep = Sweep::new(samples)?;
    let auroc = roc_curve(samples)?.area();
    Ok(DetectionReport {
        tnr_at_tpr95: tnr_at_tpr95_from(&sweep),
        auroc,
        dtacc: dtacc_from(&sweep),
        n_in: sweep.n_in,
        n_out: sweep.n_out,
    })
}

/// Builds samples from separate in/out score lists.
pub fn samples_from_scores(in_scores: &[f64], out_scores: &[f64]) -> Vec<ScoredSample> {
    in_scores
        .iter()
        .map(|&s| ScoredSample::new(s, true))
        .chain(out_scores.iter().map(|&s| ScoredSample::new(s, false)))
        .collect()
}
