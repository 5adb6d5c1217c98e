//! Error rates of a decision vector against the ground truth, and their
//! aggregation over Monte Carlo replications.
//!
//! * FDR: mean over replications of `FP / (R ∨ 1)`.
//! * mFDR: `E[FP] / E[R ∨ 1]`, estimated as a ratio of means.
//! * MDR: mean of `FN / (#non-null ∨ 1)`; power is `1 − MDR`.

use crate::error::{Error, Result};
use crate::model::GroundTruth;
use crate::procedures::{DecisionRecord, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Confusion {
    pub false_positives: usize,
    pub true_positives: usize,
    pub false_negatives: usize,
    pub total_rejections: usize,
    pub total_nonnull: usize,
}

impl Confusion {
    pub fn from_decisions(truth: &GroundTruth, decisions: &[bool]) -> Result<Self> {
        if truth.len() != decisions.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                found: decisions.len(),
            });
        }
        let mut c = Confusion::default();
        for (&theta, &d) in truth.theta.iter().zip(decisions) {
            match (theta, d) {
                (false, true) => c.false_positives += 1,
                (true, true) => c.true_positives += 1,
                (true, false) => c.false_negatives += 1,
                (false, false) => {}
            }
        }
        c.total_rejections = c.false_positives + c.true_positives;
        c.total_nonnull = c.true_positives + c.false_negatives;
        Ok(c)
    }

    /// `FN / (#non-null ∨ 1)`.
    pub fn missed_proportion(&self) -> f64 {
        self.false_negatives as f64 / self.total_nonnull.max(1) as f64
    }

    /// Weighted classification loss written in confusion counts: `(λ·FP + FN − αλ·R) / m`.
    pub fn weighted_loss(&self, m: usize, lambda: f64, alpha: f64) -> f64 {
        (lambda * self.false_positives as f64 + self.false_negatives as f64
            - alpha * lambda * self.total_rejections as f64)
            / m as f64
    }
}

/// False discovery proportion `FP / (R ∨ 1)`.
pub fn fdp(c: &Confusion) -> f64 {
    c.false_positives as f64 / c.total_rejections.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub fdr: f64,
    pub mfdr: f64,
    pub mdr: f64,
    pub power: f64,
    pub replications: usize,
    pub se_fdr: f64,
    pub se_mfdr: f64,
    pub se_mdr: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean, `sd / √n` (zero for `n = 1`).
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Delta-method standard error of `mean(num) / mean(den)`.
pub fn ratio_standard_error(num: &[f64], den: &[f64]) -> f64 {
    let n = num.len();
    if n < 2 {
        return 0.0;
    }
    let (mn, md) = (mean(num), mean(den));
    let ratio = mn / md;
    // Linearized residuals of the ratio estimator.
    let resid: Vec<f64> = num.iter().zip(den).map(|(a, b)| (a - ratio * b) / md).collect();
    standard_error(&resid)
}

/// Aggregates per-replication confusions.
pub fn aggregate(confusions: &[Confusion]) -> Result<MetricsReport> {
    if confusions.is_empty() {
        return Err(Error::EmptyInput("replications"));
    }
    let fdps: Vec<f64> = confusions.iter().map(fdp).collect();
    let fps: Vec<f64> = confusions.iter().map(|c| c.false_positives as f64).collect();
    let rejs: Vec<f64> = confusions.iter().map(|c| c.total_rejections.max(1) as f64).collect();
    let mdps: Vec<f64> = confusions.iter().map(Confusion::missed_proportion).collect();
    let mdr = mean(&mdps);
    let se_mdr = standard_error(&mdps);
    Ok(MetricsReport {
        fdr: mean(&fdps),
        mfdr: mean(&fps) / mean(&rejs),
        mdr,
        power: 1.0 - mdr,
        replications: confusions.len(),
        se_fdr: standard_error(&fdps),
        se_mfdr: ratio_standard_error(&fps, &rejs),
        se_mdr,
    })
}

/// Aggregates decisions taken at each record's own stopping stage.
pub fn stopping_time_metrics(records: &[(DecisionRecord, GroundTruth)]) -> Result<MetricsReport> {
    let confusions = records
        .iter()
        .map(|(rec, truth)| Confusion::from_decisions(truth, &rec.decisions))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&confusions)
}

/// Confusions of a run's reported decisions at every stage up to `τ`.
pub fn stagewise_confusions<F>(out: &RunOutput<F>, truth: &GroundTruth) -> Result<Vec<Confusion>> {
    out.stages
        .iter()
        .map(|s| Confusion::from_decisions(truth, &s.decisions))
        .collect()
}
