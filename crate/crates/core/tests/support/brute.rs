//! Literal re-implementation of the sequential lfdr procedures, written
//! without any of the library's numerics. Statistics are direct products of
//! densities and the step-up rule is a plain prefix search.

#![allow(dead_code)]

use std::f64::consts::PI;

pub struct Instance {
    pub p: f64,
    pub alt: Vec<(f64, f64)>,
    pub alpha: f64,
    /// `data[i][t]` is the observation of coordinate `i` at stage `t + 1`.
    pub data: Vec<Vec<f64>>,
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn f1(alt: &[(f64, f64)], x: f64) -> f64 {
    alt.iter().map(|&(mu, w)| w * phi(x - mu)).sum()
}

/// `(1−p) Π f0 / ((1−p) Π f0 + p Π f1)` over the first `t` observations.
pub fn lfdr(inst: &Instance, i: usize, t: usize) -> f64 {
    let xs = &inst.data[i][..t];
    let null: f64 = xs.iter().map(|&x| phi(x)).product();
    let alt: f64 = xs.iter().map(|&x| f1(&inst.alt, x)).product();
    (1.0 - inst.p) * null / ((1.0 - inst.p) * null + inst.p * alt)
}

/// Coordinates rejected by the compound rule: the `r` smallest statistics
/// for the largest `r` whose average is at most `alpha`.
pub fn compound(stats: &[(usize, f64)], alpha: f64) -> Vec<usize> {
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best = 0;
    for r in 1..=sorted.len() {
        let avg: f64 = sorted[..r].iter().map(|s| s.1).sum::<f64>() / r as f64;
        if avg <= alpha {
            best = r;
        }
    }
    let mut out: Vec<usize> = sorted[..best].iter().map(|s| s.0).collect();
    out.sort_unstable();
    out
}

pub fn simple(stats: &[(usize, f64)], alpha: f64) -> Vec<usize> {
    stats.iter().filter(|s| s.1 <= alpha).map(|s| s.0).collect()
}

pub struct BruteOutput {
    pub decisions: Vec<bool>,
    /// Cumulative decisions after each stage.
    pub per_stage: Vec<Vec<bool>>,
    pub stopping_stage: usize,
}

/// Adaptive procedure: active coordinates are thresholded each stage and the
/// rejected ones stop sampling.
pub fn amset(inst: &Instance, use_simple: bool, stop_at_first: bool) -> BruteOutput {
    let m = inst.data.len();
    let horizon = inst.data[0].len();
    let mut active: Vec<usize> = (0..m).collect();
    let mut decisions = vec![false; m];
    let mut per_stage = Vec::new();
    for t in 1..=horizon {
        let stats: Vec<(usize, f64)> = active.iter().map(|&i| (i, lfdr(inst, i, t))).collect();
        let rej = if use_simple { simple(&stats, inst.alpha) } else { compound(&stats, inst.alpha) };
        for &i in &rej {
            decisions[i] = true;
        }
        active.retain(|i| !rej.contains(i));
        per_stage.push(decisions.clone());
        if active.is_empty() || (stop_at_first && !rej.is_empty()) {
            break;
        }
    }
    BruteOutput {
        stopping_stage: per_stage.len(),
        decisions,
        per_stage,
    }
}

/// Non-adaptive procedure: all coordinates are sampled and re-decided each stage.
pub fn mset(inst: &Instance, use_simple: bool, stop_at_first: bool) -> BruteOutput {
    let m = inst.data.len();
    let horizon = inst.data[0].len();
    let mut per_stage = Vec::new();
    for t in 1..=horizon {
        let stats: Vec<(usize, f64)> = (0..m).map(|i| (i, lfdr(inst, i, t))).collect();
        let rej = if use_simple { simple(&stats, inst.alpha) } else { compound(&stats, inst.alpha) };
        let mut d = vec![false; m];
        for i in rej.iter().copied() {
            d[i] = true;
        }
        let any = !rej.is_empty();
        per_stage.push(d);
        if stop_at_first && any {
            break;
        }
    }
    BruteOutput {
        decisions: per_stage.last().cloned().unwrap_or_default(),
        stopping_stage: per_stage.len(),
        per_stage,
    }
}
