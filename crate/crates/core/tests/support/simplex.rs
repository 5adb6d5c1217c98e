//! Exhaustive search for mixing weights over a lattice on the simplex.

#![allow(dead_code)]

use std::f64::consts::PI;

fn log_lik(dens: &[Vec<f64>], w: &[f64]) -> f64 {
    dens.iter()
        .map(|row| row.iter().zip(w).map(|(d, wk)| d * wk).sum::<f64>().ln())
        .sum()
}

/// Visits every weight vector whose entries are multiples of `1/steps` and
/// returns the one with the largest log-likelihood, with that value.
pub fn best_on_lattice(z: &[f64], means: &[f64], steps: usize) -> (Vec<f64>, f64) {
    let k = means.len();
    let dens: Vec<Vec<f64>> = z
        .iter()
        .map(|&x| means.iter().map(|&mu| (-0.5 * (x - mu) * (x - mu)).exp() / (2.0 * PI).sqrt()).collect())
        .collect();
    let mut counts = vec![0usize; k];
    let mut best = (vec![0.0; k], f64::NEG_INFINITY);
    fn visit(
        j: usize,
        left: usize,
        counts: &mut Vec<usize>,
        steps: usize,
        eval: &mut dyn FnMut(&[usize]),
    ) {
        if j + 1 == counts.len() {
            counts[j] = left;
            eval(counts);
            return;
        }
        for c in 0..=left {
            counts[j] = c;
            visit(j + 1, left - c, counts, steps, eval);
        }
    }
    let mut eval = |c: &[usize]| {
        let w: Vec<f64> = c.iter().map(|&n| n as f64 / steps as f64).collect();
        let ll = log_lik(&dens, &w);
        if ll > best.1 {
            best = (w, ll);
        }
    };
    visit(0, steps, &mut counts, steps, &mut eval);
    best
}
