//! Random micro-instances for the direct-product comparison.

#![allow(dead_code)]

use amset::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;

use super::brute::Instance;

/// At most 6 coordinates and 3 stages, with a one- or two-component alternative.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = substream(seed, &[77]);
    let m = rng.random_range(1..=6);
    let stages = rng.random_range(1..=3);
    let p = rng.random_range(0.05..0.6);
    let alpha = [0.01, 0.05, 0.1, 0.2, 0.3][rng.random_range(0..5)];
    let alt = if rng.random::<bool>() {
        vec![(rng.random_range(0.5..4.0), 1.0)]
    } else {
        let w = rng.random_range(0.2..0.8);
        vec![(rng.random_range(-3.0..-0.5), w), (rng.random_range(0.5..4.0), 1.0 - w)]
    };
    let data = (0..m)
        .map(|_| {
            let nonnull = rng.random::<f64>() < p;
            let mu = if nonnull { alt[rng.random_range(0..alt.len())].0 } else { 0.0 };
            (0..stages).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    Instance { p, alt, alpha, data }
}
