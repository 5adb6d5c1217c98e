//! Two-groups data model: a standard-normal null, a unit-variance Gaussian
//! location mixture as the alternative, Bernoulli ground truth and stagewise
//! sampling.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{ln_sqrt_2pi, log_sum_exp, Real};

/// `log φ(x)` for the standard normal density.
#[inline]
pub fn standard_normal_log_pdf<F: Real>(x: F) -> F {
    -(x * x) / F::lit(2.0) - ln_sqrt_2pi::<F>()
}

/// Mixture of unit-variance normals, `Σ w_k N(μ_k, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<F> {
    means: Vec<F>,
    weights: Vec<F>,
}

impl<F: Real> GaussianMixture<F> {
    /// Builds a mixture from `(mean, weight)` pairs. Weights must be
    /// nonnegative and sum to one within `1e-9`.
    pub fn new(components: impl IntoIterator<Item = (F, F)>) -> Result<Self> {
        let (means, weights): (Vec<F>, Vec<F>) = components.into_iter().unzip();
        if means.is_empty() {
            return Err(Error::EmptyInput("mixture components"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mean", "component means must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < F::zero()) {
            return Err(Error::invalid("weight", "weights must be nonnegative"));
        }
        let total: F = weights.iter().copied().sum();
        if (total - F::one()).abs().as_f64() > 1e-9 {
            return Err(Error::invalid(
                "weight",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        Ok(Self { means, weights })
    }

    /// Builds a mixture after rescaling nonnegative weights to sum to one.
    pub fn normalized(components: impl IntoIterator<Item = (F, F)>) -> Result<Self> {
        let comps: Vec<(F, F)> = components.into_iter().collect();
        let total: F = comps.iter().map(|c| c.1).sum();
        if !(total > F::zero()) || !total.is_finite() {
            return Err(Error::invalid("weight", "total weight must be positive"));
        }
        Self::new(comps.into_iter().map(|(m, w)| (m, w / total)))
    }

    /// Single component `N(mu, 1)`.
    pub fn point(mu: F) -> Self {
        Self {
            means: vec![mu],
            weights: vec![F::one()],
        }
    }

    /// The null density `N(0, 1)` as a one-component mixture.
    pub fn standard() -> Self {
        Self::point(F::zero())
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[F] {
        &self.means
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn components(&self) -> impl Iterator<Item = (F, F)> + '_ {
        self.means.iter().copied().zip(self.weights.iter().copied())
    }

    /// Mean of the mixture, `Σ w_k μ_k`.
    pub fn mean(&self) -> F {
        self.components().map(|(m, w)| m * w).sum()
    }

    /// `log Σ_k w_k φ(x − μ_k)`, evaluated by log-sum-exp.
    pub fn log_pdf(&self, x: F) -> F {
        if self.means.len() == 1 {
            return self.weights[0].ln() + standard_normal_log_pdf(x - self.means[0]);
        }
        let terms: Vec<F> = self
            .components()
            .filter(|&(_, w)| w > F::zero())
            .map(|(m, w)| w.ln() + standard_normal_log_pdf(x - m))
            .collect();
        log_sum_exp(&terms)
    }

    /// Picks a component mean with probability equal to its weight.
    pub fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, w) in self.components() {
            acc += w.as_f64();
            if u < acc {
                return m;
            }
        }
        // Rounding left `acc` marginally below one; take the last positive weight.
        self.means
            .iter()
            .zip(&self.weights)
            .rev()
            .find(|&(_, &w)| w > F::zero())
            .map(|(&m, _)| m)
            .unwrap_or(self.means[0])
    }

    /// One draw: component by weight, then unit-variance noise around its mean.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        self.sample_mean(rng) + standard_normal(rng)
    }
}

/// Free-function form of [`GaussianMixture::log_pdf`].
pub fn mixture_log_pdf<F: Real>(gm: &GaussianMixture<F>, x: F) -> F {
    gm.log_pdf(x)
}

#[inline]
pub(crate) fn standard_normal<F: Real, R: Rng + ?Sized>(rng: &mut R) -> F {
    let z: f64 = rng.sample(StandardNormal);
    F::lit(z)
}

/// `(1 − p) N(0,1) + p f₁` with `0 < p < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupsModel<F> {
    p: F,
    alt: GaussianMixture<F>,
}

impl<F: Real> TwoGroupsModel<F> {
    pub fn new(p: F, alt: GaussianMixture<F>) -> Result<Self> {
        if !(p > F::zero() && p < F::one()) {
            return Err(Error::invalid("p", format!("{p} not in (0, 1)")));
        }
        Ok(Self { p, alt })
    }

    /// Non-null proportion.
    pub fn p(&self) -> F {
        self.p
    }

    pub fn alt(&self) -> &GaussianMixture<F> {
        &self.alt
    }

    pub fn null_log_pdf(&self, x: F) -> F {
        standard_normal_log_pdf(x)
    }

    pub fn alt_log_pdf(&self, x: F) -> F {
        self.alt.log_pdf(x)
    }
}

/// Indicator vector `θ`: `true` marks a non-null coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundTruth {
    pub theta: Vec<bool>,
}

impl GroundTruth {
    pub fn new(theta: Vec<bool>) -> Self {
        Self { theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_nonnull(&self, i: usize) -> bool {
        self.theta[i]
    }

    pub fn count_nonnull(&self) -> usize {
        self.theta.iter().filter(|&&t| t).count()
    }
}

/// `m` independent Bernoulli(`p`) indicators.
pub fn sample_ground_truth<F: Real, R: Rng + ?Sized>(
    m: usize,
    p: F,
    rng: &mut R,
) -> Result<GroundTruth> {
    if m == 0 {
        return Err(Error::invalid("m", "need at least one coordinate"));
    }
    if !(p > F::zero() && p < F::one()) {
        return Err(Error::invalid("p", format!("{p} not in (0, 1)")));
    }
    let p = p.as_f64();
    let theta = (0..m).map(|_| rng.random::<f64>() < p).collect();
    Ok(GroundTruth { theta })
}

/// One stage of observations for the active coordinates. Non-null draws pick a
/// fresh mixture component for every observation.
pub fn sample_stage<F: Real, R: Rng + ?Sized>(
    model: &TwoGroupsModel<F>,
    truth: &GroundTruth,
    active: &[usize],
    rng: &mut R,
) -> BTreeMap<usize, F> {
    active
        .iter()
        .map(|&i| {
            let x = if truth.theta[i] {
                model.alt.sample(rng)
            } else {
                standard_normal(rng)
            };
            (i, x)
        })
        .collect()
}

/// Per-coordinate effect sizes held fixed across stages: `0` for nulls and a
/// mean drawn from `alt` for non-nulls.
pub fn sample_effects<F: Real, R: Rng + ?Sized>(
    alt: &GaussianMixture<F>,
    truth: &GroundTruth,
    rng: &mut R,
) -> Vec<F> {
    truth
        .theta
        .iter()
        .map(|&t| if t { alt.sample_mean(rng) } else { F::zero() })
        .collect()
}

/// One stage of `effect_i + N(0, 1)` draws for the active coordinates.
pub fn sample_stage_with_effects<F: Real, R: Rng + ?Sized>(
    effects: &[F],
    active: &[usize],
    rng: &mut R,
) -> BTreeMap<usize, F> {
    active
        .iter()
        .map(|&i| (i, effects[i] + standard_normal(rng)))
        .collect()
}

/// Supplies observations for a set of coordinates at a given stage.
pub trait ObservationSource<F> {
    fn num_coordinates(&self) -> usize;

    /// Observations for `active` (ascending) at `stage` (1-based), in the same order.
    fn observe(&mut self, stage: usize, active: &[usize]) -> Vec<(usize, F)>;
}

/// Dense `m × T` matrix of observations, row-major by coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix<F> {
    m: usize,
    stages: usize,
    data: Vec<F>,
}

impl<F: Real> ObservationMatrix<F> {
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::EmptyInput("observation rows"));
        }
        let stages = rows[0].len();
        if stages == 0 {
            return Err(Error::EmptyInput("observation columns"));
        }
        let mut data = Vec::with_capacity(m * stages);
        for row in rows {
            if row.len() != stages {
                return Err(Error::LengthMismatch {
                    expected: stages,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { m, stages, data })
    }

    /// Fills the full matrix stage by stage. `stage_rng(t)` supplies the stream
    /// for 1-based stage `t`, so a stage's draws are independent of other stages.
    pub fn simulate<R: Rng>(
        effects: &[F],
        stages: usize,
        mut stage_rng: impl FnMut(usize) -> R,
    ) -> Self {
        let m = effects.len();
        let mut data = vec![F::zero(); m * stages];
        let all: Vec<usize> = (0..m).collect();
        for t in 1..=stages {
            let mut rng = stage_rng(t);
            for (i, x) in sample_stage_with_effects(effects, &all, &mut rng) {
                data[i * stages + t - 1] = x;
            }
        }
        Self { m, stages, data }
    }

    pub fn num_stages(&self) -> usize {
        self.stages
    }

    pub fn get(&self, i: usize, stage: usize) -> F {
        self.data[i * self.stages + stage - 1]
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.stages..(i + 1) * self.stages]
    }

    pub fn values(&self) -> &[F] {
        &self.data
    }

    /// A replayable view that serves observations stage by stage.
    pub fn stream(&self) -> MatrixStream<'_, F> {
        MatrixStream { matrix: self }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MatrixStream<'a, F> {
    matrix: &'a ObservationMatrix<F>,
}

impl<F: Real> ObservationSource<F> for MatrixStream<'_, F> {
    fn num_coordinates(&self) -> usize {
        self.matrix.m
    }

    fn observe(&mut self, stage: usize, active: &[usize]) -> Vec<(usize, F)> {
        assert!(
            stage >= 1 && stage <= self.matrix.stages,
            "stage {stage} beyond the {} recorded stages",
            self.matrix.stages
        );
        active
            .iter()
            .map(|&i| (i, self.matrix.get(i, stage)))
            .collect()
    }
}
