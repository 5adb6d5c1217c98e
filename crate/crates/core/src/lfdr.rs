//! Sequential local false discovery rate statistics.
//!
//! For coordinate `i` after `T` observations the statistic is
//!
//! ```text
//! lfdr_iT = (1−p) Π f0(x_it) / ((1−p) Π f0(x_it) + p Π f1(x_it))
//! ```
//!
//! The products are kept as log sums. The oracle statistic passes the true
//! `(p, f1)`; the data-driven statistic passes fitted `(p̂, f̂1)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{standard_normal_log_pdf, GaussianMixture, TwoGroupsModel};
use crate::scalar::Real;

/// Observations beyond this magnitude are clamped before density evaluation.
pub const CLAMP_LIMIT: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LfdrState<F> {
    cum_log_null: Vec<F>,
    cum_log_alt: Vec<F>,
    n_obs: Vec<u32>,
    clamps: u64,
}

impl<F: Real> LfdrState<F> {
    pub fn new(m: usize) -> Self {
        Self {
            cum_log_null: vec![F::zero(); m],
            cum_log_alt: vec![F::zero(); m],
            n_obs: vec![0; m],
            clamps: 0,
        }
    }

    /// Builds a state directly from accumulated sums.
    pub fn from_parts(cum_log_null: Vec<F>, cum_log_alt: Vec<F>, n_obs: Vec<u32>) -> Result<Self> {
        let m = cum_log_null.len();
        for len in [cum_log_alt.len(), n_obs.len()] {
            if len != m {
                return Err(Error::LengthMismatch { expected: m, found: len });
            }
        }
        Ok(Self {
            cum_log_null,
            cum_log_alt,
            n_obs,
            clamps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.n_obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_obs.is_empty()
    }

    pub fn n_obs(&self, i: usize) -> u32 {
        self.n_obs[i]
    }

    pub fn cum_log_null(&self, i: usize) -> F {
        self.cum_log_null[i]
    }

    pub fn cum_log_alt(&self, i: usize) -> F {
        self.cum_log_alt[i]
    }

    /// Number of observations clamped to `±CLAMP_LIMIT` so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamps
    }

    /// Adds one observation for coordinate `i` under `model`'s alternative.
    pub fn update(&mut self, i: usize, x: F, model: &TwoGroupsModel<F>) {
        self.update_with(i, x, model.alt());
    }

    /// Adds one observation for coordinate `i` under alternative density `f1`.
    pub fn update_with(&mut self, i: usize, x: F, f1: &GaussianMixture<F>) {
        let limit = F::lit(CLAMP_LIMIT);
        let x = if x.abs() > limit {
            self.clamps += 1;
            limit.copysign(x)
        } else {
            x
        };
        self.cum_log_null[i] = self.cum_log_null[i] + standard_normal_log_pdf(x);
        self.cum_log_alt[i] = self.cum_log_alt[i] + f1.log_pdf(x);
        self.n_obs[i] += 1;
    }

    /// `Σ_t [log f1(x_it) − log f0(x_it)]`.
    pub fn log_likelihood_ratio(&self, i: usize) -> F {
        self.cum_log_alt[i] - self.cum_log_null[i]
    }

    /// Posterior null probability of coordinate `i` given its history.
    ///
    /// Evaluated as a logistic function of the posterior log odds. Where the
    /// exact value is closer to 0 or 1 than the scalar type can resolve it
    /// saturates at the nearest representable value inside `(0, 1)`.
    pub fn lfdr_value(&self, i: usize, p: F) -> Result<F> {
        if self.n_obs[i] == 0 {
            return Err(Error::NoObservations(i));
        }
        Ok(lfdr_from_log_ratio(self.log_likelihood_ratio(i), p))
    }

    /// lfdr values for exactly the coordinates in `active`.
    pub fn batch_lfdr(
        &self,
        active: impl IntoIterator<Item = usize>,
        p: F,
    ) -> Result<BTreeMap<usize, F>> {
        active
            .into_iter()
            .map(|i| {
                if i >= self.len() {
                    return Err(Error::CoordinateOutOfRange { index: i, len: self.len() });
                }
                self.lfdr_value(i, p).map(|v| (i, v))
            })
            .collect()
    }
}

/// `1 / (1 + (p/(1−p)) exp(llr))`, clamped into the open unit interval.
pub fn lfdr_from_log_ratio<F: Real>(llr: F, p: F) -> F {
    // log odds of non-null vs null
    let a = (p / (F::one() - p)).ln() + llr;
    let v = if a > F::zero() {
        let e = (-a).exp();
        e / (F::one() + e)
    } else {
        F::one() / (F::one() + a.exp())
    };
    let hi = F::one() - F::epsilon() / F::lit(2.0);
    v.max(F::min_positive_value()).min(hi)
}
