//! Always-valid p-values.
//!
//! The mSPRT statistic for unit-variance normal observations against
//! `θ0 = 0` is `Λ_T = ∫ Π_t φ(x_t − θ)/φ(x_t) dH(θ)`. With `S_T = Σ x_t`:
//!
//! * point prior at `μ`: `log Λ_T = μ S_T − T μ²/2`
//! * `H = N(0, τ²)`: `log Λ_T = −½ log(1 + Tτ²) + τ² S_T² / (2(1 + Tτ²))`
//!
//! The p-value process is `p_0 = 1, p_T = min(p_{T−1}, 1/Λ_T)`. The same
//! machinery runs on the likelihood ratio `L_T = Π f̂1(x_t)/f0(x_t)`, which is
//! a nonnegative mean-one martingale under the null.

use crate::error::{Error, Result};
use crate::lfdr::CLAMP_LIMIT;
use crate::model::{standard_normal_log_pdf, GaussianMixture, ObservationSource};
use crate::procedures::{DecisionRecord, RunOutput, StageSummary, StoppingRule, Threshold};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec<F> {
    /// All prior mass at `mu`.
    Point { mu: F },
    /// `N(0, tau_sq)`.
    Normal { tau_sq: F },
}

impl<F: Real> PriorSpec<F> {
    pub fn normal(tau_sq: F) -> Result<Self> {
        if !(tau_sq > F::zero()) || !tau_sq.is_finite() {
            return Err(Error::invalid("tau_sq", format!("{tau_sq} must be positive")));
        }
        Ok(Self::Normal { tau_sq })
    }

    /// Closed-form `log Λ_T` from the running sum `S_T` and count `T`.
    pub fn log_lambda(&self, sum_x: F, n: usize) -> F {
        let t = F::from_count(n);
        let two = F::lit(2.0);
        match *self {
            PriorSpec::Point { mu } => mu * sum_x - t * mu * mu / two,
            PriorSpec::Normal { tau_sq } => {
                let v = F::one() + t * tau_sq;
                -v.ln() / two + tau_sq * sum_x * sum_x / (two * v)
            }
        }
    }
}

/// Per-coordinate likelihood-ratio statistics and their running-minimum p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct AvpvState<F> {
    sum_x: Vec<F>,
    n: Vec<usize>,
    log_lambda: Vec<F>,
    p_running: Vec<F>,
}

impl<F: Real> AvpvState<F> {
    pub fn new(m: usize) -> Self {
        Self {
            sum_x: vec![F::zero(); m],
            n: vec![0; m],
            log_lambda: vec![F::zero(); m],
            p_running: vec![F::one(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn n(&self, i: usize) -> usize {
        self.n[i]
    }

    pub fn sum_x(&self, i: usize) -> F {
        self.sum_x[i]
    }

    pub fn log_lambda(&self, i: usize) -> F {
        self.log_lambda[i]
    }

    pub fn p_value(&self, i: usize) -> F {
        self.p_running[i]
    }

    pub fn p_values(&self) -> &[F] {
        &self.p_running
    }

    fn refresh_p(&mut self, i: usize) {
        let inv = (-self.log_lambda[i]).exp().min(F::one());
        self.p_running[i] = self.p_running[i].min(inv);
    }

    /// Adds `x` to coordinate `i` and recomputes its mSPRT statistic under `prior`.
    pub fn msprt_update(&mut self, i: usize, x: F, prior: &PriorSpec<F>) {
        self.sum_x[i] = self.sum_x[i] + x;
        self.n[i] += 1;
        self.log_lambda[i] = prior.log_lambda(self.sum_x[i], self.n[i]);
        self.refresh_p(i);
    }

    /// Adds `x` to coordinate `i`'s likelihood ratio `Π f̂1(x)/f0(x)`.
    ///
    /// Observations are clamped like the lfdr accumulator so that
    /// [`martingale_from_lfdr`] reproduces `L` from the matching lfdr value.
    pub fn lfdr_avpv_update(&mut self, i: usize, x: F, f1_hat: &GaussianMixture<F>) {
        let limit = F::lit(CLAMP_LIMIT);
        let xc = if x.abs() > limit { limit.copysign(x) } else { x };
        self.sum_x[i] = self.sum_x[i] + x;
        self.n[i] += 1;
        self.log_lambda[i] = self.log_lambda[i] + f1_hat.log_pdf(xc) - standard_normal_log_pdf(xc);
        self.refresh_p(i);
    }
}

/// `L = ((1 − p̂)/p̂) · ((1 − lfdr)/lfdr)`, the likelihood ratio implied by an lfdr value.
pub fn martingale_from_lfdr<F: Real>(lfdr: F, p_hat: F) -> F {
    (F::one() - p_hat) / p_hat * (F::one() - lfdr) / lfdr
}

/// Which p-value process drives a baseline run.
#[derive(Debug, Clone, PartialEq)]
pub enum PValueProcess<F> {
    Msprt(PriorSpec<F>),
    LfdrMartingale(GaussianMixture<F>),
}

impl<F: Real> PValueProcess<F> {
    pub fn update(&self, state: &mut AvpvState<F>, i: usize, x: F) {
        match self {
            PValueProcess::Msprt(prior) => state.msprt_update(i, x, prior),
            PValueProcess::LfdrMartingale(f1) => state.lfdr_avpv_update(i, x, f1),
        }
    }
}

/// Benjamini-Hochberg step-up. Returns rejected positions, ascending.
pub fn bh<F: Real>(pvalues: &[F], alpha: F) -> Result<Vec<usize>> {
    for (index, &p) in pvalues.iter().enumerate() {
        if !(p >= F::zero() && p <= F::one()) {
            return Err(Error::OutOfUnitInterval {
                index,
                value: p.as_f64(),
            });
        }
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).expect("checked finite").then(a.cmp(&b)));
    let mf = F::from_count(m);
    let k = order
        .iter()
        .enumerate()
        .filter(|&(rank, &i)| pvalues[i] <= F::from_count(rank + 1) * alpha / mf)
        .map(|(rank, _)| rank + 1)
        .last();
    let Some(k) = k else {
        return Ok(Vec::new());
    };
    let cutoff = pvalues[order[k - 1]];
    Ok((0..m).filter(|&i| pvalues[i] <= cutoff).collect())
}

/// Always-valid p-values + BH at every stage, with rejections kept once made.
pub fn optimizely_run<F: Real, S: ObservationSource<F> + ?Sized>(
    source: &mut S,
    process: &PValueProcess<F>,
    alpha: F,
    max_stages: usize,
    stopping: StoppingRule,
) -> Result<RunOutput<F>> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1)")));
    }
    if max_stages == 0 {
        return Err(Error::invalid("max_stages", "need at least one stage"));
    }
    let m = source.num_coordinates();
    if m == 0 {
        return Err(Error::EmptyInput("coordinates"));
    }
    let all: Vec<usize> = (0..m).collect();
    let mut state = AvpvState::new(m);
    let mut decisions = vec![false; m];
    let mut rejection_stage = vec![None; m];
    let mut stages = Vec::new();

    for t in 1..=max_stages {
        for (i, x) in source.observe(t, &all) {
            process.update(&mut state, i, x);
        }
        let bh_set = bh(state.p_values(), alpha)?;
        let cutoff = bh_set
            .iter()
            .map(|&i| state.p_value(i))
            .fold(None, |acc: Option<F>, v| Some(acc.map_or(v, |a| a.max(v))));
        let mut newly = Vec::new();
        for &i in &bh_set {
            if !decisions[i] {
                decisions[i] = true;
                rejection_stage[i] = Some(t);
                newly.push(i);
            }
        }
        let rejected_now = !newly.is_empty();
        stages.push(StageSummary {
            stage: t,
            rejected: newly,
            decisions: decisions.clone(),
            threshold: Threshold { r: bh_set.len(), cutoff },
            sampled: m,
        });
        let stop = match stopping {
            StoppingRule::Horizon => false,
            StoppingRule::FirstRejection => rejected_now,
            StoppingRule::AtStage(s) => t >= s,
        };
        if stop {
            break;
        }
    }

    Ok(RunOutput {
        record: DecisionRecord {
            decisions,
            rejection_stage,
            stopping_stage: stages.len(),
        },
        stages,
        clamps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfdr::LfdrState;
    use crate::model::ObservationMatrix;
    use proptest::prelude::*;

    #[test]
    fn msprt_examples() {
        let mut s = AvpvState::<f64>::new(2);
        s.msprt_update(0, 0.0, &PriorSpec::Point { mu: 2.0 });
        assert!((s.log_lambda(0) + 2.0).abs() < 1e-15);
        assert!((s.log_lambda(0).exp() - 0.135_335).abs() < 1e-6);
        assert_eq!(s.p_value(0), 1.0);

        for x in [1.0, -2.0, 3.5] {
            s.msprt_update(1, x, &PriorSpec::Point { mu: 0.0 });
            assert_eq!(s.log_lambda(1), 0.0);
        }

        let mut s = AvpvState::<f64>::new(1);
        s.msprt_update(0, 0.0, &PriorSpec::normal(2.0).unwrap());
        assert!((s.log_lambda(0).exp() - (1.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(PriorSpec::normal(0.0).is_err());
    }

    /// Composite Simpson on the defining integral over θ.
    fn quad_log_lambda(sum: f64, n: usize, tau_sq: f64) -> f64 {
        let t = n as f64;
        let mode = tau_sq * sum / (1.0 + t * tau_sq);
        let sd = (tau_sq / (1.0 + t * tau_sq)).sqrt();
        // Integrand rescaled by its maximum to avoid overflow.
        let g = |th: f64| th * sum - t * th * th / 2.0 - th * th / (2.0 * tau_sq);
        let gmax = g(mode);
        let f = |th: f64| (g(th) - gmax).exp() / (2.0 * std::f64::consts::PI * tau_sq).sqrt();
        let (a, b) = (mode - 14.0 * sd, mode + 14.0 * sd);
        let panels = 8000;
        let h = (b - a) / panels as f64;
        let mut acc = f(a) + f(b);
        for k in 1..panels {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        (acc * h / 3.0).ln() + gmax
    }

    #[test]
    fn normal_prior_matches_quadrature() {
        let prior = PriorSpec::Normal { tau_sq: 2.0 };
        for (sum, n) in [(0.0, 1), (3.0, 4), (-50.0, 100), (50.0, 1), (12.5, 37)] {
            let closed = prior.log_lambda(sum, n);
            let quad = quad_log_lambda(sum, n, 2.0);
            assert!((closed - quad).abs() < 1e-8, "S={sum} T={n}: {closed} vs {quad}");
        }
    }

    #[test]
    fn lfdr_martingale_examples() {
        let mut s = AvpvState::<f64>::new(2);
        let null = GaussianMixture::standard();
        for x in [0.3, -1.2, 2.5] {
            s.lfdr_avpv_update(0, x, &null);
        }
        assert_eq!(s.log_lambda(0), 0.0);
        assert_eq!(s.p_value(0), 1.0);
        s.lfdr_avpv_update(1, 0.0, &GaussianMixture::point(2.0));
        assert!((s.log_lambda(1) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn lfdr_identity_holds() {
        let f1 = GaussianMixture::new([(1.32, 0.5), (1.6, 0.5)]).unwrap();
        let p_hat = 0.05;
        let xs = [0.4, 2.2, -0.7, 1.9, 3.0];
        let mut av = AvpvState::<f64>::new(1);
        let mut lf = LfdrState::new(1);
        for &x in &xs {
            av.lfdr_avpv_update(0, x, &f1);
            lf.update_with(0, x, &f1);
            let t_dd = lf.lfdr_value(0, p_hat).unwrap();
            let l = av.log_lambda(0).exp();
            assert!((martingale_from_lfdr(t_dd, p_hat) - l).abs() <= 1e-10 * l.max(1.0));
        }
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh(&[0.01, 0.04, 0.9], 0.05).unwrap(), vec![0]);
        assert!(bh(&[1.0, 1.0, 1.0], 0.05).unwrap().is_empty());
        assert_eq!(bh(&[0.0, 0.0, 0.0], 0.05).unwrap(), vec![0, 1, 2]);
        assert!(bh(&[0.1, 1.2], 0.05).is_err());
        assert!(bh(&[f64::NAN], 0.05).is_err());
        // Step-up: a large later rank can pull in earlier ones.
        assert_eq!(bh(&[0.04, 0.03, 0.02, 0.035], 0.05).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(bh(&[0.05], 0.05).unwrap(), vec![0]);
        assert!(bh(&[0.0501], 0.05).unwrap().is_empty());
    }

    #[test]
    fn optimizely_single_stage_is_bh_on_stage_one() {
        let rows: Vec<Vec<f64>> = [4.0, 0.2, 3.1, -1.0, 2.9, 5.0].iter().map(|&x| vec![x, 0.0]).collect();
        let obs = ObservationMatrix::from_rows(rows.clone()).unwrap();
        let proc_ = PValueProcess::Msprt(PriorSpec::Point { mu: 2.0 });
        let out = optimizely_run(&mut obs.stream(), &proc_, 0.05, 1, StoppingRule::Horizon).unwrap();
        let mut s = AvpvState::<f64>::new(6);
        for (i, r) in rows.iter().enumerate() {
            s.msprt_update(i, r[0], &PriorSpec::Point { mu: 2.0 });
        }
        let expect = bh(s.p_values(), 0.05).unwrap();
        let got: Vec<usize> = (0..6).filter(|&i| out.record.decisions[i]).collect();
        assert_eq!(got, expect);
        assert!(!expect.is_empty());
    }

    #[test]
    fn optimizely_rejections_persist() {
        let rows = vec![vec![6.0, -6.0, -6.0], vec![0.0, 0.0, 0.0], vec![0.1, 0.0, 0.2]];
        let obs = ObservationMatrix::from_rows(rows).unwrap();
        let proc_ = PValueProcess::Msprt(PriorSpec::Point { mu: 2.0 });
        let out = optimizely_run(&mut obs.stream(), &proc_, 0.05, 3, StoppingRule::Horizon).unwrap();
        assert_eq!(out.record.decisions, vec![true, false, false]);
        assert_eq!(out.record.rejection_stage[0], Some(1));
        for s in &out.stages {
            assert!(s.decisions[0]);
        }
    }

    proptest! {
        #[test]
        fn p_values_are_nonincreasing(
            xs in prop::collection::vec(-4.0..4.0f64, 1..30),
            mu in -3.0..3.0f64,
            tau_sq in 0.1..5.0f64,
        ) {
            let priors = [PriorSpec::Point { mu }, PriorSpec::Normal { tau_sq }];
            for prior in priors {
                let mut s = AvpvState::<f64>::new(1);
                let mut prev = 1.0;
                for &x in &xs {
                    s.msprt_update(0, x, &prior);
                    prop_assert!(s.p_value(0) <= prev && s.p_value(0) > 0.0);
                    prev = s.p_value(0);
                }
            }
            let mut s = AvpvState::<f64>::new(1);
            let f1 = GaussianMixture::point(mu);
            let mut prev = 1.0;
            for &x in &xs {
                s.lfdr_avpv_update(0, x, &f1);
                prop_assert!(s.p_value(0) <= prev);
                prev = s.p_value(0);
            }
        }

        #[test]
        fn bh_single_hypothesis_is_plain_comparison(p in 0.0..1.0f64, alpha in 0.001..0.5f64) {
            prop_assert_eq!(bh(&[p], alpha).unwrap().len() == 1, p <= alpha);
        }
    }
}
