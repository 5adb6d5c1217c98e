//! Empirical-Bayes estimation of `(p, f1)` from historical z-scores.
//!
//! 1. Non-null proportion from the empirical characteristic function.
//! 2. Kiefer-Wolfowitz NPMLE of the mixing distribution on a fixed grid of
//!    unit-variance normal locations, fitted by EM.
//! 3. Recovery of the alternative density from the fitted mixture, either by
//!    a hard `|μ| ≥ c` cut or by assigning the `1 − p̂` mass closest to zero
//!    to the null.

use crate::error::{Error, Result};
use crate::model::{standard_normal_log_pdf, GaussianMixture, TwoGroupsModel};
use crate::scalar::Real;

/// Minimum sample size accepted by the estimators.
pub const MIN_SAMPLES: usize = 100;

/// Weights below this are dropped from a deconvolution result.
pub const PRUNE_WEIGHT: f64 = 1e-8;

/// Components this close to zero are treated as the null itself.
const NULL_LOCATION_TOL: f64 = 1e-6;

/// Tuning of the characteristic-function proportion estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionOptions {
    /// Frequencies run over `(0, gamma·sqrt(2 log n)]`.
    pub gamma: f64,
    pub t_points: usize,
    pub quad_nodes: usize,
}

impl Default for ProportionOptions {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            t_points: 100,
            quad_nodes: 64,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// Non-null proportion with the default tuning.
pub fn estimate_proportion<F: Real>(z: &[F], gamma: F) -> Result<F> {
    estimate_proportion_with(
        z,
        ProportionOptions {
            gamma: gamma.as_f64(),
            ..ProportionOptions::default()
        },
    )
}

/// Characteristic-function estimator of the non-null proportion.
///
/// For each frequency `t` on the grid,
/// `p̂(t) = 1 − (1/n) Σ_j κ(t, z_j)` with
/// `κ(t, x) = ∫_{−1}^{1} (1 − |s|) cos(t s x) e^{t² s²/2} ds`,
/// integrated by Gauss-Legendre over `s ∈ [0, 1]` using the integrand's
/// symmetry. Returns `sup_t p̂(t)` clipped to `[0, 1)`.
pub fn estimate_proportion_with<F: Real>(z: &[F], opts: ProportionOptions) -> Result<F> {
    let n = z.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewObservations {
            min: MIN_SAMPLES,
            found: n,
        });
    }
    if !(opts.gamma > 0.0) || opts.t_points == 0 || opts.quad_nodes == 0 {
        return Err(Error::invalid("options", "gamma, t_points and quad_nodes must be positive"));
    }
    let z: Vec<f64> = z.iter().map(|v| v.as_f64()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("z", "observations must be finite"));
    }
    let (nodes, weights) = gauss_legendre(opts.quad_nodes);
    // Map to s ∈ [0, 1]; the factor 2 from symmetry cancels the Jacobian 1/2.
    let s: Vec<f64> = nodes.iter().map(|x| (x + 1.0) / 2.0).collect();
    let t_max = opts.gamma * (2.0 * (n as f64).ln()).sqrt();
    let nf = n as f64;

    let mut best = f64::NEG_INFINITY;
    for j in 1..=opts.t_points {
        let t = t_max * j as f64 / opts.t_points as f64;
        let mut kappa_mean = 0.0;
        for (&sk, &wk) in s.iter().zip(&weights) {
            let u = t * sk;
            let mean_cos = z.iter().map(|&x| (u * x).cos()).sum::<f64>() / nf;
            kappa_mean += wk * (1.0 - sk) * (u * u / 2.0).exp() * mean_cos;
        }
        best = best.max(1.0 - kappa_mean);
    }
    let hi = 1.0 - f64::EPSILON;
    Ok(F::lit(best.clamp(0.0, hi)))
}

/// Equally spaced grid of candidate component means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl GridSpec {
    /// `n_points` points spanning `[min z − 1, max z + 1]`.
    pub fn auto<F: Real>(z: &[F], n_points: usize) -> Self {
        let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v.as_f64()), hi.max(v.as_f64()))
        });
        Self {
            lo: lo - 1.0,
            hi: hi + 1.0,
            n_points,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self.n_points {
            0 => Vec::new(),
            1 => vec![(self.lo + self.hi) / 2.0],
            k => (0..k)
                .map(|j| self.lo + (self.hi - self.lo) * j as f64 / (k - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvolutionResult<F> {
    /// Retained grid locations, strictly ascending.
    pub grid_means: Vec<F>,
    /// Weights on `grid_means`, summing to one.
    pub weights: Vec<F>,
    pub log_likelihood: F,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood before each EM update and after the last one.
    pub trace: Vec<F>,
    /// Iterations whose log-likelihood dropped by more than rounding noise.
    pub ascent_violations: usize,
}

impl<F: Real> DeconvolutionResult<F> {
    pub fn components(&self) -> impl Iterator<Item = (F, F)> + '_ {
        self.grid_means.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn to_mixture(&self) -> Result<GaussianMixture<F>> {
        GaussianMixture::normalized(self.components())
    }
}

/// Unit-variance normal likelihoods, each row scaled by its maximum.
struct Likelihoods<F> {
    rows: usize,
    cols: usize,
    scaled: Vec<F>,
    log_row_max: F,
}

impl<F: Real> Likelihoods<F> {
    fn new(z: &[F], grid: &[F]) -> Self {
        let cols = grid.len();
        let mut scaled = Vec::with_capacity(z.len() * cols);
        let mut log_row_max = F::zero();
        for &x in z {
            let logs: Vec<F> = grid.iter().map(|&mu| standard_normal_log_pdf(x - mu)).collect();
            let mx = logs.iter().copied().fold(F::neg_infinity(), F::max);
            log_row_max = log_row_max + mx;
            scaled.extend(logs.into_iter().map(|l| (l - mx).exp()));
        }
        Self {
            rows: z.len(),
            cols,
            scaled,
            log_row_max,
        }
    }

    fn row(&self, i: usize) -> &[F] {
        &self.scaled[i * self.cols..(i + 1) * self.cols]
    }

    /// Marginal densities (scaled) and the log-likelihood at `w`.
    fn marginals(&self, w: &[F], out: &mut [F]) -> F {
        let mut ll = self.log_row_max;
        for (i, f) in out.iter_mut().enumerate() {
            let v = dot(self.row(i), w);
            *f = v;
            ll = ll + v.ln();
        }
        ll
    }

    /// Log-likelihood at `w` together with the EM numerators
    /// `g_k = Σ_i L_ik / f_i`, in a single sweep over the matrix.
    fn sweep(&self, w: &[F], g: &mut [F]) -> F {
        g.iter_mut().for_each(|v| *v = F::zero());
        let mut ll = self.log_row_max;
        for i in 0..self.rows {
            let row = self.row(i);
            let fi = dot(row, w);
            ll = ll + fi.ln();
            let inv = F::one() / fi;
            for (gk, &l) in g.iter_mut().zip(row) {
                *gk = *gk + l * inv;
            }
        }
        ll
    }

    fn log_likelihood(&self, w: &[F]) -> F {
        let mut buf = vec![F::zero(); self.rows];
        self.marginals(w, &mut buf)
    }
}

/// Dot product with eight independent partial sums.
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: F = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        let x: &[F; 8] = x.try_into().expect("chunk of eight");
        let y: &[F; 8] = y.try_into().expect("chunk of eight");
        for j in 0..8 {
            acc[j] = acc[j] + x[j] * y[j];
        }
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

/// Mixture log-likelihood `Σ_i log Σ_k w_k φ(z_i − μ_k)`.
pub fn mixture_log_likelihood<F: Real>(z: &[F], means: &[F], weights: &[F]) -> F {
    Likelihoods::new(z, means).log_likelihood(weights)
}

/// Iteration scheme for the EM fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmScheme {
    /// One multiplicative update `w_k ← w_k · (1/n) Σ_i L_ik / f_i` per iteration.
    #[default]
    Plain,
    /// Squared extrapolation over two plain updates. An extrapolated point is
    /// kept only if its log-likelihood is at least that of the second plain
    /// update, so the sequence stays monotone and has the same fixed points.
    /// The stopping rule is applied per extrapolation cycle.
    Squarem,
}

/// Kiefer-Wolfowitz NPMLE over a fixed grid, by plain EM from uniform
/// weights. See [`npmle_deconvolve_with`].
pub fn npmle_deconvolve<F: Real>(
    z: &[F],
    grid: GridSpec,
    tol: F,
    max_iter: usize,
) -> Result<DeconvolutionResult<F>> {
    npmle_deconvolve_with(z, grid, tol, max_iter, EmScheme::default())
}

/// Stops when the relative log-likelihood gain of an iteration falls below
/// `tol` or after `max_iter` iterations; in the latter case `converged` is
/// false. Weights under [`PRUNE_WEIGHT`] are removed from the returned mixture.
///
/// `trace` holds the log-likelihood of every evaluated iterate that the
/// sequence passed through, starting from the uniform weights.
pub fn npmle_deconvolve_with<F: Real>(
    z: &[F],
    grid: GridSpec,
    tol: F,
    max_iter: usize,
    scheme: EmScheme,
) -> Result<DeconvolutionResult<F>> {
    if z.len() < MIN_SAMPLES {
        return Err(Error::TooFewObservations {
            min: MIN_SAMPLES,
            found: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("z", "observations must be finite"));
    }
    if grid.n_points == 0 || !(grid.hi >= grid.lo) {
        return Err(Error::invalid("grid", "need a nonempty grid with lo ≤ hi"));
    }
    let means: Vec<F> = grid.points().into_iter().map(F::lit).collect();
    em_on_grid(z, &means, tol, max_iter, scheme)
}

/// Weights, their log-likelihood and the EM numerators at those weights.
struct Iterate<F> {
    w: Vec<F>,
    ll: F,
    g: Vec<F>,
}

impl<F: Real> Iterate<F> {
    fn at(lik: &Likelihoods<F>, w: Vec<F>) -> Self {
        let mut g = vec![F::zero(); w.len()];
        let ll = lik.sweep(&w, &mut g);
        Self { w, ll, g }
    }

    /// One plain EM update.
    ///
    /// Weights that decay below `sqrt(min_positive)` are set to zero, where
    /// EM keeps them. Left alone they would reach the subnormal range, and
    /// arithmetic on subnormals is slow enough to dominate the run time.
    fn em(&self, lik: &Likelihoods<F>) -> Self {
        let n = F::from_count(lik.rows);
        let floor = F::min_positive_value().sqrt();
        let mut w: Vec<F> = self
            .w
            .iter()
            .zip(&self.g)
            .map(|(&wk, &gk)| {
                let v = wk * gk / n;
                if v < floor {
                    F::zero()
                } else {
                    v
                }
            })
            .collect();
        let total: F = w.iter().copied().sum();
        w.iter_mut().for_each(|v| *v = *v / total);
        Self::at(lik, w)
    }
}

/// Extrapolated weights `w0 − 2s·r + s²·v` with `s = −‖r‖/‖v‖ ≤ −1`. The step
/// is pulled toward `−1` (which reproduces `w2`) until no weight is negative.
fn extrapolate<F: Real>(w0: &[F], w1: &[F], w2: &[F]) -> Option<Vec<F>> {
    let r: Vec<F> = w1.iter().zip(w0).map(|(&a, &b)| a - b).collect();
    let v: Vec<F> = w2.iter().zip(w1).zip(&r).map(|((&a, &b), &rk)| a - b - rk).collect();
    let rn: F = r.iter().map(|&x| x * x).sum();
    let vn: F = v.iter().map(|&x| x * x).sum();
    if !(vn > F::zero()) || !(rn > F::zero()) {
        return None;
    }
    let mut step = -(rn / vn).sqrt();
    if step > -F::one() {
        return None;
    }
    for _ in 0..30 {
        let two = F::lit(2.0);
        let w: Vec<F> = w0
            .iter()
            .zip(&r)
            .zip(&v)
            .map(|((&a, &rk), &vk)| a - two * step * rk + step * step * vk)
            .collect();
        if w.iter().all(|&x| x >= F::zero() && x.is_finite()) {
            let total: F = w.iter().copied().sum();
            return Some(w.into_iter().map(|x| x / total).collect());
        }
        step = (step - F::one()) / two;
    }
    None
}

/// EM for the mixing weights on explicit, strictly ascending grid `means`.
/// Unlike [`npmle_deconvolve`] this places no lower bound on `z.len()`.
pub fn em_on_grid<F: Real>(
    z: &[F],
    means: &[F],
    tol: F,
    max_iter: usize,
    scheme: EmScheme,
) -> Result<DeconvolutionResult<F>> {
    if z.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    if means.is_empty() || means.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("grid", "means must be nonempty and strictly ascending"));
    }
    let lik = Likelihoods::new(z, means);
    let k = means.len();
    let mut trace = Vec::new();
    let mut violations = 0;
    let mut converged = false;
    let mut iterations = 0;
    // Summation noise on a log-likelihood of magnitude |ll|.
    let slack = F::epsilon() * F::lit(64.0);
    let mut record = |trace: &mut Vec<F>, ll: F| {
        if let Some(&prev) = trace.last() {
            if ll < prev - slack * prev.abs() {
                violations += 1;
            }
        }
        trace.push(ll);
    };

    let mut cur = Iterate::at(&lik, vec![F::one() / F::from_count(k); k]);
    record(&mut trace, cur.ll);
    while iterations < max_iter {
        let next = match scheme {
            EmScheme::Plain => {
                let next = cur.em(&lik);
                record(&mut trace, next.ll);
                next
            }
            EmScheme::Squarem => {
                let one = cur.em(&lik);
                record(&mut trace, one.ll);
                let two = one.em(&lik);
                record(&mut trace, two.ll);
                match extrapolate(&cur.w, &one.w, &two.w).map(|w| Iterate::at(&lik, w)) {
                    Some(jump) if jump.ll >= two.ll => {
                        record(&mut trace, jump.ll);
                        jump
                    }
                    _ => two,
                }
            }
        };
        iterations += 1;
        let gain = next.ll - cur.ll;
        cur = next;
        if gain < tol * cur.ll.abs() {
            converged = true;
            break;
        }
    }

    let kept: Vec<(F, F)> = means
        .iter()
        .copied()
        .zip(cur.w.iter().copied())
        .filter(|&(_, wk)| wk >= F::lit(PRUNE_WEIGHT))
        .collect();
    let total: F = kept.iter().map(|c| c.1).sum();
    Ok(DeconvolutionResult {
        grid_means: kept.iter().map(|c| c.0).collect(),
        weights: kept.iter().map(|c| c.1 / total).collect(),
        log_likelihood: cur.ll,
        iterations,
        converged,
        trace,
        ascent_violations: violations,
    })
}

/// How to turn a fitted mixture into an alternative density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recovery {
    /// Keep components with `|μ| ≥ c`.
    HardThreshold(f64),
    /// Sort by `|μ|`, give the first `k_a` components (cumulative weight
    /// `≤ 1 − p̂`) to the null and keep the rest.
    DataDriven,
    /// As [`Recovery::DataDriven`] but also keeps the `k_a`-th component.
    DataDrivenInclusive,
}

impl Default for Recovery {
    fn default() -> Self {
        Recovery::DataDriven
    }
}

/// Alternative density recovered from a deconvolution.
pub fn recover_alternative<F: Real>(
    deconv: &DeconvolutionResult<F>,
    p_hat: F,
    method: Recovery,
) -> Result<GaussianMixture<F>> {
    let comps: Vec<(F, F)> = deconv.components().collect();
    let retained: Vec<(F, F)> = match method {
        Recovery::HardThreshold(c) => comps
            .into_iter()
            .filter(|&(mu, _)| mu.abs() >= F::lit(c))
            .collect(),
        Recovery::DataDriven | Recovery::DataDrivenInclusive => {
            if !(p_hat > F::zero() && p_hat < F::one()) {
                return Err(Error::invalid("p_hat", format!("{p_hat} not in (0, 1)")));
            }
            let mut order: Vec<usize> = (0..comps.len()).collect();
            order.sort_by(|&a, &b| {
                comps[a].0.abs().partial_cmp(&comps[b].0.abs()).expect("finite means").then(a.cmp(&b))
            });
            let budget = F::one() - p_hat + F::lit(1e-12);
            let mut cum = F::zero();
            let mut k_a: usize = 0;
            for &j in &order {
                cum = cum + comps[j].1;
                if cum <= budget {
                    k_a += 1;
                } else {
                    break;
                }
            }
            let start = match method {
                Recovery::DataDrivenInclusive => k_a.saturating_sub(1),
                _ => k_a,
            };
            order[start..]
                .iter()
                .map(|&j| comps[j])
                .filter(|&(mu, _)| mu.abs() > F::lit(NULL_LOCATION_TOL))
                .collect()
        }
    };
    let total: F = retained.iter().map(|c| c.1).sum();
    if retained.is_empty() || !(total > F::zero()) {
        return Err(Error::NoAlternativeComponent {
            fallback_attempted: false,
        });
    }
    let mut retained = retained;
    retained.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite means"));
    GaussianMixture::normalized(retained)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub proportion: ProportionOptions,
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: EmScheme,
    pub recovery: Recovery,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            proportion: ProportionOptions::default(),
            grid_points: 300,
            tol: 1e-8,
            max_iter: 5000,
            scheme: EmScheme::Plain,
            recovery: Recovery::DataDriven,
        }
    }
}

/// Where a fitted model came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub sample_size: usize,
    pub grid: GridSpec,
    /// Recovery method that produced `f1_hat`.
    pub recovery: Recovery,
    /// Set when the configured recovery failed and `|μ| ≥ 1` was used instead.
    pub fallback_used: bool,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub em_ascent_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<F> {
    pub p_hat: F,
    pub f1_hat: GaussianMixture<F>,
    pub provenance: Provenance,
}

impl<F: Real> FittedModel<F> {
    /// The two-groups model driving the data-driven statistic.
    pub fn two_groups(&self) -> Result<TwoGroupsModel<F>> {
        TwoGroupsModel::new(self.p_hat, self.f1_hat.clone())
    }
}

/// Full pipeline: proportion, deconvolution, recovery (with a hard `|μ| ≥ 1`
/// fallback).
pub fn fit_model<F: Real>(z: &[F], opts: &FitOptions) -> Result<FittedModel<F>> {
    let p_hat: F = estimate_proportion_with(z, opts.proportion)?;
    let grid = GridSpec::auto(z, opts.grid_points);
    let deconv = npmle_deconvolve_with(z, grid, F::lit(opts.tol), opts.max_iter, opts.scheme)?;
    let (f1_hat, recovery, fallback_used) = match recover_alternative(&deconv, p_hat, opts.recovery) {
        Ok(f1) => (f1, opts.recovery, false),
        Err(_) => {
            let fallback = Recovery::HardThreshold(1.0);
            match recover_alternative(&deconv, p_hat, fallback) {
                Ok(f1) => (f1, fallback, true),
                Err(_) => {
                    return Err(Error::NoAlternativeComponent {
                        fallback_attempted: true,
                    })
                }
            }
        }
    };
    Ok(FittedModel {
        p_hat,
        f1_hat,
        provenance: Provenance {
            sample_size: z.len(),
            grid,
            recovery,
            fallback_used,
            em_iterations: deconv.iterations,
            em_converged: deconv.converged,
            em_ascent_violations: deconv.ascent_violations,
        },
    })
}
