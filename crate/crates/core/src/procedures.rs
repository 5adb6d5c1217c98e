//! Multistage lfdr testing procedures.
//!
//! * AMSET: adaptive. Each stage samples only the active set, ranks the lfdr
//!   statistics, rejects by compound (or simple) thresholding and removes the
//!   rejected coordinates from the active set for good.
//! * MSET: non-adaptive. Every coordinate is sampled at every stage and the
//!   rejection set is recomputed from scratch over all `m` statistics.
//!
//! Compound thresholding rejects the longest ascending prefix whose running
//! mean of lfdr values stays at or below `alpha`, which bounds the expected
//! false rejections of each stage by `alpha` times its rejections.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lfdr::LfdrState;
use crate::model::{ObservationSource, TwoGroupsModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Thresholding {
    Compound,
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticSource {
    Oracle,
    DataDriven,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcedureConfig<F> {
    pub alpha: F,
    pub adaptive: bool,
    pub thresholding: Thresholding,
    pub statistic_source: StatisticSource,
    pub max_stages: usize,
}

impl<F: Real> ProcedureConfig<F> {
    /// Oracle AMSET with compound thresholding.
    pub fn amset(alpha: F, max_stages: usize) -> Result<Self> {
        let cfg = Self {
            alpha,
            adaptive: true,
            thresholding: Thresholding::Compound,
            statistic_source: StatisticSource::Oracle,
            max_stages,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Oracle MSET with compound thresholding.
    pub fn mset(alpha: F, max_stages: usize) -> Result<Self> {
        Ok(Self {
            adaptive: false,
            ..Self::amset(alpha, max_stages)?
        })
    }

    pub fn with_thresholding(mut self, thresholding: Thresholding) -> Self {
        self.thresholding = thresholding;
        self
    }

    pub fn with_source(mut self, source: StatisticSource) -> Self {
        self.statistic_source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > F::zero() && self.alpha < F::one()) {
            return Err(Error::invalid("alpha", format!("{} not in (0, 1)", self.alpha)));
        }
        if self.max_stages == 0 {
            return Err(Error::invalid("max_stages", "need at least one stage"));
        }
        Ok(())
    }
}

/// Outcome of thresholding one stage: `r` rejections by rank and the
/// statistic value at rank `r` (`None` when `r = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<F> {
    pub r: usize,
    pub cutoff: Option<F>,
}

fn sorted_ascending<F: Real>(stats: &[F]) -> Vec<F> {
    let mut v = stats.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("statistics must not be NaN"));
    v
}

/// Largest `r` such that the mean of the `r` smallest statistics is `≤ alpha`.
pub fn compound_threshold<F: Real>(stats: &[F], alpha: F) -> Result<Threshold<F>> {
    if stats.is_empty() {
        return Err(Error::EmptyInput("statistics"));
    }
    let sorted = sorted_ascending(stats);
    // Incremental mean is exact for runs of equal values, so a prefix of
    // values equal to alpha stays admissible.
    let mut mean = F::zero();
    let mut r = 0;
    for (k, &s) in sorted.iter().enumerate() {
        mean = mean + (s - mean) / F::from_count(k + 1);
        if mean <= alpha {
            r = k + 1;
        }
    }
    Ok(Threshold {
        r,
        cutoff: (r > 0).then(|| sorted[r - 1]),
    })
}

/// Positions of statistics `≤ alpha`.
pub fn simple_threshold<F: Real>(stats: &[F], alpha: F) -> Vec<usize> {
    stats
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= alpha)
        .map(|(i, _)| i)
        .collect()
}

/// Rejection set over keyed statistics. Compound thresholding rejects every
/// key whose statistic is `≤` the cutoff value, so ties at the cutoff go together.
fn select<F: Real>(
    stats: &[(usize, F)],
    alpha: F,
    thresholding: Thresholding,
) -> Result<(Vec<usize>, Threshold<F>)> {
    let values: Vec<F> = stats.iter().map(|&(_, s)| s).collect();
    match thresholding {
        Thresholding::Compound => {
            let th = compound_threshold(&values, alpha)?;
            let rejected = match th.cutoff {
                Some(c) => stats.iter().filter(|&&(_, s)| s <= c).map(|&(i, _)| i).collect(),
                None => Vec::new(),
            };
            Ok((rejected, th))
        }
        Thresholding::Simple => {
            let pos = simple_threshold(&values, alpha);
            let cutoff = pos.iter().map(|&k| values[k]).fold(None, |acc: Option<F>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
            let th = Threshold { r: pos.len(), cutoff };
            Ok((pos.into_iter().map(|k| stats[k].0).collect(), th))
        }
    }
}

/// Adaptive procedure state between stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureState<F> {
    /// Stage the next call to [`amset_step`](Self::amset_step) processes (1-based).
    pub stage: usize,
    /// Active coordinates, ascending.
    pub active: Vec<usize>,
    /// Stage at which each rejected coordinate left the active set.
    pub rejection_stage: BTreeMap<usize, usize>,
    pub last_rejected: Vec<usize>,
    pub last_threshold: Option<Threshold<F>>,
}

impl<F: Real> ProcedureState<F> {
    pub fn new(m: usize) -> Self {
        Self {
            stage: 1,
            active: (0..m).collect(),
            rejection_stage: BTreeMap::new(),
            last_rejected: Vec::new(),
            last_threshold: None,
        }
    }

    /// Thresholds the active set's statistics and retires the rejected
    /// coordinates. `stage_stats` must be keyed by exactly the active set.
    pub fn amset_step(
        &mut self,
        stage_stats: &BTreeMap<usize, F>,
        config: &ProcedureConfig<F>,
    ) -> Result<&[usize]> {
        if stage_stats.len() != self.active.len()
            || !stage_stats.keys().zip(&self.active).all(|(a, b)| a == b)
        {
            return Err(Error::KeyMismatch);
        }
        let t = self.stage;
        if self.active.is_empty() {
            self.last_rejected.clear();
            self.last_threshold = Some(Threshold { r: 0, cutoff: None });
        } else {
            let keyed: Vec<(usize, F)> = stage_stats.iter().map(|(&i, &s)| (i, s)).collect();
            let (rejected, th) = select(&keyed, config.alpha, config.thresholding)?;
            for &i in &rejected {
                self.rejection_stage.insert(i, t);
            }
            self.active.retain(|i| !self.rejection_stage.contains_key(i));
            self.last_rejected = rejected;
            self.last_threshold = Some(th);
        }
        self.stage += 1;
        Ok(&self.last_rejected)
    }

    /// Cumulative decision vector `δ_i = 1{i ∉ A_{t+1}}`.
    pub fn decisions(&self, m: usize) -> Vec<bool> {
        let mut d = vec![false; m];
        for &i in self.rejection_stage.keys() {
            d[i] = true;
        }
        d
    }
}

/// One MSET stage: fresh thresholding over statistics for all `m` coordinates.
pub fn mset_step<F: Real>(stats: &[F], config: &ProcedureConfig<F>) -> Result<Vec<bool>> {
    let keyed: Vec<(usize, F)> = stats.iter().copied().enumerate().collect();
    let (rejected, _) = select(&keyed, config.alpha, config.thresholding)?;
    let mut d = vec![false; stats.len()];
    for i in rejected {
        d[i] = true;
    }
    Ok(d)
}

/// When to stop, in addition to the `max_stages` cap and (for AMSET) an
/// exhausted active set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    /// Run until `max_stages`.
    Horizon,
    /// Stop at the first stage that rejects at least one coordinate.
    FirstRejection,
    /// Stop after the given stage.
    AtStage(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary<F> {
    pub stage: usize,
    /// Coordinates rejected at this stage (`S_t`).
    pub rejected: Vec<usize>,
    /// Decisions reported at this stage: cumulative for AMSET, per-stage for MSET.
    pub decisions: Vec<bool>,
    pub threshold: Threshold<F>,
    /// Number of coordinates sampled at this stage.
    pub sampled: usize,
}

/// Final decisions of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub decisions: Vec<bool>,
    /// Stage since which each rejected coordinate has been rejected.
    pub rejection_stage: Vec<Option<usize>>,
    /// Stopping stage `τ`.
    pub stopping_stage: usize,
}

impl DecisionRecord {
    pub fn num_rejections(&self) -> usize {
        self.decisions.iter().filter(|&&d| d).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<F> {
    pub record: DecisionRecord,
    pub stages: Vec<StageSummary<F>>,
    /// Observations clamped during lfdr evaluation.
    pub clamps: u64,
}

impl<F> RunOutput<F> {
    /// Decisions as reported at 1-based stage `t ≤ τ`.
    pub fn decisions_at(&self, t: usize) -> &[bool] {
        &self.stages[t - 1].decisions
    }

    /// Coordinates rejected at any stage up to `τ`.
    pub fn ever_rejected(&self) -> Vec<bool> {
        let m = self.record.decisions.len();
        let mut d = vec![false; m];
        for s in &self.stages {
            for &i in &s.rejected {
                d[i] = true;
            }
        }
        d
    }

    /// Total observations drawn across all stages.
    pub fn samples_used(&self) -> usize {
        self.stages.iter().map(|s| s.sampled).sum()
    }
}

fn should_stop(stopping: StoppingRule, stage: usize, rejected_now: bool) -> bool {
    match stopping {
        StoppingRule::Horizon => false,
        StoppingRule::FirstRejection => rejected_now,
        StoppingRule::AtStage(s) => stage >= s,
    }
}

/// Runs AMSET or MSET on `source`, computing lfdr statistics under
/// `statistics` (true parameters for the oracle, fitted ones for the
/// data-driven variant).
pub fn run<F: Real, S: ObservationSource<F> + ?Sized>(
    source: &mut S,
    statistics: &TwoGroupsModel<F>,
    config: &ProcedureConfig<F>,
    stopping: StoppingRule,
) -> Result<RunOutput<F>> {
    config.validate()?;
    let m = source.num_coordinates();
    if m == 0 {
        return Err(Error::EmptyInput("coordinates"));
    }
    let p = statistics.p();
    let mut lfdr = LfdrState::new(m);
    let mut state = ProcedureState::new(m);
    let all: Vec<usize> = (0..m).collect();
    let mut stages: Vec<StageSummary<F>> = Vec::new();
    // For MSET: stage since which each coordinate has been rejected without a gap.
    let mut run_start: Vec<Option<usize>> = vec![None; m];

    for t in 1..=config.max_stages {
        let sampled: &[usize] = if config.adaptive { &state.active } else { &all };
        let sampled = sampled.to_vec();
        for (i, x) in source.observe(t, &sampled) {
            lfdr.update(i, x, statistics);
        }
        let stats = lfdr.batch_lfdr(sampled.iter().copied(), p)?;

        let summary = if config.adaptive {
            state.amset_step(&stats, config)?;
            StageSummary {
                stage: t,
                rejected: state.last_rejected.clone(),
                decisions: state.decisions(m),
                threshold: state.last_threshold.expect("set by amset_step"),
                sampled: sampled.len(),
            }
        } else {
            let values: Vec<F> = stats.values().copied().collect();
            let keyed: Vec<(usize, F)> = values.iter().copied().enumerate().collect();
            let (rejected, threshold) = select(&keyed, config.alpha, config.thresholding)?;
            let mut decisions = vec![false; m];
            for &i in &rejected {
                decisions[i] = true;
            }
            for (i, start) in run_start.iter_mut().enumerate() {
                *start = if decisions[i] { Some(start.unwrap_or(t)) } else { None };
            }
            StageSummary {
                stage: t,
                rejected,
                decisions,
                threshold,
                sampled: m,
            }
        };

        let rejected_now = !summary.rejected.is_empty();
        stages.push(summary);
        let exhausted = config.adaptive && state.active.is_empty();
        if exhausted || should_stop(stopping, t, rejected_now) {
            break;
        }
    }

    let tau = stages.len();
    let decisions = stages[tau - 1].decisions.clone();
    let rejection_stage = if config.adaptive {
        (0..m).map(|i| state.rejection_stage.get(&i).copied()).collect()
    } else {
        run_start
    };
    Ok(RunOutput {
        record: DecisionRecord {
            decisions,
            rejection_stage,
            stopping_stage: tau,
        },
        stages,
        clamps: lfdr.clamp_count(),
    })
}

/// Bayes rule cutoff `(1 + αλ) / (1 + λ)` for the weighted classification loss.
pub fn bayes_threshold<F: Real>(lambda: F, alpha: F) -> Result<F> {
    if !(lambda > F::zero()) {
        return Err(Error::invalid("lambda", format!("{lambda} must be positive")));
    }
    if lambda.is_infinite() {
        return Ok(alpha);
    }
    Ok((F::one() + alpha * lambda) / (F::one() + lambda))
}

/// `(1/m) Σ [λ(1−θ_i)δ_i + θ_i(1−δ_i) − αλδ_i]`.
pub fn weighted_loss<F: Real>(theta: &[bool], decisions: &[bool], lambda: F, alpha: F) -> Result<F> {
    if theta.len() != decisions.len() {
        return Err(Error::LengthMismatch {
            expected: theta.len(),
            found: decisions.len(),
        });
    }
    if theta.is_empty() {
        return Err(Error::EmptyInput("decisions"));
    }
    let total: F = theta
        .iter()
        .zip(decisions)
        .map(|(&th, &d)| {
            let (th, d) = (F::from_count(th as usize), F::from_count(d as usize));
            lambda * (F::one() - th) * d + th * (F::one() - d) - alpha * lambda * d
        })
        .sum();
    Ok(total / F::from_count(theta.len()))
}
