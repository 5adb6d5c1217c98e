//! Monte Carlo execution of a scenario.
//!
//! Each replication draws one ground truth, one set of effects and one
//! `m × T` observation matrix, and every method in the scenario reads that
//! same matrix. Replications run on a rayon pool and are merged back in
//! replication order, so the output does not depend on the thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use amset::avpv::{optimizely_run, PValueProcess, PriorSpec};
use amset::estimate::{fit_model, FitOptions, Provenance};
use amset::metrics::{aggregate, Confusion};
use amset::model::{sample_ground_truth, GroundTruth};
use amset::{FittedModel, ObservationMatrix, TwoGroupsModel};
use amset::procedures::{run, ProcedureConfig, RunOutput, StatisticSource, StoppingRule, Thresholding};
use amset::rng::{derive_seed, substream, tag};

use crate::methods::Method;
use crate::output::{ResultRow, RowKey};
use crate::scenario::{AltSpec, Report, ScenarioConfig};
use crate::{HarnessError, THREADS_ENV};

/// Prior variance of the normal mixing prior used by `Optimizely_DD`.
pub const OPTIMIZELY_DD_TAU_SQ: f64 = 2.0;

/// One simulated replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub truth: GroundTruth,
    pub effects: Vec<f64>,
    pub matrix: ObservationMatrix,
}

/// FNV-1a over the bit patterns of the matrix entries.
pub fn checksum(matrix: &ObservationMatrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in matrix.values() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Seed of replication `rep` at sweep point `point`.
pub fn replication_seed(master: u64, point: usize, rep: usize) -> u64 {
    derive_seed(master, &[point as u64, rep as u64])
}

/// Draws effect sizes: zero for nulls and a draw from `alt` for non-nulls.
pub fn draw_effects<R: Rng>(alt: &AltSpec, truth: &GroundTruth, rng: &mut R) -> Result<Vec<f64>, HarnessError> {
    let mixture = match alt {
        AltSpec::Mixture { .. } => Some(alt.oracle_density()?),
        _ => None,
    };
    Ok(truth
        .theta
        .iter()
        .map(|&t| {
            if !t {
                return 0.0;
            }
            match alt {
                AltSpec::FixedMean { mu } => *mu,
                AltSpec::UniformMean { lo, hi } => rng.random_range(*lo..*hi),
                AltSpec::Mixture { .. } => mixture.as_ref().expect("built above").sample_mean(rng),
            }
        })
        .collect())
}

/// Builds replication `rep` at sweep point `point` of `cfg`, where `cfg` is
/// already set to that sweep point.
pub fn simulate_replication(cfg: &ScenarioConfig, point: usize, rep: usize) -> Result<Replication, HarnessError> {
    let seed = replication_seed(cfg.seed, point, rep);
    let truth = sample_ground_truth(cfg.m, cfg.truth_p, &mut substream(seed, &[tag::TRUTH]))?;
    let effects = draw_effects(&cfg.alt, &truth, &mut substream(seed, &[tag::EFFECTS]))?;
    let matrix = ObservationMatrix::simulate(&effects, cfg.stages, |t| substream(seed, &[tag::STAGE, t as u64]));
    Ok(Replication { truth, effects, matrix })
}

/// Historical sample for the data-driven fit at one sweep point: `n` draws
/// from the marginal two-groups distribution.
pub fn simulate_history(cfg: &ScenarioConfig, point: usize, n: usize) -> Result<Vec<f64>, HarnessError> {
    let mut rng = substream(cfg.seed, &[tag::HISTORY, point as u64]);
    let truth = sample_ground_truth(n, cfg.truth_p, &mut rng)?;
    let effects = draw_effects(&cfg.alt, &truth, &mut rng)?;
    Ok(effects
        .into_iter()
        .map(|mu| mu + rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Fits `(p̂, f̂1)` on the history of one sweep point.
pub fn fit_for_point(cfg: &ScenarioConfig, point: usize) -> Result<FittedModel, HarnessError> {
    let z = simulate_history(cfg, point, cfg.estimation.history_size)?;
    let opts = FitOptions {
        recovery: cfg.estimation.recovery.0,
        ..FitOptions::default()
    };
    Ok(fit_model(&z, &opts)?)
}

/// Models available to the methods at one sweep point.
#[derive(Debug, Clone)]
pub struct MethodContext {
    pub alpha: f64,
    pub stages: usize,
    pub stopping: StoppingRule,
    pub oracle: TwoGroupsModel,
    /// Point-prior location for `Optimizely_OR`.
    pub prior_mu: f64,
    /// `None` when no configured method needs a fit; `Err` holds the reason
    /// the fit failed.
    pub fitted: Option<Result<TwoGroupsModel, String>>,
}

impl MethodContext {
    pub fn for_point(cfg: &ScenarioConfig, fitted: Option<Result<TwoGroupsModel, String>>) -> Result<Self, HarnessError> {
        Ok(Self {
            alpha: cfg.alpha,
            stages: cfg.stages,
            stopping: cfg.stopping.rule(),
            oracle: TwoGroupsModel::new(cfg.truth_p, cfg.alt.oracle_density()?)?,
            prior_mu: cfg.alt.mean_effect(),
            fitted,
        })
    }
}

/// Runs one method on one observation matrix.
pub fn run_method(method: Method, matrix: &ObservationMatrix, ctx: &MethodContext) -> Result<RunOutput<f64>, HarnessError> {
    let amset = ProcedureConfig::amset(ctx.alpha, ctx.stages)?;
    let mset = ProcedureConfig::mset(ctx.alpha, ctx.stages)?;
    let fitted = || -> Result<&TwoGroupsModel, HarnessError> {
        match &ctx.fitted {
            Some(Ok(m)) => Ok(m),
            Some(Err(reason)) => Err(HarnessError::Input(format!("estimation failed: {reason}"))),
            None => Err(HarnessError::Config(format!("{} needs a fitted model", method.label()))),
        }
    };
    let mut src = matrix.stream();
    let out = match method {
        Method::AmsetOr => run(&mut src, &ctx.oracle, &amset, ctx.stopping)?,
        Method::MsetOr => run(&mut src, &ctx.oracle, &mset, ctx.stopping)?,
        Method::AmsetOrSimple => run(
            &mut src,
            &ctx.oracle,
            &amset.with_thresholding(Thresholding::Simple),
            ctx.stopping,
        )?,
        Method::AmsetDd => run(
            &mut src,
            fitted()?,
            &amset.with_source(StatisticSource::DataDriven),
            ctx.stopping,
        )?,
        Method::MsetDd => run(
            &mut src,
            fitted()?,
            &mset.with_source(StatisticSource::DataDriven),
            ctx.stopping,
        )?,
        Method::OptimizelyOr => optimizely_run(
            &mut src,
            &PValueProcess::Msprt(PriorSpec::Point { mu: ctx.prior_mu }),
            ctx.alpha,
            ctx.stages,
            ctx.stopping,
        )?,
        Method::OptimizelyDd => optimizely_run(
            &mut src,
            &PValueProcess::Msprt(PriorSpec::normal(OPTIMIZELY_DD_TAU_SQ)?),
            ctx.alpha,
            ctx.stages,
            ctx.stopping,
        )?,
    };
    Ok(out)
}

/// Confusions at each reported stage. Past the stopping stage the decisions
/// in force at `τ` are carried forward.
fn reported_confusions(
    out: &RunOutput<f64>,
    truth: &GroundTruth,
    report: Report,
    stages: usize,
) -> Result<Vec<Confusion>, HarnessError> {
    match report {
        Report::Final => Ok(vec![Confusion::from_decisions(truth, &out.record.decisions)?]),
        Report::PerStage => (1..=stages)
            .map(|t| {
                let tau = out.record.stopping_stage;
                let d = if t <= tau { out.decisions_at(t) } else { &out.record.decisions };
                Ok(Confusion::from_decisions(truth, d)?)
            })
            .collect(),
    }
}

/// Per-method results of one replication.
struct RepOutcome {
    per_method: Vec<Result<Vec<Confusion>, String>>,
}

fn run_replication(
    cfg: &ScenarioConfig,
    methods: &[Method],
    ctx: &MethodContext,
    point: usize,
    rep: usize,
) -> Result<RepOutcome, HarnessError> {
    let r = simulate_replication(cfg, point, rep)?;
    let before = checksum(&r.matrix);
    let per_method = methods
        .iter()
        .map(|&m| {
            let res = run_method(m, &r.matrix, ctx)
                .and_then(|out| reported_confusions(&out, &r.truth, cfg.report, cfg.stages))
                .map_err(|e| e.to_string());
            assert_eq!(checksum(&r.matrix), before, "observation matrix changed during {}", m.label());
            res
        })
        .collect();
    Ok(RepOutcome { per_method })
}

fn stage_labels(cfg: &ScenarioConfig) -> Vec<String> {
    match cfg.report {
        Report::Final => vec!["final".to_string()],
        Report::PerStage => (1..=cfg.stages).map(|t| t.to_string()).collect(),
    }
}

/// Thread count from `AMSET_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Config(format!("{THREADS_ENV}={s:?} is not a positive integer"))),
        },
    }
}

/// Outcome of the data-driven fit at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub point: usize,
    pub outcome: Result<Provenance, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub rows: Vec<ResultRow>,
    /// One entry per sweep point when a configured method needs a fit.
    pub fits: Vec<FitRecord>,
}

/// Runs a scenario on a pool sized by `AMSET_THREADS` (rayon's default when unset).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<ResultRow>, HarnessError> {
    run_scenario_with_threads(cfg, threads_from_env()?)
}

pub fn run_scenario_with_threads(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<ResultRow>, HarnessError> {
    Ok(run_scenario_detailed(cfg, threads)?.rows)
}

/// Like [`run_scenario_with_threads`], also returning fit diagnostics.
pub fn run_scenario_detailed(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<ScenarioOutput, HarnessError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_all_points(cfg))
}

fn run_all_points(cfg: &ScenarioConfig) -> Result<ScenarioOutput, HarnessError> {
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let needs_fit = methods.iter().any(|m| m.needs_fit());
    let stages = stage_labels(cfg);

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (point, sweep) in cfg.sweep_points().into_iter().enumerate() {
        let point_cfg = cfg.at_sweep_value(sweep);
        let fitted = if needs_fit {
            let fit = fit_for_point(&point_cfg, point);
            fits.push(FitRecord {
                point,
                outcome: fit.as_ref().map(|f| f.provenance.clone()).map_err(|e| e.to_string()),
            });
            Some(fit.and_then(|f| Ok(f.two_groups()?)).map_err(|e| e.to_string()))
        } else {
            None
        };
        let ctx = MethodContext::for_point(&point_cfg, fitted)?;
        let outcomes = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_replication(&point_cfg, &methods, &ctx, point, rep))
            .collect::<Result<Vec<_>, _>>()?;

        let (sweep_param, sweep_value) = match sweep {
            Some((p, v)) => (p.name().to_string(), Some(v)),
            None => ("none".to_string(), None),
        };
        for (k, &method) in methods.iter().enumerate() {
            let first_err = outcomes.iter().find_map(|o| o.per_method[k].as_ref().err());
            for (s, stage) in stages.iter().enumerate() {
                let key = RowKey {
                    scenario: cfg.name.clone(),
                    method,
                    sweep_param: sweep_param.clone(),
                    sweep_value,
                    stage: stage.clone(),
                };
                let row = match first_err {
                    Some(reason) => ResultRow::invalid(key, cfg.reps, cfg.seed, reason),
                    None => {
                        let confusions: Vec<Confusion> = outcomes
                            .iter()
                            .map(|o| o.per_method[k].as_ref().expect("checked above")[s])
                            .collect();
                        ResultRow::from_report(key, &aggregate(&confusions)?, cfg.seed)
                    }
                };
                rows.push(row);
            }
        }
    }
    Ok(ScenarioOutput { rows, fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{find_scenario, Stopping, SweepParam};

    fn tiny() -> ScenarioConfig {
        let mut cfg = find_scenario("fixed1", true).unwrap();
        cfg.m = 300;
        cfg.reps = 6;
        cfg.methods = vec![Method::MsetOr, Method::AmsetOr, Method::OptimizelyOr, Method::AmsetOrSimple];
        cfg.sweep.as_mut().unwrap().values = vec![1.6, 2.4];
        cfg
    }

    #[test]
    fn replications_are_reproducible_and_distinct() {
        let cfg = tiny();
        let a = simulate_replication(&cfg, 0, 3).unwrap();
        let b = simulate_replication(&cfg, 0, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_replication(&cfg, 0, 4).unwrap();
        assert_ne!(checksum(&a.matrix), checksum(&c.matrix));
        assert_eq!(a.matrix.num_stages(), cfg.stages);
    }

    #[test]
    fn effects_follow_the_alternative() {
        let truth = GroundTruth::new(vec![true, false, true, true, false]);
        let mut rng = substream(1, &[]);
        let eff = draw_effects(&AltSpec::UniformMean { lo: 2.0, hi: 4.0 }, &truth, &mut rng).unwrap();
        for (e, t) in eff.iter().zip(&truth.theta) {
            if *t {
                assert!((2.0..4.0).contains(e));
            } else {
                assert_eq!(*e, 0.0);
            }
        }
        let eff = draw_effects(&AltSpec::FixedMean { mu: 1.5 }, &truth, &mut rng).unwrap();
        assert_eq!(eff, vec![1.5, 0.0, 1.5, 1.5, 0.0]);
    }

    #[test]
    fn rows_are_ordered_by_point_method_stage() {
        let rows = run_scenario_with_threads(&tiny(), Some(2)).unwrap();
        assert_eq!(rows.len(), 2 * 4);
        let order: Vec<(Option<f64>, Method)> = rows.iter().map(|r| (r.sweep_value, r.method)).collect();
        let mut sorted = order.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        assert_eq!(order, sorted);
        assert!(rows.iter().all(|r| r.is_valid() && r.stage == "final" && r.reps == 6));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = tiny();
        let one = run_scenario_with_threads(&cfg, Some(1)).unwrap();
        let three = run_scenario_with_threads(&cfg, Some(3)).unwrap();
        assert_eq!(crate::output::to_csv_string(&one), crate::output::to_csv_string(&three));
    }

    #[test]
    fn per_stage_rows_carry_decisions_forward() {
        let mut cfg = tiny();
        cfg.report = Report::PerStage;
        cfg.stopping = Stopping::FirstRejection;
        cfg.sweep = None;
        cfg.methods = vec![Method::AmsetOr];
        let rows = run_scenario_with_threads(&cfg, Some(1)).unwrap();
        assert_eq!(rows.len(), cfg.stages);
        assert_eq!(rows.iter().map(|r| r.stage_number().unwrap()).collect::<Vec<_>>(), (1..=cfg.stages).collect::<Vec<_>>());
    }

    #[test]
    fn failed_fit_gives_invalid_rows_only_for_that_method() {
        let cfg = tiny();
        let point_cfg = cfg.at_sweep_value(cfg.sweep_points()[0]);
        let ctx = MethodContext::for_point(&point_cfg, Some(Err("no alternative".into()))).unwrap();
        let r = simulate_replication(&point_cfg, 0, 0).unwrap();
        let err = run_method(Method::AmsetDd, &r.matrix, &ctx).unwrap_err();
        assert!(err.to_string().contains("no alternative"));
        assert!(run_method(Method::AmsetOr, &r.matrix, &ctx).is_ok());
        assert!(run_method(Method::OptimizelyDd, &r.matrix, &ctx).is_ok());
    }

    #[test]
    fn history_has_requested_size_and_is_seeded() {
        let cfg = tiny().at_sweep_value(Some((SweepParam::Mu, 2.0)));
        let a = simulate_history(&cfg, 1, 500).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, simulate_history(&cfg, 1, 500).unwrap());
        assert_ne!(a, simulate_history(&cfg, 0, 500).unwrap());
    }
}
