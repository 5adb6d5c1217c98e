//! Scenario configuration and the built-in catalog.

use serde::{Deserialize, Serialize};

use amset::estimate::Recovery;
use amset::model::GaussianMixture;
use amset::procedures::StoppingRule;

use crate::methods::Method;
use crate::HarnessError;

/// Number of equally spaced atoms standing in for a uniform effect
/// distribution in the oracle alternative density.
pub const UNIFORM_ATOMS: usize = 41;

/// Distribution of non-null effect sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AltSpec {
    FixedMean { mu: f64 },
    /// Each non-null coordinate draws its own `μ ~ Unif(lo, hi)`.
    UniformMean { lo: f64, hi: f64 },
    Mixture { components: Vec<Component> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mu: f64,
    pub weight: f64,
}

impl AltSpec {
    /// Alternative density handed to the oracle procedures.
    pub fn oracle_density(&self) -> Result<GaussianMixture<f64>, HarnessError> {
        Ok(match self {
            AltSpec::FixedMean { mu } => GaussianMixture::point(*mu),
            AltSpec::UniformMean { lo, hi } => {
                let k = UNIFORM_ATOMS;
                let w = 1.0 / k as f64;
                GaussianMixture::new((0..k).map(|j| (lo + (hi - lo) * j as f64 / (k - 1) as f64, w)))?
            }
            AltSpec::Mixture { components } => {
                GaussianMixture::normalized(components.iter().map(|c| (c.mu, c.weight)))?
            }
        })
    }

    /// Mean effect size, used for the point prior of the oracle baseline.
    pub fn mean_effect(&self) -> f64 {
        match self {
            AltSpec::FixedMean { mu } => *mu,
            AltSpec::UniformMean { lo, hi } => (lo + hi) / 2.0,
            AltSpec::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                components.iter().map(|c| c.mu * c.weight).sum::<f64>() / total
            }
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        match self {
            AltSpec::FixedMean { mu } if !mu.is_finite() => Err(invalid("alt.mu", "must be finite")),
            AltSpec::UniformMean { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(invalid("alt", "uniform bounds need lo < hi"))
            }
            AltSpec::Mixture { components } if components.is_empty() => {
                Err(invalid("alt.components", "need at least one component"))
            }
            _ => self.oracle_density().map(|_| ()),
        }
    }
}

/// Hyperparameter varied across the sweep points of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Mu,
    P,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::P => "p",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// When each replication stops sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stopping {
    /// Run all `stages`.
    #[default]
    Horizon,
    /// Stop at the first stage with at least one rejection.
    FirstRejection,
}

impl Stopping {
    pub fn rule(self) -> StoppingRule {
        match self {
            Stopping::Horizon => StoppingRule::Horizon,
            Stopping::FirstRejection => StoppingRule::FirstRejection,
        }
    }
}

/// Whether rows summarize the final decisions or every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Report {
    #[default]
    Final,
    PerStage,
}

/// Alternative-density recovery as written in config files:
/// `"data_driven"`, `"data_driven_inclusive"` or `"hard:<c>"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RecoverySpec(pub Recovery);

impl TryFrom<String> for RecoverySpec {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_recovery(&s).map(RecoverySpec)
    }
}

impl From<RecoverySpec> for String {
    fn from(r: RecoverySpec) -> String {
        match r.0 {
            Recovery::DataDriven => "data_driven".into(),
            Recovery::DataDrivenInclusive => "data_driven_inclusive".into(),
            Recovery::HardThreshold(c) => format!("hard:{c}"),
        }
    }
}

pub fn parse_recovery(s: &str) -> Result<Recovery, HarnessError> {
    let s = s.trim();
    match s {
        "data_driven" => Ok(Recovery::DataDriven),
        "data_driven_inclusive" => Ok(Recovery::DataDrivenInclusive),
        _ => {
            let c = s
                .strip_prefix("hard:")
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|c| c.is_finite() && *c >= 0.0)
                .ok_or_else(|| invalid("recovery", format!("unknown method {s:?}")))?;
            Ok(Recovery::HardThreshold(c))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_history")]
    pub history_size: usize,
    #[serde(default = "default_recovery")]
    pub recovery: RecoverySpec,
}

fn default_history() -> usize {
    10_000
}

fn default_recovery() -> RecoverySpec {
    RecoverySpec(Recovery::DataDriven)
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            history_size: default_history(),
            recovery: default_recovery(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub m: usize,
    pub reps: usize,
    pub stages: usize,
    pub alpha: f64,
    pub truth_p: f64,
    pub alt: AltSpec,
    pub methods: Vec<Method>,
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub report: Report,
    #[serde(default)]
    pub stopping: Stopping,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

fn invalid(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config(format!("{field}: {}", reason.into()))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.m == 0 {
            return Err(invalid("m", "need at least one coordinate"));
        }
        if self.reps == 0 {
            return Err(invalid("reps", "need at least one replication"));
        }
        if self.stages == 0 {
            return Err(invalid("stages", "need at least one stage"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1)"));
        }
        if !(self.truth_p > 0.0 && self.truth_p < 1.0) {
            return Err(invalid("truth_p", "must lie in (0, 1)"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "list at least one method"));
        }
        self.alt.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(invalid("sweep.values", "empty sweep"));
            }
            for &v in &sweep.values {
                self.at_sweep_value(Some((sweep.param, v))).validate_point()?;
            }
            if sweep.param == SweepParam::Mu && !matches!(self.alt, AltSpec::FixedMean { .. }) {
                return Err(invalid("sweep", "a mu sweep needs a fixed_mean alternative"));
            }
        }
        if self.methods.iter().any(|m| m.needs_fit()) && self.estimation.history_size < 100 {
            return Err(invalid("estimation.history_size", "need at least 100 historical draws"));
        }
        Ok(())
    }

    fn validate_point(&self) -> Result<(), HarnessError> {
        if !(self.truth_p > 0.0 && self.truth_p < 1.0) {
            return Err(invalid("sweep", format!("p = {} outside (0, 1)", self.truth_p)));
        }
        self.alt.validate()
    }

    /// The configuration with the swept hyperparameter set to `point`.
    pub fn at_sweep_value(&self, point: Option<(SweepParam, f64)>) -> ScenarioConfig {
        let mut c = self.clone();
        match point {
            Some((SweepParam::P, v)) => c.truth_p = v,
            Some((SweepParam::Mu, v)) => c.alt = AltSpec::FixedMean { mu: v },
            None => {}
        }
        c
    }

    /// Sweep points, or a single unnamed point.
    pub fn sweep_points(&self) -> Vec<Option<(SweepParam, f64)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.param, v))).collect(),
            None => vec![None],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }
}

/// `start, start + step, …` up to `stop`, with values rounded to the step's
/// decimal places so that they print cleanly.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| ((start + k as f64 * step) * 1e6).round() / 1e6).collect()
}

/// A named scenario at full and desk scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub full: ScenarioConfig,
    pub desk: ScenarioConfig,
}

const FULL_M: usize = 5000;
const FULL_REPS: usize = 500;
const DESK_M: usize = 2000;
const DESK_REPS: usize = 100;
/// Horizon for the per-stage scenarios.
pub const STAGEWISE_HORIZON: usize = 10;

fn entry(name: &'static str, description: &'static str, full: ScenarioConfig) -> CatalogEntry {
    let desk = ScenarioConfig {
        name: format!("{name}-desk"),
        m: DESK_M,
        reps: DESK_REPS,
        ..full.clone()
    };
    CatalogEntry { name, description, full, desk }
}

fn base(name: &str, truth_p: f64, alt: AltSpec) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        m: FULL_M,
        reps: FULL_REPS,
        stages: 5,
        alpha: 0.05,
        truth_p,
        alt,
        methods: Method::STANDARD.to_vec(),
        seed: 20_240_501,
        sweep: None,
        report: Report::Final,
        stopping: Stopping::Horizon,
        estimation: EstimationConfig::default(),
    }
}

fn mixture(table: &[(f64, f64)]) -> (f64, AltSpec) {
    let null: f64 = table.iter().filter(|c| c.0 == 0.0).map(|c| c.1).sum();
    let components = table
        .iter()
        .filter(|c| c.0 != 0.0)
        .map(|&(mu, weight)| Component { mu, weight })
        .collect();
    (1.0 - null, AltSpec::Mixture { components })
}

fn stagewise(mut c: ScenarioConfig) -> ScenarioConfig {
    c.stages = STAGEWISE_HORIZON;
    c.report = Report::PerStage;
    c
}

/// The eight named scenarios, each with a desk-scale twin.
pub fn builtin_scenarios() -> Vec<CatalogEntry> {
    let mut fixed1 = base("fixed1", 0.05, AltSpec::FixedMean { mu: 2.0 });
    fixed1.sweep = Some(Sweep { param: SweepParam::Mu, values: grid(1.0, 3.0, 0.2) });
    let mut fixed2 = base("fixed2", 0.05, AltSpec::FixedMean { mu: 2.0 });
    fixed2.sweep = Some(Sweep { param: SweepParam::P, values: grid(0.01, 0.10, 0.01) });
    let mut fixed3 = base("fixed3", 0.05, AltSpec::UniformMean { lo: 2.0, hi: 4.0 });
    fixed3.sweep = Some(Sweep { param: SweepParam::P, values: grid(0.02, 0.10, 0.01) });
    let stage1 = stagewise(base("stage1", 0.05, AltSpec::FixedMean { mu: 2.0 }));
    let stage2 = stagewise(base("stage2", 0.05, AltSpec::UniformMean { lo: 1.0, hi: 3.0 }));
    let real = |name: &str, table: &[(f64, f64)]| {
        let (p, alt) = mixture(table);
        stagewise(base(name, p, alt))
    };
    vec![
        entry("fixed1", "fixed horizon, p = 0.05, mu swept 1.0..3.0", fixed1),
        entry("fixed2", "fixed horizon, mu = 2, p swept 0.01..0.10", fixed2),
        entry("fixed3", "fixed horizon, mu ~ Unif(2,4), p swept 0.02..0.10", fixed3),
        entry("stage1", "per stage, mu = 2, p = 0.05", stage1),
        entry("stage2", "per stage, mu ~ Unif(1,3), p = 0.05", stage2),
        entry("real1", "per stage, mixture 0:0.97 1.61:0.03", real("real1", &[(0.0, 0.97), (1.61, 0.03)])),
        entry(
            "real2",
            "per stage, mixture 0:0.98 1.32:0.01 1.6:0.01",
            real("real2", &[(0.0, 0.98), (1.32, 0.01), (1.6, 0.01)]),
        ),
        entry(
            "real3",
            "per stage, mixture 0:0.96 3.35/3.36/17.81/19.88 at 0.01 each",
            real(
                "real3",
                &[(0.0, 0.96), (3.35, 0.01), (3.36, 0.01), (17.81, 0.01), (19.88, 0.01)],
            ),
        ),
    ]
}

/// Looks up `name` (optionally suffixed `-desk`) in the catalog.
pub fn find_scenario(name: &str, desk: bool) -> Option<ScenarioConfig> {
    let (base, desk) = match name.strip_suffix("-desk") {
        Some(b) => (b, true),
        None => (name, desk),
    };
    builtin_scenarios()
        .into_iter()
        .find(|e| e.name == base)
        .map(|e| if desk { e.desk } else { e.full })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_and_scales() {
        let cat = builtin_scenarios();
        let names: Vec<&str> = cat.iter().map(|e| e.name).collect();
        assert_eq!(names, ["fixed1", "fixed2", "fixed3", "stage1", "stage2", "real1", "real2", "real3"]);
        for e in &cat {
            e.full.validate().unwrap();
            e.desk.validate().unwrap();
            assert_eq!((e.full.m, e.full.reps, e.full.alpha), (5000, 500, 0.05));
            assert_eq!((e.desk.m, e.desk.reps), (2000, 100));
            assert_eq!(e.desk.name, format!("{}-desk", e.name));
        }
        let fixed: Vec<usize> = cat[..3].iter().map(|e| e.full.stages).collect();
        assert_eq!(fixed, [5, 5, 5]);
    }

    #[test]
    fn sweep_grids() {
        let f1 = find_scenario("fixed1", false).unwrap();
        let s = f1.sweep.unwrap();
        assert_eq!(s.values.len(), 11);
        assert_eq!((s.values[0], s.values[10], s.values[4]), (1.0, 3.0, 1.8));
        let f2 = find_scenario("fixed2", true).unwrap();
        assert_eq!(f2.sweep.unwrap().values, grid(0.01, 0.10, 0.01));
        assert_eq!(grid(0.01, 0.10, 0.01).len(), 10);
        let f3 = find_scenario("fixed3-desk", false).unwrap();
        assert_eq!(f3.m, 2000);
        assert_eq!(f3.sweep.unwrap().values.len(), 9);
    }

    #[test]
    fn real_tables() {
        let r3 = find_scenario("real3", false).unwrap();
        assert!((r3.truth_p - 0.04).abs() < 1e-12);
        let AltSpec::Mixture { components } = &r3.alt else { panic!("mixture expected") };
        let got: Vec<(f64, f64)> = components.iter().map(|c| (c.mu, c.weight)).collect();
        assert_eq!(got, [(3.35, 0.01), (3.36, 0.01), (17.81, 0.01), (19.88, 0.01)]);
        let f1 = r3.alt.oracle_density().unwrap();
        assert!(f1.weights().iter().all(|&w| (w - 0.25).abs() < 1e-12));
        let r1 = find_scenario("real1", false).unwrap();
        assert!((r1.truth_p - 0.03).abs() < 1e-12);
        assert!(find_scenario("nope", false).is_none());
    }

    #[test]
    fn uniform_oracle_density_spans_interval() {
        let alt = AltSpec::UniformMean { lo: 2.0, hi: 4.0 };
        let d = alt.oracle_density().unwrap();
        assert_eq!(d.len(), UNIFORM_ATOMS);
        assert_eq!((d.means()[0], d.means()[UNIFORM_ATOMS - 1]), (2.0, 4.0));
        assert!((d.mean() - 3.0).abs() < 1e-12);
        assert_eq!(alt.mean_effect(), 3.0);
    }

    #[test]
    fn toml_round_trip_and_validation() {
        for e in builtin_scenarios() {
            let text = e.desk.to_toml();
            assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), e.desk);
        }
        let text = r#"
            name = "tiny"
            m = 10
            reps = 1
            stages = 1
            alpha = 0.05
            truth_p = 0.1
            methods = ["AMSET_OR", "Optimizely_DD"]
            seed = 7
            [alt]
            kind = "mixture"
            components = [{ mu = 1.5, weight = 0.5 }, { mu = 3.0, weight = 0.5 }]
            [estimation]
            recovery = "hard:1.5"
        "#;
        let c = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(c.estimation.recovery.0, Recovery::HardThreshold(1.5));
        assert_eq!(c.estimation.history_size, 10_000);
        assert!(ScenarioConfig::from_toml(&text.replace("reps = 1", "reps = 0")).is_err());
        assert!(ScenarioConfig::from_toml(&text.replace("AMSET_OR", "BH")).is_err());
        assert!(ScenarioConfig::from_toml(&text.replace("alpha = 0.05", "alpha = 1.5")).is_err());
    }

    #[test]
    fn recovery_parsing() {
        assert_eq!(parse_recovery("data_driven").unwrap(), Recovery::DataDriven);
        assert_eq!(parse_recovery("hard:1").unwrap(), Recovery::HardThreshold(1.0));
        assert!(parse_recovery("hard:x").is_err());
        assert!(parse_recovery("soft").is_err());
    }
}
