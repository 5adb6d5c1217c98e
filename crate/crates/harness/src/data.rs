//! Reading user-supplied observation streams and fitted-model files, and
//! running a procedure on them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use amset::estimate::{fit_model, FitOptions};
use amset::{FittedModel, GaussianMixture, ObservationMatrix, TwoGroupsModel};
use amset::procedures::{DecisionRecord, RunOutput, StoppingRule};

use crate::methods::Method;
use crate::runner::{run_method, MethodContext};
use crate::HarnessError;

fn parse_error(path: &str, row: usize, column: usize, reason: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_string(),
        row,
        column,
        reason: reason.into(),
    }
}

/// Parses an `m × T` CSV of finite reals, one row per coordinate and one
/// column per stage. A first line with no numeric field is taken as a header.
/// Rows and columns in diagnostics are 1-based and count the header line.
pub fn parse_matrix(text: &str, path: &str) -> Result<ObservationMatrix, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if k == 0 && record.iter().all(|f| !f.is_empty() && f.parse::<f64>().is_err()) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(parse_error(path, line, c + 1, "missing value"));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, line, c + 1, format!("{field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line, c + 1, format!("{field:?} is not finite")));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if row.len() < w => {
                return Err(parse_error(path, line, row.len() + 1, format!("missing value, expected {w} columns")))
            }
            Some(w) if row.len() > w => {
                return Err(parse_error(path, line, w + 1, format!("extra value, expected {w} columns")))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Input(format!("{path}: no observations")));
    }
    Ok(ObservationMatrix::from_rows(rows)?)
}

pub fn read_matrix(path: &Path) -> Result<ObservationMatrix, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text, &path.display().to_string())
}

/// Reads a single-column CSV of z-scores (header optional).
pub fn read_z_scores(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let matrix = read_matrix(path)?;
    if matrix.num_stages() != 1 {
        return Err(HarnessError::Input(format!(
            "{}: expected a single column of z-scores, found {}",
            path.display(),
            matrix.num_stages()
        )));
    }
    Ok(matrix.values().to_vec())
}

/// Fitted-model file: the non-null proportion and the components of `f1`.
///
/// ```toml
/// p_hat = 0.03
///
/// [[components]]
/// mean = 1.61
/// weight = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub p_hat: f64,
    pub components: Vec<ModelComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelComponent {
    pub mean: f64,
    pub weight: f64,
}

impl ModelFile {
    pub fn from_fitted(fit: &FittedModel) -> Self {
        Self {
            p_hat: fit.p_hat,
            components: fit
                .f1_hat
                .components()
                .map(|(mean, weight)| ModelComponent { mean, weight })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<TwoGroupsModel, HarnessError> {
        let alt = GaussianMixture::new(self.components.iter().map(|c| (c.mean, c.weight)))?;
        Ok(TwoGroupsModel::new(self.p_hat, alt)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        file.to_model()?;
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model files serialize")
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Fits `(p̂, f̂1)` on every observation of the matrix pooled together.
pub fn pooled_fit(matrix: &ObservationMatrix, opts: &FitOptions) -> Result<FittedModel, HarnessError> {
    Ok(fit_model(matrix.values(), opts)?)
}

/// What a run on real data can report without ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: Method,
    pub alpha: f64,
    pub m: usize,
    pub stages: usize,
    pub stopping_stage: usize,
    pub rejections: usize,
    pub samples_used: usize,
    /// `(stage, newly rejected, reported rejections)` per executed stage.
    pub per_stage: Vec<(usize, usize, usize)>,
}

impl RunReport {
    fn new(method: Method, alpha: f64, stages: usize, out: &RunOutput<f64>) -> Self {
        Self {
            method,
            alpha,
            m: out.record.decisions.len(),
            stages,
            stopping_stage: out.record.stopping_stage,
            rejections: out.record.num_rejections(),
            samples_used: out.samples_used(),
            per_stage: out
                .stages
                .iter()
                .map(|s| (s.stage, s.rejected.len(), s.decisions.iter().filter(|&&d| d).count()))
                .collect(),
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {} at alpha {}", self.method, self.alpha)?;
        writeln!(f, "{} coordinates, {} stages available, stopped at stage {}", self.m, self.stages, self.stopping_stage)?;
        writeln!(f, "{} rejections, {} observations used", self.rejections, self.samples_used)?;
        writeln!(f, "stage  new  reported")?;
        for (t, new, total) in &self.per_stage {
            writeln!(f, "{t:>5}  {new:>3}  {total:>8}")?;
        }
        Ok(())
    }
}

/// Runs `method` on a real stream. Statistics come from `model`, which is
/// either a fitted model or the oracle parameters. `Optimizely_OR` puts its
/// point prior at the mean of `model`'s alternative.
pub fn run_on_data(
    matrix: &ObservationMatrix,
    model: &TwoGroupsModel,
    method: Method,
    alpha: f64,
    stopping: StoppingRule,
) -> Result<(DecisionRecord, RunReport), HarnessError> {
    let ctx = MethodContext {
        alpha,
        stages: matrix.num_stages(),
        stopping,
        oracle: model.clone(),
        prior_mu: model.alt().mean(),
        fitted: Some(Ok(model.clone())),
    };
    let out = run_method(method, matrix, &ctx)?;
    let report = RunReport::new(method, alpha, matrix.num_stages(), &out);
    Ok((out.record, report))
}

/// Decisions as CSV: `coordinate,rejected,rejection_stage` with 1-based
/// coordinates and an empty stage for non-rejections.
pub fn decisions_csv(record: &DecisionRecord) -> String {
    let mut s = String::from("coordinate,rejected,rejection_stage\n");
    for (i, (&d, stage)) in record.decisions.iter().zip(&record.rejection_stage).enumerate() {
        let stage = stage.map(|t| t.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", i + 1, d, stage));
    }
    s
}
