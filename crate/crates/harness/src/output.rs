//! Result rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use amset::MetricsReport;

use crate::methods::Method;
use crate::HarnessError;

pub const STATUS_OK: &str = "ok";

/// One aggregated cell: a (scenario, method, sweep point, stage) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: Method,
    /// `mu`, `p` or `none`.
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    /// Stage number, or `final` for the decisions at the stopping stage.
    pub stage: String,
    pub fdr: f64,
    pub mfdr: f64,
    pub mdr: f64,
    pub power: f64,
    pub se_fdr: f64,
    pub se_mfdr: f64,
    pub se_mdr: f64,
    pub reps: usize,
    pub seed: u64,
    /// `ok`, or `invalid: <reason>` when the method failed for this cell.
    pub status: String,
}

impl ResultRow {
    pub fn is_valid(&self) -> bool {
        self.status == STATUS_OK
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "fdr" => self.fdr,
            "mfdr" => self.mfdr,
            "mdr" => self.mdr,
            "power" => self.power,
            _ => return None,
        })
    }

    /// Standard error matching [`metric`](Self::metric); power shares MDR's.
    pub fn metric_se(&self, name: &str) -> Option<f64> {
        Some(match name {
            "fdr" => self.se_fdr,
            "mfdr" => self.se_mfdr,
            "mdr" | "power" => self.se_mdr,
            _ => return None,
        })
    }

    pub fn stage_number(&self) -> Option<usize> {
        self.stage.parse().ok()
    }

    pub(crate) fn from_report(key: RowKey, report: &MetricsReport, seed: u64) -> Self {
        Self {
            scenario: key.scenario,
            method: key.method,
            sweep_param: key.sweep_param,
            sweep_value: key.sweep_value,
            stage: key.stage,
            fdr: report.fdr,
            mfdr: report.mfdr,
            mdr: report.mdr,
            power: report.power,
            se_fdr: report.se_fdr,
            se_mfdr: report.se_mfdr,
            se_mdr: report.se_mdr,
            reps: report.replications,
            seed,
            status: STATUS_OK.to_string(),
        }
    }

    pub(crate) fn invalid(key: RowKey, reps: usize, seed: u64, reason: &str) -> Self {
        let nan = f64::NAN;
        Self {
            scenario: key.scenario,
            method: key.method,
            sweep_param: key.sweep_param,
            sweep_value: key.sweep_value,
            stage: key.stage,
            fdr: nan,
            mfdr: nan,
            mdr: nan,
            power: nan,
            se_fdr: nan,
            se_mfdr: nan,
            se_mdr: nan,
            reps,
            seed,
            status: format!("invalid: {}", reason.replace(['\n', '\r'], " ")),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RowKey {
    pub scenario: String,
    pub method: Method,
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub stage: String,
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "scenario", "method", "sweep_param", "sweep_value", "stage", "fdr", "mfdr", "mdr", "power", "se_fdr",
            "se_mfdr", "se_mdr", "reps", "seed", "status",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}
