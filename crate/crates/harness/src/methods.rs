//! Registry of the procedures the runner can compare.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Procedures in registry order. Plots and CSV output follow this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    AmsetOr,
    MsetOr,
    AmsetDd,
    MsetDd,
    OptimizelyOr,
    OptimizelyDd,
    AmsetOrSimple,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::AmsetOr,
        Method::MsetOr,
        Method::AmsetDd,
        Method::MsetDd,
        Method::OptimizelyOr,
        Method::OptimizelyDd,
        Method::AmsetOrSimple,
    ];

    /// The six methods compared in every built-in scenario.
    pub const STANDARD: [Method; 6] = [
        Method::AmsetOr,
        Method::MsetOr,
        Method::AmsetDd,
        Method::MsetDd,
        Method::OptimizelyOr,
        Method::OptimizelyDd,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::AmsetOr => "AMSET_OR",
            Method::MsetOr => "MSET_OR",
            Method::AmsetDd => "AMSET_DD",
            Method::MsetDd => "MSET_DD",
            Method::OptimizelyOr => "Optimizely_OR",
            Method::OptimizelyDd => "Optimizely_DD",
            Method::AmsetOrSimple => "AMSET_OR_SIMPLE",
        }
    }

    /// Position in the registry.
    pub fn rank(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).expect("listed")
    }

    /// Whether the method uses estimated rather than true parameters.
    pub fn is_data_driven(self) -> bool {
        matches!(self, Method::AmsetDd | Method::MsetDd | Method::OptimizelyDd)
    }

    /// Whether the method needs `(p̂, f̂1)` fitted on historical data. The
    /// data-driven baseline uses a fixed normal prior instead.
    pub fn needs_fit(self) -> bool {
        matches!(self, Method::AmsetDd | Method::MsetDd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| HarnessError::UnknownMethod(s.to_string()))
    }
}

impl TryFrom<String> for Method {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label().to_string()
    }
}
