//! Result records shared by all density estimators.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Which route produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Series,
    Pde,
    Mc,
    Flow,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Oracle, Method::Series, Method::Pde, Method::Mc, Method::Flow];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Series => "series",
            Method::Pde => "pde",
            Method::Mc => "mc",
            Method::Flow => "flow",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Condition attached to an estimate that callers should not ignore.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateFlag {
    Ok,
    ToleranceNotMet,
    DeltaTooLarge,
}

impl EstimateFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateFlag::Ok => "ok",
            EstimateFlag::ToleranceNotMet => "tolerance_not_met",
            EstimateFlag::DeltaTooLarge => "delta_too_large",
        }
    }
}

/// A value of the one-point density p_t(x) with its error budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    /// Standard error of the Monte Carlo part (0 for deterministic methods).
    pub stat_error: f64,
    /// Deterministic error allowance: truncation, discretization, bias.
    pub det_bound: f64,
    pub method: Method,
    pub flag: EstimateFlag,
    pub config_digest: String,
    pub seed: Option<u64>,
}

impl DensityEstimate {
    pub fn exact(value: f64, method: Method) -> Self {
        Self {
            value,
            stat_error: 0.0,
            det_bound: 0.0,
            method,
            flag: EstimateFlag::Ok,
            config_digest: String::new(),
            seed: None,
        }
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.config_digest = digest.into();
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}
