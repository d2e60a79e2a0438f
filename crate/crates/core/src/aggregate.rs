//! Reduction of replicate measurement groups to a single reporting scalar.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Goal, ObjectiveSpec};

/// One value per declared objective.
pub type Measurement = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("yields must be non-negative, got desired={desired} undesired={undesired}")]
    NegativeYield { desired: f64, undesired: f64 },
    #[error("cannot aggregate an empty measurement group")]
    EmptyGroup,
    #[error("selectivity needs (desired, undesired) measurements, found {0} values")]
    SelectivityArity(usize),
    #[error("objective index {0} out of range")]
    ObjectiveIndex(usize),
}

/// Weighted selectivity `(desired / (desired + undesired)) * desired`.
///
/// Defined as 0 when nothing is produced.
pub fn weighted_selectivity(desired: f64, undesired: f64) -> Result<f64, AggregateError> {
    if !(desired >= 0.0 && undesired >= 0.0) {
        return Err(AggregateError::NegativeYield { desired, undesired });
    }
    let total = desired + undesired;
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(desired / total * desired)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    LowerBound,
    Mean,
    UpperBound,
}

impl FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower_bound" | "lower" | "min" => Ok(Self::LowerBound),
            "mean" => Ok(Self::Mean),
            "upper_bound" | "upper" | "max" => Ok(Self::UpperBound),
            other => Err(format!("unknown aggregation mode `{other}` (lower_bound|mean|upper_bound)")),
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LowerBound => "lower_bound",
            Self::Mean => "mean",
            Self::UpperBound => "upper_bound",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregationPolicy {
    pub mode: AggregationMode,
    /// Measurements are (desired, undesired) yield pairs reduced by weighted selectivity.
    #[serde(default)]
    pub selectivity: bool,
}

impl AggregationPolicy {
    pub fn new(mode: AggregationMode) -> Self {
        Self {
            mode,
            selectivity: false,
        }
    }

    pub fn with_selectivity(mut self) -> Self {
        self.selectivity = true;
        self
    }

    /// Policy the datasets conventionally use: selectivity for two-objective
    /// (desired, undesired) datasets, plain first objective otherwise.
    pub fn for_objectives(mode: AggregationMode, objectives: &[ObjectiveSpec]) -> Self {
        let selectivity = objectives.len() == 2
            && objectives[0].goal == Goal::Maximize
            && objectives[1].goal == Goal::Minimize;
        Self { mode, selectivity }
    }

    /// Direction in which the reporting scalar improves.
    pub fn reporting_goal(&self, objectives: &[ObjectiveSpec]) -> Goal {
        if self.selectivity {
            Goal::Maximize
        } else {
            objectives.first().map(|o| o.goal).unwrap_or(Goal::Maximize)
        }
    }

    /// Scalar for one measurement vector.
    pub fn scalar(&self, measurement: &[f64], objective: usize) -> Result<f64, AggregateError> {
        if self.selectivity {
            match measurement {
                [desired, undesired, ..] => weighted_selectivity(*desired, *undesired),
                _ => Err(AggregateError::SelectivityArity(measurement.len())),
            }
        } else {
            measurement
                .get(objective)
                .copied()
                .ok_or(AggregateError::ObjectiveIndex(objective))
        }
    }
}

/// Reduces a replicate group: per-measurement scalar first, then min/mean/max.
pub fn aggregate_group(
    measurements: &[Measurement],
    policy: &AggregationPolicy,
    objective: usize,
) -> Result<f64, AggregateError> {
    if measurements.is_empty() {
        return Err(AggregateError::EmptyGroup);
    }
    let scalars = measurements
        .iter()
        .map(|m| policy.scalar(m, objective))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match policy.mode {
        AggregationMode::LowerBound => scalars.iter().copied().fold(f64::INFINITY, f64::min),
        AggregationMode::UpperBound => scalars.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregationMode::Mean => scalars.iter().sum::<f64>() / scalars.len() as f64,
    })
}
