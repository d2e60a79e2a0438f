//! Dataset complexity metrics and the normalized radar-area score.
//!
//! Six metrics are computed per dataset, in this fixed spoke order:
//! average options per parameter (AOP), number of parameters (NP), parameter
//! space size (PSS), skewness of the objective distribution (SKEW), scarcity
//! index (SI) and parameter importance balance (PIB).

use serde::Serialize;
use thiserror::Error;

use crate::aggregate::{AggregateError, AggregationPolicy};
use crate::dataset::BenchmarkDataset;
use crate::forest::{ForestConfig, RandomForest};

pub const METRIC_NAMES: [&str; 6] = ["aop", "np", "pss", "skew", "si", "pib"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexityError {
    #[error("skewness needs at least two values")]
    TooFewValues,
    #[error("skewness is undefined for zero-variance data")]
    ZeroVariance,
    #[error("scarcity index of an empty list")]
    Empty,
    #[error("min-max normalization needs at least two datasets, got {0}")]
    TooFewDatasets(usize),
    #[error("every radar polygon has zero area")]
    DegenerateArea,
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Fisher-Pearson coefficient `m3 / m2^1.5` with population moments.
pub fn skewness(values: &[f64]) -> Result<f64, ComplexityError> {
    if values.len() < 2 {
        return Err(ComplexityError::TooFewValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
        return Err(ComplexityError::ZeroVariance);
    }
    Ok(m3 / m2.powf(1.5))
}

/// One minus the fraction of values strictly above 95% of the maximum.
pub fn scarcity_index(values: &[f64]) -> Result<f64, ComplexityError> {
    if values.is_empty() {
        return Err(ComplexityError::Empty);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = 0.95 * max;
    let above = values.iter().filter(|&&v| v > threshold).count();
    Ok(1.0 - above as f64 / values.len() as f64)
}

/// Per-parameter random-forest importances on the one-hot encoding,
/// normalized to sum to 1 (all zeros if the forest found no signal).
pub fn parameter_importances(
    dataset: &BenchmarkDataset,
    policy: &AggregationPolicy,
    seed: u64,
) -> Result<Vec<f64>, ComplexityError> {
    let space = dataset.space();
    let counts = space.option_counts();
    let width: usize = counts.iter().sum();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (rank, v) in dataset.aggregated(policy)? {
        let mut row = vec![0.0; width];
        let mut offset = 0;
        for (i, n) in space.unrank(rank).into_iter().zip(&counts) {
            row[offset + i] = 1.0;
            offset += n;
        }
        x.push(row);
        y.push(v);
    }
    let forest = RandomForest::fit(
        &x,
        &y,
        &ForestConfig {
            seed,
            ..ForestConfig::default()
        },
    );
    let columns = forest.feature_importances();
    let mut offset = 0;
    let mut per_param: Vec<f64> = counts
        .iter()
        .map(|n| {
            let s = columns[offset..offset + n].iter().sum();
            offset += n;
            s
        })
        .collect();
    let total: f64 = per_param.iter().sum();
    if total > 0.0 {
        per_param.iter_mut().for_each(|v| *v /= total);
    }
    Ok(per_param)
}

/// `1 - std(importances)` (population std). 1.0 for fewer than two parameters
/// or when every importance is zero.
pub fn parameter_importance_balance(
    dataset: &BenchmarkDataset,
    policy: &AggregationPolicy,
    seed: u64,
) -> Result<f64, ComplexityError> {
    if dataset.space().len() < 2 {
        return Ok(1.0);
    }
    let imp = parameter_importances(dataset, policy, seed)?;
    if imp.iter().all(|&v| v == 0.0) {
        return Ok(1.0);
    }
    let n = imp.len() as f64;
    let mean = imp.iter().sum::<f64>() / n;
    let var = imp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(1.0 - var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub dataset: String,
    pub aop: f64,
    pub np: usize,
    pub pss: usize,
    pub skew: f64,
    pub scarcity: f64,
    pub pib: f64,
    pub normalized_metrics: [f64; 6],
    pub radar_area_score: f64,
}

impl ComplexityReport {
    pub fn raw_metrics(&self) -> [f64; 6] {
        [self.aop, self.np as f64, self.pss as f64, self.skew, self.scarcity, self.pib]
    }
}

/// Area of a regular six-spoke radar polygon with spoke lengths `v`.
pub fn radar_area(v: &[f64; 6]) -> f64 {
    let wedge = 0.5 * (60f64).to_radians().sin();
    (0..6).map(|j| wedge * v[j] * v[(j + 1) % 6]).sum()
}

/// Min-max normalizes each column across rows. A column with no spread maps to 0.
pub fn min_max_normalize(rows: &[[f64; 6]]) -> Vec<[f64; 6]> {
    let mut out = vec![[0.0; 6]; rows.len()];
    for m in 0..6 {
        let lo = rows.iter().map(|r| r[m]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[m]).fold(f64::NEG_INFINITY, f64::max);
        for (o, r) in out.iter_mut().zip(rows) {
            o[m] = if hi > lo { (r[m] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    out
}

/// Radar areas divided by the largest area in the set.
pub fn radar_scores(normalized: &[[f64; 6]]) -> Result<Vec<f64>, ComplexityError> {
    let areas: Vec<f64> = normalized.iter().map(radar_area).collect();
    let max = areas.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(ComplexityError::DegenerateArea);
    }
    Ok(areas.into_iter().map(|a| a / max).collect())
}

/// Raw metrics for one dataset; normalized fields are left at zero.
pub fn dataset_metrics(
    dataset: &BenchmarkDataset,
    policy: &AggregationPolicy,
    seed: u64,
) -> Result<ComplexityReport, ComplexityError> {
    let space = dataset.space();
    let counts = space.option_counts();
    let values: Vec<f64> = dataset.aggregated(policy)?.into_iter().map(|(_, v)| v).collect();
    Ok(ComplexityReport {
        dataset: dataset.name.clone(),
        aop: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        np: counts.len(),
        pss: space.size(),
        skew: skewness(&values)?,
        scarcity: scarcity_index(&values)?,
        pib: parameter_importance_balance(dataset, policy, seed)?,
        normalized_metrics: [0.0; 6],
        radar_area_score: 0.0,
    })
}

pub fn complexity_report(
    datasets: &[BenchmarkDataset],
    policy: &AggregationPolicy,
    seed: u64,
) -> Result<Vec<ComplexityReport>, ComplexityError> {
    if datasets.len() < 2 {
        return Err(ComplexityError::TooFewDatasets(datasets.len()));
    }
    let mut reports = datasets
        .iter()
        .map(|d| {
            // each dataset gets the selectivity reduction when its objectives call for it
            let p = AggregationPolicy::for_objectives(policy.mode, d.objectives());
            let p = if policy.selectivity { p.with_selectivity() } else { p };
            dataset_metrics(d, &p, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let raw: Vec<[f64; 6]> = reports.iter().map(ComplexityReport::raw_metrics).collect();
    let normalized = min_max_normalize(&raw);
    let scores = radar_scores(&normalized)?;
    for ((r, n), s) in reports.iter_mut().zip(normalized).zip(scores) {
        r.normalized_metrics = n;
        r.radar_area_score = s;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{dataset_from_fn, single_objective};
    use crate::space::{Parameter, ParameterSpace};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn skewness_examples() {
        assert_abs_diff_eq!(skewness(&[1.0, 2.0, 3.0]).unwrap(), 0.0, epsilon = 1e-15);
        // m2 = 18.75, m3 = 93.75 -> 93.75 / 18.75^1.5
        let expected = 93.75 / 18.75f64.powf(1.5);
        assert_abs_diff_eq!(skewness(&[0.0, 0.0, 0.0, 10.0]).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.1547, epsilon = 1e-4);
        assert_eq!(skewness(&[5.0, 5.0, 5.0]), Err(ComplexityError::ZeroVariance));
        assert_eq!(skewness(&[5.0]), Err(ComplexityError::TooFewValues));
    }

    #[test]
    fn scarcity_examples() {
        assert_eq!(scarcity_index(&[100.0, 96.0, 50.0, 10.0]).unwrap(), 0.5);
        assert_eq!(scarcity_index(&[7.0, 7.0, 7.0]).unwrap(), 0.0);
        assert_eq!(scarcity_index(&[100.0]).unwrap(), 0.0);
        assert_eq!(scarcity_index(&[]), Err(ComplexityError::Empty));
    }

    #[test]
    fn radar_area_scales_quadratically() {
        let full = radar_area(&[1.0; 6]);
        let half = radar_area(&[0.5; 6]);
        // 6 wedges of 1/2 * sin(60deg) * 1 * 1
        assert_abs_diff_eq!(full, 3.0 * 3f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(half / full, 0.25, epsilon = 1e-12);
        let scores = radar_scores(&[[1.0; 6], [0.5; 6], [0.0; 6]]).unwrap();
        assert_eq!(scores, vec![1.0, 0.25, 0.0]);
    }

    #[test]
    fn min_max_maps_extremes() {
        let n = min_max_normalize(&[[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [3.0, 2.0, 1.0, 0.0, 5.0, 7.0]]);
        assert_eq!(n[0], [0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(n[1], [1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    fn two_param(f: impl Fn(usize, usize) -> f64) -> BenchmarkDataset {
        let space = ParameterSpace::new(vec![
            Parameter::new("a", (0..6).map(|i| format!("a{i}"))),
            Parameter::new("b", (0..5).map(|i| format!("b{i}"))),
        ])
        .unwrap();
        dataset_from_fn("two", space, single_objective(), |idx| vec![vec![f(idx[0], idx[1])]])
    }

    #[test]
    fn pib_conventions() {
        let p = AggregationPolicy::default();
        assert_eq!(parameter_importance_balance(&two_param(|_, _| 4.0), &p, 1).unwrap(), 1.0);
        let one = ParameterSpace::new(vec![Parameter::new("a", ["x", "y", "z"])]).unwrap();
        let ds = dataset_from_fn("k1", one, single_objective(), |i| vec![vec![i[0] as f64]]);
        assert_eq!(parameter_importance_balance(&ds, &p, 1).unwrap(), 1.0);
    }

    #[test]
    fn pib_single_relevant_parameter() {
        let space = ParameterSpace::new(vec![
            Parameter::new("a", (0..10).map(|i| format!("a{i}"))),
            Parameter::new("b", (0..4).map(|i| format!("b{i}"))),
        ])
        .unwrap();
        let ds = dataset_from_fn("one", space, single_objective(), |idx| vec![vec![((idx[0] * 37) % 11) as f64 * 9.0]]);
        let p = AggregationPolicy::default();
        let imp = parameter_importances(&ds, &p, 3).unwrap();
        assert!(imp[0] >= 0.95, "{imp:?}");
        let pib = parameter_importance_balance(&ds, &p, 3).unwrap();
        assert!((pib - 0.5).abs() <= 0.05, "{pib}");
    }

    #[test]
    fn pib_invariant_to_option_relabeling() {
        let f = |a: usize, b: usize| (a * 7 % 5) as f64 * 10.0 + (b as f64) * 3.0;
        let ds = two_param(f);
        let space = ParameterSpace::new(vec![
            Parameter::new("a", [4, 0, 5, 2, 1, 3].map(|i| format!("a{i}"))),
            Parameter::new("b", [3, 4, 0, 1, 2].map(|i| format!("b{i}"))),
        ])
        .unwrap();
        let relabeled = dataset_from_fn("two", space, single_objective(), |idx| vec![vec![f(idx[0], idx[1])]]);
        let p = AggregationPolicy::default();
        assert_eq!(
            parameter_importance_balance(&ds, &p, 11).unwrap(),
            parameter_importance_balance(&relabeled, &p, 11).unwrap()
        );
    }

    #[test]
    fn report_needs_two_datasets() {
        let ds = two_param(|a, b| (a + b) as f64);
        assert_eq!(
            complexity_report(&[ds], &AggregationPolicy::default(), 0),
            Err(ComplexityError::TooFewDatasets(1))
        );
    }

    proptest! {
        #[test]
        fn scarcity_scale_invariant(values in proptest::collection::vec(0.0f64..100.0, 1..50), scale in 0.1f64..1000.0) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            prop_assert_eq!(scarcity_index(&values).unwrap(), scarcity_index(&scaled).unwrap());
        }
    }
}
