//! Exploration, convergence and statistical comparison over trajectory collections.

pub mod entropy;
pub mod stats;

use serde::Serialize;

use crate::campaign::Trajectory;

pub use entropy::{
    convergence_iteration, cumulative_entropy, entropy_report, normalized_entropy, selection_counts, EntropyReport,
};
pub use stats::{
    bootstrap_median_ci, cliffs_delta, median, stats_battery, wilcoxon_rank_sum, BootstrapCi, EffectSize,
    MethodSummary, PairwiseComparison, StatsReport, DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_CONFIDENCE,
};

/// Best value of every run, grouped by method in order of first appearance.
/// Aborted runs are left out unless `include_aborted` is set.
pub fn best_values_by_method(runs: &[Trajectory], include_aborted: bool) -> Vec<(String, Vec<f64>)> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for t in runs.iter().filter(|t| include_aborted || t.is_complete()) {
        let Some((_, best)) = t.best() else { continue };
        match groups.iter_mut().find(|(m, _)| *m == t.method) {
            Some((_, v)) => v.push(best),
            None => groups.push((t.method.clone(), vec![best])),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub run_id: String,
    pub method: String,
    pub dataset: String,
    pub iter_80: Option<usize>,
    pub iter_95: Option<usize>,
}

pub fn convergence_row(t: &Trajectory, reference_max: f64) -> ConvergenceRow {
    let values: Vec<Option<f64>> = t.records.iter().map(|r| r.value).collect();
    ConvergenceRow {
        run_id: t.run_id.clone(),
        method: t.method.clone(),
        dataset: t.dataset.clone(),
        iter_80: convergence_iteration(&values, 0.8, reference_max),
        iter_95: convergence_iteration(&values, 0.95, reference_max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuplicateRow {
    pub run_id: String,
    pub method: String,
    pub dataset: String,
    pub status: String,
    pub suggestions: usize,
    pub duplicates: usize,
    pub invalid_rate: f64,
}

pub fn duplicate_row(t: &Trajectory) -> DuplicateRow {
    DuplicateRow {
        run_id: t.run_id.clone(),
        method: t.method.clone(),
        dataset: t.dataset.clone(),
        status: if t.is_complete() { "complete" } else { "aborted" }.into(),
        suggestions: t.records.len(),
        duplicates: t.duplicates(),
        invalid_rate: t.invalid_rate(),
    }
}

fn write_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Columns: run_id, method, dataset, cumulative_entropy, entropy_to_best,
/// best_index, best_value, then `h_<parameter>` per parameter.
pub fn entropy_csv(runs: &[Trajectory]) -> String {
    let mut header = strings(&["run_id", "method", "dataset", "cumulative_entropy", "entropy_to_best", "best_index", "best_value"]);
    if let Some(t) = runs.first() {
        header.extend(t.space.parameters().iter().map(|p| format!("h_{}", p.name)));
    }
    write_csv(
        &header,
        runs.iter().map(|t| {
            let r = entropy_report(t);
            let mut row = vec![
                r.run_id,
                r.method,
                r.dataset,
                r.cumulative.to_string(),
                opt(r.entropy_to_best),
                opt(r.best_index),
                opt(r.best_value),
            ];
            row.extend(r.per_parameter.iter().map(f64::to_string));
            row
        }),
    )
}

/// Columns: run_id, method, dataset, iter_80, iter_95 (empty when not reached).
/// `reference_max` gives the true optimum of each run's dataset.
pub fn convergence_csv(runs: &[Trajectory], reference_max: impl Fn(&Trajectory) -> f64) -> String {
    write_csv(
        &strings(&["run_id", "method", "dataset", "iter_80", "iter_95"]),
        runs.iter().map(|t| {
            let r = convergence_row(t, reference_max(t));
            vec![r.run_id, r.method, r.dataset, opt(r.iter_80), opt(r.iter_95)]
        }),
    )
}

/// Columns: run_id, method, dataset, status, suggestions, duplicates, invalid_rate.
pub fn duplicates_csv(runs: &[Trajectory]) -> String {
    write_csv(
        &strings(&["run_id", "method", "dataset", "status", "suggestions", "duplicates", "invalid_rate"]),
        runs.iter().map(|t| {
            let r = duplicate_row(t);
            vec![
                r.run_id,
                r.method,
                r.dataset,
                r.status,
                r.suggestions.to_string(),
                r.duplicates.to_string(),
                r.invalid_rate.to_string(),
            ]
        }),
    )
}

/// Columns: method_a, method_b, p_value, delta, label.
pub fn pairs_csv(report: &StatsReport) -> String {
    write_csv(
        &strings(&["method_a", "method_b", "p_value", "delta", "label"]),
        report.pairs.iter().map(|p| {
            vec![
                p.method_a.clone(),
                p.method_b.clone(),
                p.p_value.to_string(),
                p.delta.to_string(),
                p.label.to_string(),
            ]
        }),
    )
}

/// Columns: method, n, median, mean, ci_lower, ci_upper, vs_baseline.
pub fn summary_csv(report: &StatsReport) -> String {
    write_csv(
        &strings(&["method", "n", "median", "mean", "ci_lower", "ci_upper", "vs_baseline"]),
        report.methods.iter().map(|m| {
            vec![
                m.method.clone(),
                m.n.to_string(),
                m.median.to_string(),
                m.mean.to_string(),
                m.ci_lower.to_string(),
                m.ci_upper.to_string(),
                opt(m.vs_baseline),
            ]
        }),
    )
}
