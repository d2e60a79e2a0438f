//! Selection-frequency entropy of optimizer trajectories.

use serde::Serialize;

use crate::campaign::Trajectory;
use crate::space::{Assignment, ParameterSpace};

/// `counts[i][j]`: how often option `j` of parameter `i` was chosen. Labels
/// outside a parameter's option list are skipped for that parameter only.
pub fn selection_counts<'a>(space: &ParameterSpace, suggestions: impl IntoIterator<Item = &'a Assignment>) -> Vec<Vec<usize>> {
    let mut counts: Vec<Vec<usize>> = space.option_counts().iter().map(|&n| vec![0; n]).collect();
    for a in suggestions {
        for ((p, label), row) in space.parameters().iter().zip(a.labels()).zip(counts.iter_mut()) {
            if let Some(j) = p.option_index(label) {
                row[j] += 1;
            }
        }
    }
    counts
}

/// Shannon entropy of the selection frequencies in bits, divided by `log2(n)`.
/// Zero when there is a single option or nothing was counted.
pub fn normalized_entropy(counts: &[usize]) -> f64 {
    let n = counts.len();
    let total: usize = counts.iter().sum();
    if n <= 1 || total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}

/// Unweighted mean of the per-parameter normalized entropies.
pub fn cumulative_entropy(counts: &[Vec<usize>]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().map(|c| normalized_entropy(c)).sum::<f64>() / counts.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    pub run_id: String,
    pub method: String,
    pub dataset: String,
    pub per_parameter: Vec<f64>,
    pub cumulative: f64,
    /// Cumulative entropy over the prefix ending at the first best value.
    pub entropy_to_best: Option<f64>,
    pub best_index: Option<usize>,
    pub best_value: Option<f64>,
}

pub fn entropy_report(t: &Trajectory) -> EntropyReport {
    let counts = selection_counts(&t.space, t.suggestions());
    let best = t.best();
    let entropy_to_best = best.map(|(idx, _)| cumulative_entropy(&selection_counts(&t.space, t.suggestions().take(idx))));
    EntropyReport {
        run_id: t.run_id.clone(),
        method: t.method.clone(),
        dataset: t.dataset.clone(),
        per_parameter: counts.iter().map(|c| normalized_entropy(c)).collect(),
        cumulative: cumulative_entropy(&counts),
        entropy_to_best,
        best_index: best.map(|b| b.0),
        best_value: best.map(|b| b.1),
    }
}

/// First 1-based position whose value exceeds `fraction * reference_max`.
pub fn convergence_iteration(values: &[Option<f64>], fraction: f64, reference_max: f64) -> Option<usize> {
    let threshold = fraction * reference_max;
    values.iter().position(|v| v.is_some_and(|v| v > threshold)).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Parameter;
    use proptest::prelude::*;

    #[test]
    fn boundary_cases() {
        assert_eq!(normalized_entropy(&[1, 1, 1, 1]), 1.0);
        assert_eq!(normalized_entropy(&[4, 0, 0]), 0.0);
        assert_eq!(normalized_entropy(&[2, 1, 1, 0]), 0.75);
        assert_eq!(normalized_entropy(&[7]), 0.0);
        assert_eq!(normalized_entropy(&[0, 0]), 0.0);
    }

    #[test]
    fn counts_hand_example() {
        let space = ParameterSpace::new(vec![Parameter::new("p", ["a", "b", "c", "d"])]).unwrap();
        let seq: Vec<Assignment> = ["a", "a", "b", "c"].iter().map(|l| Assignment::new(vec![l.to_string()])).collect();
        assert_eq!(selection_counts(&space, &seq), vec![vec![2, 1, 1, 0]]);
        let bad = [Assignment::new(vec!["zzz".into()])];
        assert_eq!(selection_counts(&space, &bad), vec![vec![0, 0, 0, 0]]);
    }

    #[test]
    fn cumulative_is_mean() {
        // one bit over 16 options normalizes to 0.25
        let mut sixteen = vec![0; 16];
        sixteen[0] = 1;
        sixteen[1] = 1;
        assert_eq!(normalized_entropy(&sixteen), 0.25);
        assert_eq!(cumulative_entropy(&[vec![2, 1, 1, 0], sixteen]), 0.5);
        assert_eq!(cumulative_entropy(&[vec![3, 3], vec![1, 1, 1]]), 1.0);
    }

    #[test]
    fn convergence_scan() {
        let v: Vec<Option<f64>> = [10.0, 50.0, 85.0, 90.0].iter().map(|&x| Some(x)).collect();
        assert_eq!(convergence_iteration(&v, 0.8, 100.0), Some(3));
        assert_eq!(convergence_iteration(&v, 0.95, 100.0), None);
        assert_eq!(convergence_iteration(&v, 0.05, 100.0), Some(1));
        assert_eq!(convergence_iteration(&[None, Some(90.0)], 0.8, 100.0), Some(2));
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_label_invariant(mut c in prop::collection::vec(0usize..6, 1..9)) {
            prop_assume!(c.iter().sum::<usize>() > 0);
            let h = normalized_entropy(&c);
            prop_assert!((0.0..=1.0).contains(&h));
            c.reverse();
            prop_assert!((normalized_entropy(&c) - h).abs() < 1e-12);
        }

        #[test]
        fn flattening_never_decreases(c in prop::collection::vec(0usize..6, 2..9)) {
            let (modal, _) = c.iter().enumerate().max_by_key(|(_, v)| **v).unwrap();
            if let Some(zero) = c.iter().position(|&v| v == 0) {
                prop_assume!(c[modal] > 0);
                let mut f = c.clone();
                f[modal] -= 1;
                f[zero] += 1;
                prop_assert!(normalized_entropy(&f) >= normalized_entropy(&c) - 1e-12);
            }
        }

        #[test]
        fn convergence_monotone_in_fraction(v in prop::collection::vec(0.0f64..100.0, 1..20), p in 0.01f64..0.99, q in 0.01f64..0.99) {
            let vals: Vec<Option<f64>> = v.into_iter().map(Some).collect();
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            match (convergence_iteration(&vals, lo, 100.0), convergence_iteration(&vals, hi, 100.0)) {
                (Some(a), Some(b)) => prop_assert!(a <= b),
                (None, Some(_)) => prop_assert!(false),
                _ => {}
            }
        }
    }
}
