//! Leaderboard over published campaigns.

use std::cmp::Ordering;

use arena_core::analytics::median;
use arena_core::campaign::Trajectory;
use arena_core::Goal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// 1-based position within the dataset's board.
    pub rank: usize,
    pub dataset: String,
    pub method: String,
    pub modality: String,
    pub median_best: f64,
    pub mean_best: f64,
    pub runs: usize,
    /// Campaign ids whose trajectories make up this entry.
    pub trajectories: Vec<String>,
}

/// Better entries first: median, then mean, then method name for stability.
pub fn compare_entries(a: &LeaderboardEntry, b: &LeaderboardEntry, goal: Goal) -> Ordering {
    let key = |x: f64| goal.sign() * x;
    key(b.median_best)
        .total_cmp(&key(a.median_best))
        .then(key(b.mean_best).total_cmp(&key(a.mean_best)))
        .then_with(|| a.method.cmp(&b.method))
}

pub fn rank_entries(entries: &mut [LeaderboardEntry], goal: Goal) {
    entries.sort_by(|a, b| compare_entries(a, b, goal));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

/// Groups published runs by (dataset, method) and ranks each dataset's board.
/// Runs without any observed value are skipped.
pub fn build_leaderboard<'a>(published: impl IntoIterator<Item = (&'a str, &'a Trajectory)>) -> Vec<LeaderboardEntry> {
    let mut groups: Vec<(LeaderboardEntry, Vec<f64>, Goal)> = Vec::new();
    for (id, t) in published {
        let Some((_, best)) = t.best() else { continue };
        match groups
            .iter_mut()
            .find(|(e, _, _)| e.dataset == t.dataset && e.method == t.method)
        {
            Some((e, values, _)) => {
                e.trajectories.push(id.to_string());
                values.push(best);
            }
            None => groups.push((
                LeaderboardEntry {
                    rank: 0,
                    dataset: t.dataset.clone(),
                    method: t.method.clone(),
                    modality: t.config.method.modality().to_string(),
                    median_best: 0.0,
                    mean_best: 0.0,
                    runs: 0,
                    trajectories: vec![id.to_string()],
                },
                vec![best],
                t.reporting_goal(),
            )),
        }
    }
    let mut datasets: Vec<String> = groups.iter().map(|(e, _, _)| e.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();
    let mut out = Vec::new();
    for d in datasets {
        let mut goal = Goal::Maximize;
        let mut board: Vec<LeaderboardEntry> = groups
            .iter()
            .filter(|(e, _, _)| e.dataset == d)
            .map(|(e, values, g)| {
                goal = *g;
                LeaderboardEntry {
                    median_best: median(values),
                    mean_best: values.iter().sum::<f64>() / values.len() as f64,
                    runs: values.len(),
                    ..e.clone()
                }
            })
            .collect();
        rank_entries(&mut board, goal);
        out.extend(board);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(method: &str, median: f64, mean: f64) -> LeaderboardEntry {
        LeaderboardEntry {
            rank: 0,
            dataset: "d".into(),
            method: method.into(),
            modality: "human".into(),
            median_best: median,
            mean_best: mean,
            runs: 1,
            trajectories: vec![],
        }
    }

    #[test]
    fn median_then_mean() {
        let mut e = vec![entry("low", 80.0, 99.0), entry("high", 90.0, 10.0)];
        rank_entries(&mut e, Goal::Maximize);
        assert_eq!(e[0].method, "high");
        let mut e = vec![entry("a", 85.0, 82.0), entry("b", 85.0, 85.0)];
        rank_entries(&mut e, Goal::Maximize);
        assert_eq!((e[0].method.as_str(), e[0].rank), ("b", 1));
        rank_entries(&mut e, Goal::Minimize);
        assert_eq!(e[0].method, "a");
    }
}
