//! Nonparametric comparison of per-run results between methods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
/// Exact rank-sum distributions are used up to this many labelings.
pub const EXACT_LABELINGS_LIMIT: f64 = 1_000_000.0;

/// 1-based midranks of the pooled sample.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Two-sided rank-sum p-value. Uses the exact permutation distribution of the
/// tie-corrected statistic when the number of labelings is small, otherwise
/// the normal approximation with tie and continuity corrections.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> f64 {
    assert!(!x.is_empty() && !y.is_empty(), "rank-sum test needs two non-empty samples");
    if binomial(x.len() + y.len(), x.len()) <= EXACT_LABELINGS_LIMIT {
        wilcoxon_rank_sum_exact(x, y)
    } else {
        wilcoxon_rank_sum_normal(x, y)
    }
}

/// Exact two-sided p: `2 * min(P(W <= w), P(W >= w))`, capped at 1, over all
/// equally likely assignments of the pooled midranks to the first sample.
pub fn wilcoxon_rank_sum_exact(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    // doubled midranks are integers
    let ranks: Vec<usize> = midranks(&pooled).iter().map(|r| (2.0 * r).round() as usize).collect();
    let n1 = x.len();
    let observed: usize = ranks[..n1].iter().sum();
    let max_sum: usize = ranks.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1.0;
    for &r in &ranks {
        for k in (1..=n1).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let (prev, cur) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let dist = &ways[n1];
    let total: f64 = dist.iter().sum();
    let le: f64 = dist[..=observed].iter().sum();
    let ge: f64 = dist[observed..].iter().sum();
    (2.0 * le.min(ge) / total).min(1.0)
}

pub fn wilcoxon_rank_sum_normal(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let n = n1 + n2;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..x.len()].iter().sum();
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (((w - n1 * (n + 1.0) / 2.0).abs() - 0.5).max(0.0)) / var.sqrt();
    (2.0 * (1.0 - Normal::standard().cdf(z))).min(1.0)
}

/// `(#{x > y} - #{x < y}) / (|x| |y|)` over all pairs.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> f64 {
    assert!(!x.is_empty() && !y.is_empty(), "Cliff's delta needs two non-empty samples");
    let mut score: i64 = 0;
    for a in x {
        for b in y {
            score += (a > b) as i64 - (a < b) as i64;
        }
    }
    score as f64 / (x.len() * y.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectSize {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectSize {
    pub fn from_delta(delta: f64) -> Self {
        match delta.abs() {
            d if d < 0.147 => EffectSize::Negligible,
            d if d < 0.33 => EffectSize::Small,
            d if d < 0.474 => EffectSize::Medium,
            _ => EffectSize::Large,
        }
    }
}

impl std::fmt::Display for EffectSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EffectSize::Negligible => "negligible",
            EffectSize::Small => "small",
            EffectSize::Medium => "medium",
            EffectSize::Large => "large",
        })
    }
}

pub fn median(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Medians of `n_boot` resamples drawn with `ChaCha8Rng::seed_from_u64(seed)`;
/// each resample takes `n` indices from `gen_range(0..n)` in order.
pub fn bootstrap_medians(sample: &[f64], n_boot: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sample.len();
    let mut buf = vec![0.0; n];
    (0..n_boot)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = sample[rng.gen_range(0..n)];
            }
            median(&buf)
        })
        .collect()
}

/// Percentile bootstrap interval for the median. The interval is widened to
/// contain the sample median if the percentiles fall on one side of it.
pub fn bootstrap_median_ci(sample: &[f64], n_boot: usize, confidence: f64, seed: u64) -> BootstrapCi {
    assert!(!sample.is_empty(), "bootstrap needs a non-empty sample");
    let m = median(sample);
    let mut meds = bootstrap_medians(sample, n_boot.max(1), seed);
    meds.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    BootstrapCi {
        median: m,
        lower: percentile_sorted(&meds, alpha).min(m),
        upper: percentile_sorted(&meds, 1.0 - alpha).max(m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Median difference to the baseline method, when one is named.
    pub vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseComparison {
    pub method_a: String,
    pub method_b: String,
    pub p_value: f64,
    pub delta: f64,
    pub label: EffectSize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub methods: Vec<MethodSummary>,
    /// One entry per unordered pair, in group order.
    pub pairs: Vec<PairwiseComparison>,
}

impl StatsReport {
    /// Full antisymmetric delta matrix in method order.
    pub fn delta_matrix(&self) -> Vec<Vec<f64>> {
        let idx = |m: &str| self.methods.iter().position(|s| s.method == m).expect("known method");
        let k = self.methods.len();
        let mut d = vec![vec![0.0; k]; k];
        for p in &self.pairs {
            let (a, b) = (idx(&p.method_a), idx(&p.method_b));
            d[a][b] = p.delta;
            d[b][a] = -p.delta;
        }
        d
    }
}

/// Pairwise tests and per-method summaries. `groups` keeps its order; empty
/// groups are skipped.
pub fn stats_battery(groups: &[(String, Vec<f64>)], baseline: Option<&str>, n_boot: usize, seed: u64) -> StatsReport {
    let groups: Vec<&(String, Vec<f64>)> = groups.iter().filter(|(_, v)| !v.is_empty()).collect();
    let base_median = baseline.and_then(|b| groups.iter().find(|(m, _)| m == b)).map(|(_, v)| median(v));
    let methods = groups
        .iter()
        .enumerate()
        .map(|(i, (name, v))| {
            let ci = bootstrap_median_ci(v, n_boot, DEFAULT_CONFIDENCE, seed ^ i as u64);
            MethodSummary {
                method: name.clone(),
                n: v.len(),
                median: ci.median,
                mean: v.iter().sum::<f64>() / v.len() as f64,
                ci_lower: ci.lower,
                ci_upper: ci.upper,
                vs_baseline: base_median.map(|b| ci.median - b),
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let delta = cliffs_delta(&groups[i].1, &groups[j].1);
            pairs.push(PairwiseComparison {
                method_a: groups[i].0.clone(),
                method_b: groups[j].0.clone(),
                p_value: wilcoxon_rank_sum(&groups[i].1, &groups[j].1),
                delta,
                label: EffectSize::from_delta(delta),
            });
        }
    }
    StatsReport { methods, pairs }
}
