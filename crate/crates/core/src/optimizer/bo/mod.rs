//! Gaussian-process Bayesian optimization over enumerated categorical spaces.
//!
//! Each iteration fits the surrogate on every observed replicate, scores every
//! not-yet-suggested assignment with the acquisition function and returns the
//! argmax. Multi-objective datasets get one GP per objective; candidates are
//! ranked first by how many hierarchy levels their posterior means clear
//! (thresholds from the observed data) and then by the acquisition value of
//! the objective at the level they reached.

pub mod acquisition;
pub mod chimera;
pub mod featurize;
pub mod gp;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationMode;
use crate::optimizer::{OptimizerError, SessionContext, Strategy, Suggestion};

pub use acquisition::{acquisition_value, AcquisitionKind, AcquisitionSpec, DEFAULT_UCB_BETA};
pub use chimera::{chimera_scalarize, ChimeraCascade, DEFAULT_TOLERANCE};
pub use featurize::{DescriptorTable, Featurization, FeaturizationMode};
pub use gp::{GpModel, KernelKind, Posterior};

/// Random suggestions before the surrogate takes over.
pub const DEFAULT_INITIAL_POINTS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    #[serde(default)]
    pub acquisition: AcquisitionKind,
    #[serde(default = "default_beta")]
    pub ucb_beta: f64,
    #[serde(default)]
    pub featurization: FeaturizationMode,
    /// Per-objective relative tolerances in hierarchy order; falls back to the
    /// dataset's declared tolerances, then to [`DEFAULT_TOLERANCE`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Vec<f64>>,
    #[serde(default = "default_initial")]
    pub initial_points: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_beta() -> f64 {
    DEFAULT_UCB_BETA
}

fn default_initial() -> usize {
    DEFAULT_INITIAL_POINTS
}

fn default_restarts() -> usize {
    gp::DEFAULT_RESTARTS
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionKind::default(),
            ucb_beta: DEFAULT_UCB_BETA,
            featurization: FeaturizationMode::default(),
            tolerances: None,
            initial_points: DEFAULT_INITIAL_POINTS,
            restarts: gp::DEFAULT_RESTARTS,
        }
    }
}

/// Acquisition score of one unobserved candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub rank: usize,
    /// Hierarchy levels cleared (always 1 for single-objective problems).
    pub depth: usize,
    pub acquisition: f64,
}

pub struct BoStrategy {
    config: BoConfig,
    featurization: Featurization,
    rng: ChaCha8Rng,
    last_scores: Vec<CandidateScore>,
}

impl BoStrategy {
    pub fn new(config: BoConfig, featurization: Featurization, seed: u64) -> Self {
        Self {
            config,
            featurization,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_scores: Vec::new(),
        }
    }

    /// Scores from the most recent model-guided proposal.
    pub fn last_scores(&self) -> &[CandidateScore] {
        &self.last_scores
    }

    fn kernel_kind(&self) -> KernelKind {
        match self.featurization.mode {
            FeaturizationMode::OneHot => KernelKind::Hamming {
                blocks: self.featurization.block_ranges(),
            },
            FeaturizationMode::Descriptors => KernelKind::Matern52 {
                dims: self.featurization.width(),
            },
        }
    }

    fn tolerances(&self, ctx: &SessionContext<'_>) -> Vec<f64> {
        match &self.config.tolerances {
            Some(t) => t.clone(),
            None => ctx
                .objectives
                .iter()
                .map(|o| o.tolerance.unwrap_or(DEFAULT_TOLERANCE))
                .collect(),
        }
    }

    /// Fits the surrogate(s) on the history and scores every candidate rank.
    pub fn score_candidates(
        &mut self,
        ctx: &SessionContext<'_>,
        candidates: &[usize],
    ) -> Result<Vec<CandidateScore>, OptimizerError> {
        let n_obj = ctx.objectives.len();
        let signs: Vec<f64> = ctx.objectives.iter().map(|o| o.goal.sign()).collect();

        // replicate-level training data and per-assignment aggregated vectors,
        // all in maximization form
        let mut x = Vec::new();
        let mut y: Vec<Vec<f64>> = vec![Vec::new(); n_obj];
        let mut observed: Vec<Vec<f64>> = Vec::new();
        for h in ctx.history {
            let (Ok(idx), Some(group)) = (ctx.space.indices_of(&h.assignment), h.observation.measurements()) else {
                continue;
            };
            let enc = self.featurization.encode(&idx);
            for m in group {
                x.push(enc.clone());
                for k in 0..n_obj {
                    y[k].push(signs[k] * m[k]);
                }
            }
            observed.push(
                (0..n_obj)
                    .map(|k| reduce(group.iter().map(|m| signs[k] * m[k]), ctx.policy.mode))
                    .collect(),
            );
        }
        if x.is_empty() {
            return Err(OptimizerError::Numerical("no valid observations to fit".into()));
        }

        let kind = self.kernel_kind();
        let models = y
            .iter()
            .map(|yk| GpModel::fit(kind.clone(), x.clone(), yk, self.config.restarts, &mut self.rng))
            .collect::<Result<Vec<_>, _>>()?;

        let encoded: Vec<Vec<f64>> = candidates
            .iter()
            .map(|&r| self.featurization.encode(&ctx.space.unrank(r)))
            .collect();
        let spec = |model: &GpModel, incumbent: f64| AcquisitionSpec {
            kind: self.config.acquisition,
            ucb_beta: self.config.ucb_beta,
            incumbent: model.standardize_value(incumbent),
        };

        if n_obj == 1 {
            let incumbent = observed.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            let s = spec(&models[0], incumbent);
            return Ok(candidates
                .iter()
                .zip(&encoded)
                .map(|(&rank, e)| CandidateScore {
                    rank,
                    depth: 1,
                    acquisition: acquisition_value(&s, &models[0].predict_standardized(e)),
                })
                .collect());
        }

        let tolerances = self.tolerances(ctx);
        if tolerances.len() != n_obj {
            return Err(OptimizerError::Config(format!(
                "{} tolerances for {n_obj} objectives",
                tolerances.len()
            )));
        }
        let cascade = ChimeraCascade::from_reference(&observed, &tolerances)
            .map_err(|e| OptimizerError::Config(e.to_string()))?;
        let specs: Vec<AcquisitionSpec> = models
            .iter()
            .zip(&cascade.region_best)
            .map(|(m, &best)| spec(m, best))
            .collect();
        Ok(candidates
            .iter()
            .zip(&encoded)
            .map(|(&rank, e)| {
                let means: Vec<f64> = models.iter().map(|m| m.predict(e).mean).collect();
                let depth = cascade.depth(&means);
                let level = depth.min(n_obj - 1);
                CandidateScore {
                    rank,
                    depth,
                    acquisition: acquisition_value(&specs[level], &models[level].predict_standardized(e)),
                }
            })
            .collect())
    }
}

fn reduce(values: impl Iterator<Item = f64>, mode: AggregationMode) -> f64 {
    let v: Vec<f64> = values.collect();
    match mode {
        AggregationMode::LowerBound => v.iter().copied().fold(f64::INFINITY, f64::min),
        AggregationMode::UpperBound => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregationMode::Mean => v.iter().sum::<f64>() / v.len() as f64,
    }
}

fn ties_within(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl Strategy for BoStrategy {
    fn name(&self) -> &str {
        "bo"
    }

    fn propose(&mut self, ctx: &SessionContext<'_>, count: usize) -> Result<Suggestion, OptimizerError> {
        let suggested: HashSet<usize> = ctx
            .history
            .iter()
            .filter_map(|h| ctx.space.indices_of(&h.assignment).ok())
            .map(|idx| ctx.space.rank(&idx))
            .collect();
        let mut candidates: Vec<usize> = (0..ctx.space.size()).filter(|r| !suggested.contains(r)).collect();
        if candidates.len() < count {
            return Err(OptimizerError::SpaceExhausted);
        }

        let measured: HashSet<usize> = ctx
            .history
            .iter()
            .filter(|h| !h.observation.is_missing())
            .filter_map(|h| ctx.space.indices_of(&h.assignment).ok())
            .map(|idx| ctx.space.rank(&idx))
            .collect();

        let mut picks = Vec::with_capacity(count);
        if measured.len() < self.config.initial_points.max(1) {
            for _ in 0..count {
                let i = self.rng.gen_range(0..candidates.len());
                picks.push(candidates.swap_remove(i));
            }
        } else {
            let mut scores = self.score_candidates(ctx, &candidates)?;
            self.last_scores = scores.clone();
            for _ in 0..count {
                let best_depth = scores.iter().map(|s| s.depth).max().unwrap_or(0);
                let best_acq = scores
                    .iter()
                    .filter(|s| s.depth == best_depth)
                    .map(|s| s.acquisition)
                    .fold(f64::NEG_INFINITY, f64::max);
                let tied: Vec<usize> = (0..scores.len())
                    .filter(|&i| scores[i].depth == best_depth && ties_within(scores[i].acquisition, best_acq))
                    .collect();
                let choice = tied[self.rng.gen_range(0..tied.len())];
                picks.push(scores.swap_remove(choice).rank);
            }
        }
        Ok(Suggestion::valid(picks.into_iter().map(|r| ctx.space.assignment_at(r)).collect()))
    }
}
