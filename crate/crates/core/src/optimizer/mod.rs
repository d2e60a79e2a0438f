//! The suggest/observe session contract shared by every optimizer modality.
//!
//! A session owns the budget and the history; a [`Strategy`] decides what to
//! propose next. Suggestions and observations strictly alternate per batch.

pub mod bo;
pub mod random;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{aggregate_group, AggregationPolicy, Measurement};
use crate::space::{Assignment, ObjectiveSpec, ParameterSpace};

pub use random::RandomStrategy;

/// Default campaign budget B.
pub const DEFAULT_BUDGET: usize = 20;
/// Default batch size b.
pub const DEFAULT_BATCH: usize = 1;

/// Seed for repeat `index` of a campaign battery.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ index
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("budget exhausted: the session is complete")]
    SessionComplete,
    #[error("every assignment in the space has already been suggested")]
    SpaceExhausted,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("provider failure: {0}")]
    Provider(String),
}

/// What came back from the lookup table for one suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// Every replicate measurement for the assignment.
    Measured(Vec<Measurement>),
    /// The assignment is not in the table (or not in the space); charged to the budget.
    Missing,
}

impl Observation {
    pub fn measurements(&self) -> Option<&[Measurement]> {
        match self {
            Observation::Measured(m) => Some(m),
            Observation::Missing => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Observation::Missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    /// A label outside the declared option list.
    InvalidOption,
    /// Structurally valid but absent from the lookup table.
    OffTable,
}

/// Structured reasoning attached to a suggestion (empty for random and BO).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reasoning {
    #[serde(default)]
    pub analysis: String,
    #[serde(default)]
    pub hypothesis: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub assignments: Vec<Assignment>,
    /// Parallel to `assignments`.
    pub validity: Vec<Validity>,
    pub reasoning: Option<Reasoning>,
}

impl Suggestion {
    pub fn valid(assignments: Vec<Assignment>) -> Self {
        let validity = vec![Validity::Valid; assignments.len()];
        Self {
            assignments,
            validity,
            reasoning: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub assignment: Assignment,
    pub observation: Observation,
}

/// Read-only view a strategy gets of its session.
pub struct SessionContext<'a> {
    pub space: &'a ParameterSpace,
    pub objectives: &'a [ObjectiveSpec],
    pub policy: &'a AggregationPolicy,
    pub history: &'a [HistoryEntry],
    pub budget: usize,
    pub batch: usize,
}

/// Modality-specific suggestion policy.
pub trait Strategy: Send {
    fn name(&self) -> &str;

    /// Proposes `count` assignments given the history so far.
    fn propose(&mut self, ctx: &SessionContext<'_>, count: usize) -> Result<Suggestion, OptimizerError>;
}

pub struct OptimizerSession {
    space: ParameterSpace,
    objectives: Vec<ObjectiveSpec>,
    policy: AggregationPolicy,
    budget: usize,
    batch: usize,
    history: Vec<HistoryEntry>,
    outstanding: Option<Vec<Assignment>>,
    issued: usize,
    strategy: Box<dyn Strategy>,
}

impl std::fmt::Debug for OptimizerSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OptimizerSession")
            .field("strategy", &self.strategy.name())
            .field("budget", &self.budget)
            .field("batch", &self.batch)
            .field("issued", &self.issued)
            .field("history", &self.history.len())
            .finish()
    }
}

impl OptimizerSession {
    pub fn new(
        space: ParameterSpace,
        objectives: Vec<ObjectiveSpec>,
        policy: AggregationPolicy,
        budget: usize,
        batch: usize,
        strategy: Box<dyn Strategy>,
    ) -> Result<Self, OptimizerError> {
        if budget == 0 || batch == 0 {
            return Err(OptimizerError::Config("budget and batch size must be at least 1".into()));
        }
        Ok(Self {
            space,
            objectives,
            policy,
            budget,
            batch,
            history: Vec::new(),
            outstanding: None,
            issued: 0,
            strategy,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn objectives(&self) -> &[ObjectiveSpec] {
        &self.objectives
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn issued(&self) -> usize {
        self.issued
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.issued
    }

    pub fn is_complete(&self) -> bool {
        self.issued >= self.budget && self.outstanding.is_none()
    }

    pub fn strategy_name(&self) -> &str {
        self.strategy.name()
    }

    fn check_can_suggest(&self) -> Result<usize, OptimizerError> {
        if self.outstanding.is_some() {
            return Err(OptimizerError::Protocol(
                "previous batch has not been observed".into(),
            ));
        }
        if self.issued >= self.budget {
            return Err(OptimizerError::SessionComplete);
        }
        Ok(self.batch.min(self.budget - self.issued))
    }

    pub fn suggest(&mut self) -> Result<Suggestion, OptimizerError> {
        let count = self.check_can_suggest()?;
        let ctx = SessionContext {
            space: &self.space,
            objectives: &self.objectives,
            policy: &self.policy,
            history: &self.history,
            budget: self.budget,
            batch: self.batch,
        };
        let suggestion = self.strategy.propose(&ctx, count)?;
        if suggestion.assignments.len() != count || suggestion.validity.len() != count {
            return Err(OptimizerError::Protocol(format!(
                "strategy returned {} assignments for a batch of {count}",
                suggestion.assignments.len()
            )));
        }
        self.issued += count;
        self.outstanding = Some(suggestion.assignments.clone());
        Ok(suggestion)
    }

    /// Registers an externally chosen batch (human modality) in place of
    /// [`suggest`](Self::suggest); the same budget and alternation rules apply.
    pub fn submit(&mut self, assignments: Vec<Assignment>) -> Result<(), OptimizerError> {
        let count = self.check_can_suggest()?;
        if assignments.len() != count {
            return Err(OptimizerError::Protocol(format!(
                "expected a batch of {count}, got {}",
                assignments.len()
            )));
        }
        self.issued += count;
        self.outstanding = Some(assignments);
        Ok(())
    }

    pub fn observe(&mut self, results: Vec<(Assignment, Observation)>) -> Result<(), OptimizerError> {
        let Some(expected) = self.outstanding.as_ref() else {
            return Err(OptimizerError::Protocol("no outstanding batch to observe".into()));
        };
        if results.len() != expected.len() {
            return Err(OptimizerError::Protocol(format!(
                "expected {} observations, got {}",
                expected.len(),
                results.len()
            )));
        }
        if let Some((got, want)) = results
            .iter()
            .map(|(a, _)| a)
            .zip(expected)
            .find(|(a, b)| a != b)
        {
            return Err(OptimizerError::Protocol(format!(
                "observation for {got} does not match outstanding suggestion {want}"
            )));
        }
        self.outstanding = None;
        self.history.extend(
            results
                .into_iter()
                .map(|(assignment, observation)| HistoryEntry { assignment, observation }),
        );
        Ok(())
    }

    pub fn best_so_far(&self, policy: &AggregationPolicy) -> Option<(Assignment, f64)> {
        best_in_history(&self.history, &self.objectives, policy)
    }
}

/// Best aggregated entry under the reporting goal; earliest wins ties.
pub fn best_in_history(
    history: &[HistoryEntry],
    objectives: &[ObjectiveSpec],
    policy: &AggregationPolicy,
) -> Option<(Assignment, f64)> {
    let goal = policy.reporting_goal(objectives);
    let mut best: Option<(Assignment, f64)> = None;
    for entry in history {
        let Some(m) = entry.observation.measurements() else { continue };
        let Ok(v) = aggregate_group(m, policy, 0) else { continue };
        if best.as_ref().is_none_or(|(_, b)| goal.better(v, *b)) {
            best = Some((entry.assignment.clone(), v));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Goal, Parameter};

    struct Fixed(Vec<Assignment>);

    impl Strategy for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn propose(&mut self, _: &SessionContext<'_>, count: usize) -> Result<Suggestion, OptimizerError> {
            Ok(Suggestion::valid(self.0.drain(..count).collect()))
        }
    }

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![Parameter::new("p", ["a", "b", "c"])]).unwrap()
    }

    fn a(l: &str) -> Assignment {
        Assignment::new(vec![l.into()])
    }

    fn session(budget: usize, goal: Goal) -> OptimizerSession {
        OptimizerSession::new(
            space(),
            vec![ObjectiveSpec::new("y", goal)],
            AggregationPolicy::default(),
            budget,
            1,
            Box::new(Fixed(vec![a("a"), a("b"), a("c")])),
        )
        .unwrap()
    }

    #[test]
    fn alternation_is_enforced() {
        let mut s = session(3, Goal::Maximize);
        let sug = s.suggest().unwrap();
        assert!(matches!(s.suggest(), Err(OptimizerError::Protocol(_))));
        assert!(matches!(s.observe(vec![]), Err(OptimizerError::Protocol(_))));
        assert!(matches!(
            s.observe(vec![(a("z"), Observation::Missing)]),
            Err(OptimizerError::Protocol(_))
        ));
        s.observe(vec![(sug.assignments[0].clone(), Observation::Measured(vec![vec![55.0]]))])
            .unwrap();
        assert_eq!(s.history().len(), 1);
        assert!(matches!(
            s.observe(vec![(a("a"), Observation::Missing)]),
            Err(OptimizerError::Protocol(_))
        ));
    }

    #[test]
    fn missing_observations_consume_budget() {
        let mut s = session(2, Goal::Maximize);
        let sug = s.suggest().unwrap();
        s.observe(vec![(sug.assignments[0].clone(), Observation::Missing)]).unwrap();
        assert_eq!(s.history().len(), 1);
        assert_eq!(s.remaining(), 1);
        assert_eq!(s.best_so_far(&AggregationPolicy::default()), None);
        let sug = s.suggest().unwrap();
        s.observe(vec![(sug.assignments[0].clone(), Observation::Measured(vec![vec![1.0]]))])
            .unwrap();
        assert!(matches!(s.suggest(), Err(OptimizerError::SessionComplete)));
        assert!(s.is_complete());
    }

    #[test]
    fn best_follows_goal_direction() {
        for (goal, expected) in [(Goal::Maximize, 50.0), (Goal::Minimize, 10.0)] {
            let mut s = session(3, goal);
            for v in [10.0, 50.0, 30.0] {
                let sug = s.suggest().unwrap();
                s.observe(vec![(sug.assignments[0].clone(), Observation::Measured(vec![vec![v]]))])
                    .unwrap();
            }
            assert_eq!(s.best_so_far(&AggregationPolicy::default()).unwrap().1, expected);
        }
    }

    #[test]
    fn zero_budget_or_batch_rejected() {
        let mk = |b, n| {
            OptimizerSession::new(
                space(),
                vec![ObjectiveSpec::new("y", Goal::Maximize)],
                AggregationPolicy::default(),
                b,
                n,
                Box::new(Fixed(vec![])),
            )
        };
        assert!(mk(0, 1).is_err());
        assert!(mk(1, 0).is_err());
    }
}
