//! Categorical parameter spaces, assignments and objective declarations.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard ceiling on the number of enumerable assignments.
pub const MAX_SPACE_SIZE: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("parameter space has no parameters")]
    Empty,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("parameter `{0}` needs at least 2 options, found {1}")]
    TooFewOptions(String, usize),
    #[error("parameter `{param}` lists option `{option}` more than once")]
    DuplicateOption { param: String, option: String },
    #[error("parameter space of {0} assignments exceeds the enumeration limit")]
    TooLarge(u128),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown option `{option}` for parameter `{param}`")]
    UnknownOption { param: String, option: String },
    #[error("assignment has {found} values but the space has {expected} parameters")]
    Arity { expected: usize, found: usize },
    #[error("assignment is missing parameter `{0}`")]
    MissingParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub options: Vec<String>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, options: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            options: options.into_iter().map(Into::into).collect(),
        }
    }

    pub fn option_index(&self, label: &str) -> Option<usize> {
        self.options.iter().position(|o| o == label)
    }
}

/// An ordered list of categorical parameters. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Parameter>", into = "Vec<Parameter>")]
pub struct ParameterSpace {
    parameters: Vec<Parameter>,
    size: usize,
}

impl TryFrom<Vec<Parameter>> for ParameterSpace {
    type Error = SpaceError;

    fn try_from(parameters: Vec<Parameter>) -> Result<Self, Self::Error> {
        Self::new(parameters)
    }
}

impl From<ParameterSpace> for Vec<Parameter> {
    fn from(space: ParameterSpace) -> Self {
        space.parameters
    }
}

impl ParameterSpace {
    pub fn new(parameters: Vec<Parameter>) -> Result<Self, SpaceError> {
        if parameters.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut names = HashSet::new();
        let mut size: u128 = 1;
        for p in &parameters {
            if !names.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateParameter(p.name.clone()));
            }
            if p.options.len() < 2 {
                return Err(SpaceError::TooFewOptions(p.name.clone(), p.options.len()));
            }
            let mut seen = HashSet::new();
            for o in &p.options {
                if !seen.insert(o.as_str()) {
                    return Err(SpaceError::DuplicateOption {
                        param: p.name.clone(),
                        option: o.clone(),
                    });
                }
            }
            size = size.saturating_mul(p.options.len() as u128);
            if size > MAX_SPACE_SIZE as u128 {
                return Err(SpaceError::TooLarge(size));
            }
        }
        Ok(Self {
            parameters,
            size: size as usize,
        })
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    /// Number of parameters (K).
    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    /// Option counts n_i in parameter order.
    pub fn option_counts(&self) -> Vec<usize> {
        self.parameters.iter().map(|p| p.options.len()).collect()
    }

    /// Total number of full assignments, the product of option counts.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    /// Resolves labels to option indices.
    pub fn indices_of(&self, assignment: &Assignment) -> Result<Vec<usize>, SpaceError> {
        if assignment.len() != self.len() {
            return Err(SpaceError::Arity {
                expected: self.len(),
                found: assignment.len(),
            });
        }
        self.parameters
            .iter()
            .zip(assignment.labels())
            .map(|(p, label)| {
                p.option_index(label).ok_or_else(|| SpaceError::UnknownOption {
                    param: p.name.clone(),
                    option: label.clone(),
                })
            })
            .collect()
    }

    /// Mixed-radix rank of an index vector; the first parameter is most significant,
    /// so ranks follow the lexicographic enumeration order.
    pub fn rank(&self, indices: &[usize]) -> usize {
        debug_assert_eq!(indices.len(), self.len());
        self.parameters
            .iter()
            .zip(indices)
            .fold(0usize, |acc, (p, &i)| acc * p.options.len() + i)
    }

    pub fn unrank(&self, mut rank: usize) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for (slot, p) in out.iter_mut().zip(&self.parameters).rev() {
            let n = p.options.len();
            *slot = rank % n;
            rank /= n;
        }
        out
    }

    pub fn assignment_from_indices(&self, indices: &[usize]) -> Assignment {
        Assignment::new(
            self.parameters
                .iter()
                .zip(indices)
                .map(|(p, &i)| p.options[i].clone())
                .collect(),
        )
    }

    pub fn assignment_at(&self, rank: usize) -> Assignment {
        self.assignment_from_indices(&self.unrank(rank))
    }

    /// All full assignments in lexicographic (parameter index, option index) order.
    pub fn enumerate(&self) -> Vec<Assignment> {
        (0..self.size).map(|r| self.assignment_at(r)).collect()
    }

    /// Builds an assignment from `(parameter, option)` pairs given in any order.
    pub fn assignment_from_pairs<'a>(
        &self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Assignment, SpaceError> {
        let mut labels: Vec<Option<String>> = vec![None; self.len()];
        for (name, option) in pairs {
            let i = self
                .parameter_index(name)
                .ok_or_else(|| SpaceError::UnknownParameter(name.to_string()))?;
            labels[i] = Some(option.to_string());
        }
        let labels = labels
            .into_iter()
            .zip(&self.parameters)
            .map(|(l, p)| l.ok_or_else(|| SpaceError::MissingParameter(p.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Assignment::new(labels))
    }
}

/// Option labels aligned with the parameter order of a space.
///
/// Labels are opaque and carried verbatim; an assignment coming from a language
/// model may hold labels that are not in the space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<String>);

impl Assignment {
    pub fn new(labels: Vec<String>) -> Self {
        Self(labels)
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Maximize,
    Minimize,
}

impl Goal {
    /// Sign that turns this goal into maximization.
    pub fn sign(self) -> f64 {
        match self {
            Goal::Maximize => 1.0,
            Goal::Minimize => -1.0,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Goal::Maximize => a > b,
            Goal::Minimize => a < b,
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Goal::Maximize => "maximize",
            Goal::Minimize => "minimize",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub goal: Goal,
    /// Relative tolerance used by hierarchical scalarization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl ObjectiveSpec {
    pub fn new(name: impl Into<String>, goal: Goal) -> Self {
        Self {
            name: name.into(),
            goal,
            tolerance: None,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }
}
