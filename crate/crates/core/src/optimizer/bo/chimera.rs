//! Hierarchical multi-objective scalarization with relative tolerances.
//!
//! Objectives are visited in hierarchy order. At each level the acceptable
//! region is `[best - tolerance * range, best]`, with best and range taken over
//! the candidates that survived every earlier level. A candidate's merit first
//! reflects how deep it got, then its value on the objective that stopped it
//! (or on the last objective if it passed every level). Lower merit is better.
//! All objectives are expected in maximization form.

use thiserror::Error;

/// Relative tolerance applied to every objective unless configured otherwise.
pub const DEFAULT_TOLERANCE: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChimeraError {
    #[error("no candidates to scalarize")]
    Empty,
    #[error("candidate {0} has {1} values, expected {2}")]
    Arity(usize, usize, usize),
    #[error("tolerance {0} outside [0, 1]")]
    Tolerance(f64),
    #[error("non-finite objective value")]
    NonFinite,
}

fn validate(values: &[Vec<f64>], tolerances: &[f64]) -> Result<(), ChimeraError> {
    if values.is_empty() {
        return Err(ChimeraError::Empty);
    }
    if let Some(t) = tolerances.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(ChimeraError::Tolerance(*t));
    }
    for (i, v) in values.iter().enumerate() {
        if v.len() != tolerances.len() {
            return Err(ChimeraError::Arity(i, v.len(), tolerances.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ChimeraError::NonFinite);
        }
    }
    Ok(())
}

/// Per-level acceptance thresholds derived from a reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChimeraCascade {
    pub thresholds: Vec<f64>,
    /// Best value of each level's objective within that level's region.
    pub region_best: Vec<f64>,
}

impl ChimeraCascade {
    pub fn from_reference(values: &[Vec<f64>], tolerances: &[f64]) -> Result<Self, ChimeraError> {
        validate(values, tolerances)?;
        let mut region: Vec<&Vec<f64>> = values.iter().collect();
        let mut thresholds = Vec::with_capacity(tolerances.len());
        let mut region_best = Vec::with_capacity(tolerances.len());
        for (k, &t) in tolerances.iter().enumerate() {
            let best = region.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
            let worst = region.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
            let threshold = best - t * (best - worst);
            region.retain(|v| v[k] >= threshold);
            thresholds.push(threshold);
            region_best.push(best);
        }
        Ok(Self { thresholds, region_best })
    }

    /// Number of leading levels whose threshold `v` meets.
    pub fn depth(&self, v: &[f64]) -> usize {
        self.thresholds
            .iter()
            .zip(v)
            .take_while(|(t, x)| *x >= *t)
            .count()
    }

    pub fn levels(&self) -> usize {
        self.thresholds.len()
    }
}

/// Merits for a candidate set, thresholds computed over the set itself.
pub fn chimera_scalarize(values: &[Vec<f64>], tolerances: &[f64]) -> Result<Vec<f64>, ChimeraError> {
    let cascade = ChimeraCascade::from_reference(values, tolerances)?;
    let levels = cascade.levels();
    let depth: Vec<usize> = values.iter().map(|v| cascade.depth(v)).collect();

    let mut merits = vec![0.0; values.len()];
    for d in 0..=levels {
        let objective = d.min(levels - 1);
        let members: Vec<usize> = (0..values.len()).filter(|&i| depth[i] == d).collect();
        if members.is_empty() {
            continue;
        }
        let hi = members.iter().map(|&i| values[i][objective]).fold(f64::NEG_INFINITY, f64::max);
        let lo = members.iter().map(|&i| values[i][objective]).fold(f64::INFINITY, f64::min);
        for &i in &members {
            let within = if hi > lo { 0.5 * (hi - values[i][objective]) / (hi - lo) } else { 0.0 };
            merits[i] = (levels - d) as f64 + within;
        }
    }
    Ok(merits)
}
