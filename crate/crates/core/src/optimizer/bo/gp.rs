//! Gaussian-process regression with a categorical Hamming kernel or a
//! Matern-5/2 ARD kernel, fit by multi-start coordinate search on the log
//! marginal likelihood.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::optimizer::OptimizerError;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (0.05, 20.0);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (0.1, 10.0);
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-6, 1.0);
pub const DEFAULT_RESTARTS: usize = 8;
const JITTER_LADDER: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `sf2 * exp(-(1/K) * sum_i [block_i differs] / l_i)`, one lengthscale per block.
    Hamming { blocks: Vec<Range<usize>> },
    /// Matern-5/2 with one lengthscale per column.
    Matern52 { dims: usize },
}

impl KernelKind {
    pub fn n_lengthscales(&self) -> usize {
        match self {
            KernelKind::Hamming { blocks } => blocks.len(),
            KernelKind::Matern52 { dims } => *dims,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn unit(n_lengthscales: usize) -> Self {
        Self {
            lengthscales: vec![1.0; n_lengthscales],
            signal_variance: 1.0,
            noise_variance: NOISE_VARIANCE_BOUNDS.0,
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let n = theta.len() - 2;
        Self {
            lengthscales: theta[..n].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[n].exp(),
            noise_variance: theta[n + 1].exp(),
        }
    }
}

pub fn kernel(kind: &KernelKind, hyper: &Hyperparameters, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        KernelKind::Hamming { blocks } => {
            let k = blocks.len() as f64;
            let s: f64 = blocks
                .iter()
                .zip(&hyper.lengthscales)
                .filter(|(r, _)| a[(*r).clone()] != b[(*r).clone()])
                .map(|(_, l)| 1.0 / l)
                .sum();
            hyper.signal_variance * (-s / k).exp()
        }
        KernelKind::Matern52 { .. } => {
            let r2: f64 = a
                .iter()
                .zip(b)
                .zip(&hyper.lengthscales)
                .map(|((x, y), l)| ((x - y) / l).powi(2))
                .sum();
            let r = (5.0 * r2).sqrt();
            hyper.signal_variance * (1.0 + r + r * r / 3.0) * (-r).exp()
        }
    }
}

fn gram(kind: &KernelKind, hyper: &Hyperparameters, x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(kind, hyper, &x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += hyper.noise_variance;
    }
    k
}

/// Cholesky with escalating diagonal jitter.
fn factor(mut k: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, OptimizerError> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok(c);
    }
    let mut added = 0.0;
    for j in JITTER_LADDER {
        for i in 0..k.nrows() {
            k[(i, i)] += j - added;
        }
        added = j;
        if let Some(c) = Cholesky::new(k.clone()) {
            return Ok(c);
        }
    }
    let diag_min = (0..k.nrows()).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
    Err(OptimizerError::Numerical(format!(
        "Cholesky failed on a {n}x{n} kernel matrix after jitter up to {max:e} (min diagonal {diag_min:e})",
        n = k.nrows(),
        max = JITTER_LADDER[JITTER_LADDER.len() - 1],
    )))
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub kind: KernelKind,
    pub hyper: Hyperparameters,
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    /// Target standardization: raw = standardized * scale + offset.
    pub offset: f64,
    pub scale: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Standardizes targets to zero mean and unit variance; constant targets
/// keep scale 1.
pub fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 1e-24 * mean.abs().max(1.0).powi(2) { var.sqrt() } else { 1.0 };
    (y.iter().map(|v| (v - mean) / sd).collect(), mean, sd)
}

fn log_marginal(kind: &KernelKind, hyper: &Hyperparameters, x: &[Vec<f64>], y: &DVector<f64>) -> Option<(f64, Cholesky<f64, Dyn>, DVector<f64>)> {
    let chol = factor(gram(kind, hyper, x)).ok()?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some((lml, chol, alpha))
}

fn bounds(n_ls: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(LENGTHSCALE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.1.ln()); n_ls];
    b.push((SIGNAL_VARIANCE_BOUNDS.0.ln(), SIGNAL_VARIANCE_BOUNDS.1.ln()));
    b.push((NOISE_VARIANCE_BOUNDS.0.ln(), NOISE_VARIANCE_BOUNDS.1.ln()));
    b
}

/// Compass search in log space, clamped to the box.
fn coordinate_search(
    start: Vec<f64>,
    bounds: &[(f64, f64)],
    mut f: impl FnMut(&[f64]) -> Option<f64>,
) -> (Vec<f64>, f64) {
    let mut theta = start;
    let mut best = f(&theta).unwrap_or(f64::NEG_INFINITY);
    let mut step = 1.0;
    let mut evals = 0;
    while step > 1e-3 && evals < 4000 {
        let mut improved = false;
        for d in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut trial = theta.clone();
                trial[d] = (trial[d] + dir * step).clamp(bounds[d].0, bounds[d].1);
                if trial[d] == theta[d] {
                    continue;
                }
                evals += 1;
                if let Some(v) = f(&trial) {
                    if v > best + 1e-10 * best.abs().max(1.0) {
                        best = v;
                        theta = trial;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (theta, best)
}

impl GpModel {
    /// Conditions on raw targets with fixed hyperparameters.
    pub fn with_hyperparameters(
        kind: KernelKind,
        hyper: Hyperparameters,
        x: Vec<Vec<f64>>,
        y: &[f64],
    ) -> Result<Self, OptimizerError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(OptimizerError::Numerical("GP needs matching, non-empty inputs and targets".into()));
        }
        let (ys, offset, scale) = standardize(y);
        let yv = DVector::from_vec(ys);
        let chol = factor(gram(&kind, &hyper, &x))?;
        let alpha = chol.solve(&yv);
        let lml = log_marginal(&kind, &hyper, &x, &yv).map_or(f64::NEG_INFINITY, |r| r.0);
        Ok(Self {
            kind,
            hyper,
            x,
            chol,
            alpha,
            offset,
            scale,
            log_marginal_likelihood: lml,
        })
    }

    /// Maximizes the log marginal likelihood from `restarts` starting points
    /// (the first is the unit point, the rest uniform in the log box).
    pub fn fit<R: Rng>(
        kind: KernelKind,
        x: Vec<Vec<f64>>,
        y: &[f64],
        restarts: usize,
        rng: &mut R,
    ) -> Result<Self, OptimizerError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(OptimizerError::Numerical("GP needs matching, non-empty inputs and targets".into()));
        }
        let (ys, _, _) = standardize(y);
        let yv = DVector::from_vec(ys);
        let n_ls = kind.n_lengthscales();
        let b = bounds(n_ls);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in 0..restarts.max(1) {
            let start = if s == 0 {
                let mut h = Hyperparameters::unit(n_ls);
                h.noise_variance = 1e-3;
                h.to_log()
            } else {
                b.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
            };
            let (theta, v) = coordinate_search(start, &b, |t| {
                log_marginal(&kind, &Hyperparameters::from_log(t), &x, &yv).map(|r| r.0)
            });
            if v.is_finite() && best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((theta, v));
            }
        }
        let hyper = match best {
            Some((theta, _)) => Hyperparameters::from_log(&theta),
            None => Hyperparameters::unit(n_ls),
        };
        Self::with_hyperparameters(kind, hyper, x, y)
    }

    pub fn n_train(&self) -> usize {
        self.x.len()
    }

    /// Posterior of the latent function in standardized target units.
    pub fn predict_standardized(&self, x: &[f64]) -> Posterior {
        let k_star = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| kernel(&self.kind, &self.hyper, xi, x)));
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .unwrap_or_else(|| DVector::zeros(self.x.len()));
        let prior = kernel(&self.kind, &self.hyper, x, x);
        Posterior {
            mean,
            variance: (prior - v.norm_squared()).max(0.0),
        }
    }

    /// Posterior in raw target units.
    pub fn predict(&self, x: &[f64]) -> Posterior {
        let p = self.predict_standardized(x);
        Posterior {
            mean: p.mean * self.scale + self.offset,
            variance: p.variance * self.scale * self.scale,
        }
    }

    pub fn standardize_value(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }
}
