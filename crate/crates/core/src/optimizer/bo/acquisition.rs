//! Acquisition functions under a Gaussian posterior, maximization convention.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::Posterior;

/// UCB exploration weight; `UCB = mean + sqrt(beta) * std`.
pub const DEFAULT_UCB_BETA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    #[default]
    Ei,
    Pi,
    Ucb,
}

impl std::str::FromStr for AcquisitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(Self::Ei),
            "pi" => Ok(Self::Pi),
            "ucb" => Ok(Self::Ucb),
            other => Err(format!("unknown acquisition `{other}` (ei|pi|ucb)")),
        }
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ei => "ei",
            Self::Pi => "pi",
            Self::Ucb => "ucb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub ucb_beta: f64,
    /// Best observed value, same units as the posterior.
    pub incumbent: f64,
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn expected_improvement(p: &Posterior, incumbent: f64) -> f64 {
    let sigma = p.std();
    let gap = p.mean - incumbent;
    if sigma <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let n = std_normal();
    (gap * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

pub fn probability_of_improvement(p: &Posterior, incumbent: f64) -> f64 {
    let sigma = p.std();
    let gap = p.mean - incumbent;
    if sigma <= 0.0 {
        return if gap > 0.0 { 1.0 } else { 0.0 };
    }
    std_normal().cdf(gap / sigma)
}

pub fn upper_confidence_bound(p: &Posterior, beta: f64) -> f64 {
    p.mean + beta.sqrt() * p.std()
}

pub fn acquisition_value(spec: &AcquisitionSpec, p: &Posterior) -> f64 {
    match spec.kind {
        AcquisitionKind::Ei => expected_improvement(p, spec.incumbent),
        AcquisitionKind::Pi => probability_of_improvement(p, spec.incumbent),
        AcquisitionKind::Ucb => upper_confidence_bound(p, spec.ucb_beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid integration of max(0, x - incumbent) and of the improvement
    /// indicator against the Gaussian density, independent of the closed form.
    fn numeric(p: &Posterior, incumbent: f64) -> (f64, f64) {
        let sd = p.std();
        let (lo, hi) = (p.mean - 12.0 * sd, p.mean + 12.0 * sd);
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        let dens = |x: f64| (-(x - p.mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let (mut ei, mut pi) = (0.0, 0.0);
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            ei += w * (x - incumbent).max(0.0) * dens(x) * h;
            if x > incumbent {
                pi += w * dens(x) * h;
            }
        }
        (ei, pi)
    }

    #[test]
    fn closed_form_at_zero_gap() {
        let p = Posterior { mean: 2.0, variance: 1.0 };
        let ei = expected_improvement(&p, 2.0);
        let pi = probability_of_improvement(&p, 2.0);
        let (nei, npi) = numeric(&p, 2.0);
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!((pi - 0.5).abs() < 1e-12);
        assert!((ei - nei).abs() < 1e-6 && (pi - npi).abs() < 1e-4);
    }

    #[test]
    fn closed_form_matches_quadrature_off_center() {
        for (m, v, inc) in [(0.3, 0.25, 1.0), (-1.0, 4.0, 0.5), (3.0, 0.5, 1.0)] {
            let p = Posterior { mean: m, variance: v };
            let (nei, npi) = numeric(&p, inc);
            assert!((expected_improvement(&p, inc) - nei).abs() < 1e-6);
            assert!((probability_of_improvement(&p, inc) - npi).abs() < 1e-4);
        }
    }

    #[test]
    fn degenerate_sigma() {
        let p = Posterior { mean: 1.0, variance: 0.0 };
        assert_eq!(expected_improvement(&p, 1.0), 0.0);
        assert_eq!(probability_of_improvement(&p, 1.0), 0.0);
        assert_eq!(expected_improvement(&p, 0.25), 0.75);
        assert_eq!(probability_of_improvement(&p, 0.25), 1.0);
    }

    #[test]
    fn ucb_with_zero_beta_is_mean() {
        let p = Posterior { mean: -0.7, variance: 9.0 };
        assert_eq!(upper_confidence_bound(&p, 0.0), -0.7);
        assert_eq!(upper_confidence_bound(&p, 4.0), -0.7 + 6.0);
    }
}
