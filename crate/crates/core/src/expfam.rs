//! Exponential-family kernel.
//!
//! Every density handled here is written as
//!
//! ```text
//! ln p(x | η) = η · t(x) − a(η)
//! ```
//!
//! with base measure h ≡ 1. The Gaussian-type families carry their
//! constant `(2π)^{-1/2}` inside `a(η)` instead of in `h`, which keeps
//! every log-density, KL divergence and mixing computation on the same
//! footing; only differences of log-densities enter the bounds, so the
//! choice of where that constant lives never changes a result.
//!
//! Natural coordinates per family (standard parameters on the right):
//!
//! | family                 | t(x)                          | η                                   |
//! |------------------------|-------------------------------|-------------------------------------|
//! | Beta                   | (ln x, ln(1−x))               | (α−1, β−1)                          |
//! | Dirichlet(K)           | (ln x₁, …, ln x_K)            | (α₁−1, …, α_K−1)                    |
//! | Gamma (shape, rate)    | (ln τ, −τ)                    | (shape−1, rate)                     |
//! | NormalGamma(μ₀,κ,a,b)  | (τμ, −τμ²/2, ln τ, −τ)        | (κμ₀, κ, a−½, b+κμ₀²/2)             |
//! | NormalKnownPrecision   | x                             | τ₀·μ                                |
//! | Normal (mean, prec.)   | (x, −x²/2)                    | (τμ, τ)                             |
//!
//! For NormalGamma, μ | τ ~ N(μ₀, 1/(κτ)) and τ ~ Gamma(a, b).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{digamma, ln_gamma, ln_multi_beta};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// An exponential family together with its natural-parameter dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Beta,
    Dirichlet { k: usize },
    Gamma,
    NormalGamma,
    NormalKnownPrecision { precision: f64 },
    /// Gaussian with unknown mean and precision over a scalar; used for
    /// regression coefficients under a fully factorized posterior.
    Normal,
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Beta => 2,
            Family::Dirichlet { k } => *k,
            Family::Gamma => 2,
            Family::NormalGamma => 4,
            Family::NormalKnownPrecision { .. } => 1,
            Family::Normal => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Beta => "Beta",
            Family::Dirichlet { .. } => "Dirichlet",
            Family::Gamma => "Gamma",
            Family::NormalGamma => "NormalGamma",
            Family::NormalKnownPrecision { .. } => "NormalKnownPrecision",
            Family::Normal => "Normal",
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Family::Dirichlet { k } if *k < 2 => Err(invalid(format!(
                "Dirichlet needs at least 2 categories, got {k}"
            ))),
            Family::NormalKnownPrecision { precision } if !(*precision > 0.0 && precision.is_finite()) => {
                Err(invalid(format!(
                    "NormalKnownPrecision precision = {precision}: requires finite > 0"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Valid-domain predicate for a natural-parameter vector.
    pub fn validate(&self, eta: &[f64]) -> Result<()> {
        self.check()?;
        if eta.len() != self.dim() {
            return Err(invalid(format!(
                "{} expects {} natural parameters, got {}",
                self.name(),
                self.dim(),
                eta.len()
            )));
        }
        if let Some(i) = eta.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("{} eta[{i}] = {} is not finite", self.name(), eta[i])));
        }
        let name = self.name();
        let require = |ok: bool, i: usize, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(invalid(format!("{name} eta[{i}] = {}: requires {what}", eta[i])))
            }
        };
        match self {
            Family::Beta | Family::Dirichlet { .. } => {
                for (i, &v) in eta.iter().enumerate() {
                    require(v > -1.0, i, "> -1 (positive concentration)")?;
                }
            }
            Family::Gamma => {
                require(eta[0] > -1.0, 0, "> -1 (positive shape)")?;
                require(eta[1] > 0.0, 1, "> 0 (positive rate)")?;
            }
            Family::NormalGamma => {
                require(eta[1] > 0.0, 1, "> 0 (positive kappa)")?;
                require(eta[2] > -0.5, 2, "> -1/2 (positive shape)")?;
                let rate = eta[3] - eta[0] * eta[0] / (2.0 * eta[1]);
                require(rate > 0.0, 3, "eta[3] - eta[0]^2/(2 eta[1]) > 0 (positive rate)")?;
            }
            Family::NormalKnownPrecision { .. } => {}
            Family::Normal => {
                require(eta[1] > 0.0, 1, "> 0 (positive precision)")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Dirichlet { k } => write!(f, "Dirichlet({k})"),
            Family::NormalKnownPrecision { precision } => {
                write!(f, "NormalKnownPrecision({precision})")
            }
            other => f.write_str(other.name()),
        }
    }
}

/// Standard (moment-style) parameterization used for I/O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Standard {
    Beta { alpha: f64, beta: f64 },
    Dirichlet { alpha: Vec<f64> },
    Gamma { shape: f64, rate: f64 },
    NormalGamma { mean: f64, kappa: f64, shape: f64, rate: f64 },
    NormalKnownPrecision { mean: f64, precision: f64 },
    Normal { mean: f64, precision: f64 },
}

/// Natural-parameter vector of one exponential-family block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    family: Family,
    eta: Vec<f64>,
}

impl NaturalParams {
    pub fn new(family: Family, eta: Vec<f64>) -> Result<Self> {
        family.validate(&eta)?;
        Ok(Self { family, eta })
    }

    pub fn from_standard(standard: &Standard) -> Result<Self> {
        let (family, eta) = match standard {
            Standard::Beta { alpha, beta } => (Family::Beta, vec![alpha - 1.0, beta - 1.0]),
            Standard::Dirichlet { alpha } => (
                Family::Dirichlet { k: alpha.len() },
                alpha.iter().map(|a| a - 1.0).collect(),
            ),
            Standard::Gamma { shape, rate } => (Family::Gamma, vec![shape - 1.0, *rate]),
            Standard::NormalGamma { mean, kappa, shape, rate } => (
                Family::NormalGamma,
                vec![kappa * mean, *kappa, shape - 0.5, rate + kappa * mean * mean / 2.0],
            ),
            Standard::NormalKnownPrecision { mean, precision } => (
                Family::NormalKnownPrecision { precision: *precision },
                vec![precision * mean],
            ),
            Standard::Normal { mean, precision } => {
                (Family::Normal, vec![precision * mean, *precision])
            }
        };
        Self::new(family, eta)
    }

    pub fn to_standard(&self) -> Standard {
        let e = &self.eta;
        match self.family {
            Family::Beta => Standard::Beta { alpha: e[0] + 1.0, beta: e[1] + 1.0 },
            Family::Dirichlet { .. } => Standard::Dirichlet {
                alpha: e.iter().map(|v| v + 1.0).collect(),
            },
            Family::Gamma => Standard::Gamma { shape: e[0] + 1.0, rate: e[1] },
            Family::NormalGamma => {
                let kappa = e[1];
                let mean = e[0] / kappa;
                Standard::NormalGamma {
                    mean,
                    kappa,
                    shape: e[2] + 0.5,
                    rate: e[3] - e[0] * mean / 2.0,
                }
            }
            Family::NormalKnownPrecision { precision } => Standard::NormalKnownPrecision {
                mean: e[0] / precision,
                precision,
            },
            Family::Normal => Standard::Normal { mean: e[0] / e[1], precision: e[1] },
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn into_eta(self) -> Vec<f64> {
        self.eta
    }

    /// The log-normalizer a(η).
    pub fn log_normalizer(&self) -> f64 {
        let e = &self.eta;
        match self.family {
            Family::Beta | Family::Dirichlet { .. } => {
                let alpha: Vec<f64> = e.iter().map(|v| v + 1.0).collect();
                ln_multi_beta(&alpha)
            }
            Family::Gamma => {
                let shape = e[0] + 1.0;
                ln_gamma(shape) - shape * e[1].ln()
            }
            Family::NormalGamma => {
                let kappa = e[1];
                let shape = e[2] + 0.5;
                let rate = e[3] - e[0] * e[0] / (2.0 * kappa);
                ln_gamma(shape) - shape * rate.ln() - 0.5 * kappa.ln() + HALF_LN_2PI
            }
            Family::NormalKnownPrecision { precision } => {
                e[0] * e[0] / (2.0 * precision) + 0.5 * (2.0 * PI / precision).ln()
            }
            Family::Normal => e[0] * e[0] / (2.0 * e[1]) - 0.5 * e[1].ln() + HALF_LN_2PI,
        }
    }

    /// Mean parameters ∇a(η) = E[t(X)].
    pub fn mean_params(&self) -> Vec<f64> {
        let e = &self.eta;
        match self.family {
            Family::Beta | Family::Dirichlet { .. } => {
                let total: f64 = e.iter().map(|v| v + 1.0).sum();
                let psi_total = digamma(total);
                e.iter().map(|v| digamma(v + 1.0) - psi_total).collect()
            }
            Family::Gamma => {
                let shape = e[0] + 1.0;
                vec![digamma(shape) - e[1].ln(), -shape / e[1]]
            }
            Family::NormalGamma => {
                let kappa = e[1];
                let mean = e[0] / kappa;
                let shape = e[2] + 0.5;
                let rate = e[3] - e[0] * mean / 2.0;
                let e_tau = shape / rate;
                vec![
                    e_tau * mean,
                    -0.5 * (e_tau * mean * mean + 1.0 / kappa),
                    digamma(shape) - rate.ln(),
                    -e_tau,
                ]
            }
            Family::NormalKnownPrecision { precision } => vec![e[0] / precision],
            Family::Normal => {
                let mean = e[0] / e[1];
                vec![mean, -0.5 * (mean * mean + 1.0 / e[1])]
            }
        }
    }

    /// Log-density η·t(x) − a(η) given the sufficient statistics t(x).
    pub fn log_density_from_stats(&self, stats: &[f64]) -> f64 {
        dot(&self.eta, stats) - self.log_normalizer()
    }

    /// KL(self ‖ other) = a(η_p) − a(η_q) − (η_p − η_q)·∇a(η_q).
    pub fn kl_divergence(&self, other: &NaturalParams) -> Result<f64> {
        self.same_family(other)?;
        let mean = self.mean_params();
        let cross: f64 = other
            .eta
            .iter()
            .zip(&self.eta)
            .zip(&mean)
            .map(|((p, q), m)| (p - q) * m)
            .sum();
        let kl = other.log_normalizer() - self.log_normalizer() - cross;
        // Rounding can leave tiny negatives when the arguments coincide.
        Ok(kl.max(0.0))
    }

    pub fn same_family(&self, other: &NaturalParams) -> Result<()> {
        if self.family == other.family {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                expected: self.family.to_string(),
                found: other.family.to_string(),
            })
        }
    }

    /// Adds a statistic vector to the natural parameters (conjugate update).
    pub fn add_stats(&self, stats: &[f64]) -> Result<NaturalParams> {
        if stats.len() != self.eta.len() {
            return Err(invalid(format!(
                "statistic length {} does not match {} dimension {}",
                stats.len(),
                self.family,
                self.eta.len()
            )));
        }
        let eta = self.eta.iter().zip(stats).map(|(a, b)| a + b).collect();
        NaturalParams::new(self.family, eta)
    }
}

/// A single observation passed to [`sufficient_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Binary(bool),
    Category(usize),
    Real(f64),
}

/// Contribution of one observation to the natural parameters of `family`
/// under its conjugate likelihood:
///
/// * Beta: Bernoulli outcome y → (y, 1−y)
/// * Dirichlet(K): category k → one-hot e_k
/// * Gamma: deviation r of a zero-mean Gaussian with precision τ → (½, r²/2)
/// * NormalGamma: Gaussian x with unknown mean and precision → (x, 1, ½, x²/2)
/// * Normal: Gaussian x of the mean with unit noise precision → (x, 1)
/// * NormalKnownPrecision: the family's own statistic t(x) = x
pub fn sufficient_stats(family: Family, x: Outcome) -> Result<Vec<f64>> {
    family.check()?;
    let real = |x: Outcome| match x {
        Outcome::Real(v) if v.is_finite() => Ok(v),
        other => Err(Error::Support(format!("{family} expects a finite real, got {other:?}"))),
    };
    match family {
        Family::Beta => {
            let y = match x {
                Outcome::Binary(b) => b,
                Outcome::Real(v) if v == 0.0 || v == 1.0 => v == 1.0,
                other => {
                    return Err(Error::Support(format!("Beta expects a 0/1 outcome, got {other:?}")))
                }
            };
            Ok(if y { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
        }
        Family::Dirichlet { k } => match x {
            Outcome::Category(c) if c < k => {
                let mut v = vec![0.0; k];
                v[c] = 1.0;
                Ok(v)
            }
            other => Err(Error::Support(format!(
                "Dirichlet({k}) expects a category in 0..{k}, got {other:?}"
            ))),
        },
        Family::Gamma => {
            let r = real(x)?;
            Ok(vec![0.5, r * r / 2.0])
        }
        Family::NormalGamma => {
            let v = real(x)?;
            Ok(vec![v, 1.0, 0.5, v * v / 2.0])
        }
        Family::NormalKnownPrecision { .. } => Ok(vec![real(x)?]),
        Family::Normal => Ok(vec![real(x)?, 1.0]),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(a: f64, b: f64) -> NaturalParams {
        NaturalParams::from_standard(&Standard::Beta { alpha: a, beta: b }).unwrap()
    }

    #[test]
    fn beta_log_normalizer_values() {
        assert!(beta(1.0, 1.0).log_normalizer().abs() < 1e-14);
        // ∫ x(1−x) dx = 1/6
        assert!((beta(2.0, 2.0).log_normalizer() - (1.0f64 / 6.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_uniform_log_normalizer() {
        let p = NaturalParams::new(Family::Dirichlet { k: 3 }, vec![0.0; 3]).unwrap();
        assert!((p.log_normalizer() + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beta_uniform_mean_params() {
        let m = beta(1.0, 1.0).mean_params();
        assert!((m[0] + 1.0).abs() < 1e-12 && (m[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_known_precision_zero_mean() {
        let p = NaturalParams::new(Family::NormalKnownPrecision { precision: 2.5 }, vec![0.0]).unwrap();
        assert_eq!(p.mean_params(), vec![0.0]);
    }

    #[test]
    fn kl_identity_and_known_value() {
        assert_eq!(beta(1.0, 1.0).kl_divergence(&beta(1.0, 1.0)).unwrap(), 0.0);
        // KL(Beta(2,2) ‖ U) = −H(Beta(2,2)) = ln 6 − 5/3
        let want = 6f64.ln() - 5.0 / 3.0;
        let got = beta(2.0, 2.0).kl_divergence(&beta(1.0, 1.0)).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn kl_rejects_family_mismatch() {
        let g = NaturalParams::from_standard(&Standard::Gamma { shape: 1.0, rate: 1.0 }).unwrap();
        assert!(matches!(beta(1.0, 1.0).kl_divergence(&g), Err(Error::FamilyMismatch { .. })));
    }

    #[test]
    fn domain_violations_name_component() {
        let err = NaturalParams::new(Family::Beta, vec![0.0, -1.5]).unwrap_err().to_string();
        assert!(err.contains("eta[1]"), "{err}");
        let err = NaturalParams::new(Family::NormalGamma, vec![1.0, 1.0, 0.0, 0.4])
            .unwrap_err()
            .to_string();
        assert!(err.contains("eta[3]"), "{err}");
        assert!(NaturalParams::new(Family::Gamma, vec![0.0, 0.0]).is_err());
        assert!(NaturalParams::new(Family::Beta, vec![0.0]).is_err());
        assert!(NaturalParams::new(Family::Dirichlet { k: 1 }, vec![0.0]).is_err());
        assert!(NaturalParams::new(Family::Normal, vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn standard_roundtrip() {
        let cases = [
            Standard::Beta { alpha: 2.5, beta: 0.5 },
            Standard::Dirichlet { alpha: vec![1.0, 2.0, 3.0] },
            Standard::Gamma { shape: 3.0, rate: 0.25 },
            Standard::NormalGamma { mean: -1.5, kappa: 2.0, shape: 3.0, rate: 4.0 },
            Standard::NormalKnownPrecision { mean: 0.75, precision: 4.0 },
            Standard::Normal { mean: 2.0, precision: 0.5 },
        ];
        for s in cases {
            let back = NaturalParams::from_standard(&s).unwrap().to_standard();
            let (a, b) = (format!("{s:?}"), format!("{back:?}"));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sufficient_stats_conventions() {
        assert_eq!(sufficient_stats(Family::Beta, Outcome::Binary(true)).unwrap(), vec![1.0, 0.0]);
        let ng = sufficient_stats(Family::NormalGamma, Outcome::Real(0.0)).unwrap();
        assert_eq!((ng[0], ng[3]), (0.0, 0.0));
        let mut total = vec![0.0, 0.0];
        for i in 0..100 {
            let s = sufficient_stats(Family::Beta, Outcome::Binary(i < 30)).unwrap();
            total[0] += s[0];
            total[1] += s[1];
        }
        assert_eq!(total, vec![30.0, 70.0]);
        assert!(sufficient_stats(Family::Beta, Outcome::Real(0.5)).is_err());
        assert!(sufficient_stats(Family::Dirichlet { k: 3 }, Outcome::Category(3)).is_err());
        assert!(sufficient_stats(Family::NormalGamma, Outcome::Real(f64::INFINITY)).is_err());
    }
}
