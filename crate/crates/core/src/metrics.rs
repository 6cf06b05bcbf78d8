//! Equivalent sample size, test marginal log-likelihood and step traces.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expfam::{Family, NaturalParams, Standard};
use crate::models::{ModelSpec, Observation};
use crate::rng::{counter_rng, Domain};
use crate::special::log_sum_exp;

/// Posterior draws used when no closed-form predictive exists.
pub const MC_DRAWS: usize = 1000;

/// Pseudo-count mass of a posterior block.
///
/// Beta and Dirichlet sum their concentrations, NormalGamma reports κ and
/// Gamma reports 2·shape (each observation adds ½ to the shape). The
/// Gaussian-mean families carry a precision rather than a count and are
/// rejected.
pub fn ess(posterior: &NaturalParams) -> Result<f64> {
    match posterior.to_standard() {
        Standard::Beta { alpha, beta } => Ok(alpha + beta),
        Standard::Dirichlet { alpha } => Ok(alpha.iter().sum()),
        Standard::NormalGamma { kappa, .. } => Ok(kappa),
        Standard::Gamma { shape, .. } => Ok(2.0 * shape),
        Standard::Normal { .. } | Standard::NormalKnownPrecision { .. } => Err(Error::Unsupported(
            format!("no sample-size convention for the {} family", posterior.family()),
        )),
    }
}

/// Mean log predictive density of the test rows under the variational
/// posterior. Closed form where the model has one, otherwise a Monte
/// Carlo average over [`MC_DRAWS`] draws from q(β) keyed by `(seed, t)`.
pub fn tmll(model: &ModelSpec, posterior: &[NaturalParams], test: &[Observation], seed: u64, t: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyBatch);
    }
    model.check_blocks(posterior)?;
    model.check_observations(test)?;
    let mut total = 0.0;
    for x in test {
        match model.log_predictive(posterior, x) {
            Some(v) => total += v,
            None => {
                let mut rng = counter_rng(seed, Domain::MonteCarlo, t as u64);
                return Ok(tmll_monte_carlo(model, posterior, test, MC_DRAWS, &mut rng)?.0);
            }
        }
    }
    Ok(total / test.len() as f64)
}

/// Monte Carlo TMLL and its delta-method standard error.
pub fn tmll_monte_carlo<R: Rng>(
    model: &ModelSpec,
    posterior: &[NaturalParams],
    test: &[Observation],
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if draws < 2 {
        return Err(invalid("Monte Carlo TMLL needs at least 2 draws"));
    }
    model.check_blocks(posterior)?;
    model.check_observations(test)?;

    // ll[i][s] = ln p(x_i | β_s)
    let mut ll = vec![Vec::with_capacity(draws); test.len()];
    for _ in 0..draws {
        let draw = posterior.iter().map(|q| sample(q, rng)).collect::<Result<Vec<_>>>()?;
        for (row, x) in ll.iter_mut().zip(test) {
            row.push(model.log_likelihood_at(&draw, x));
        }
    }
    let n = test.len() as f64;
    let ln_s = (draws as f64).ln();
    let ln_means: Vec<f64> = ll.iter().map(|row| log_sum_exp(row) - ln_s).collect();
    let estimate = ln_means.iter().sum::<f64>() / n;

    let g: Vec<f64> = (0..draws)
        .map(|s| ll.iter().zip(&ln_means).map(|(row, m)| (row[s] - m).exp()).sum::<f64>() / n)
        .collect();
    let g_mean = g.iter().sum::<f64>() / draws as f64;
    let g_var = g.iter().map(|v| (v - g_mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    Ok((estimate, (g_var / draws as f64).sqrt()))
}

/// One draw from a block: Beta → [p], Dirichlet → weights, Gamma → [τ],
/// NormalGamma → [μ, τ], Normal and NormalKnownPrecision → [μ].
pub fn sample<R: Rng>(q: &NaturalParams, rng: &mut R) -> Result<Vec<f64>> {
    let bad = |e: &dyn std::fmt::Display| invalid(format!("cannot sample {}: {e}", q.family()));
    let gamma = |shape: f64, rate: f64, rng: &mut R| -> Result<f64> {
        Ok(Gamma::new(shape, 1.0 / rate).map_err(|e| bad(&e))?.sample(rng))
    };
    let normal = |mean: f64, precision: f64, rng: &mut R| -> Result<f64> {
        Ok(Normal::new(mean, precision.sqrt().recip()).map_err(|e| bad(&e))?.sample(rng))
    };
    Ok(match q.to_standard() {
        Standard::Beta { alpha, beta } => vec![Beta::new(alpha, beta).map_err(|e| bad(&e))?.sample(rng)],
        Standard::Dirichlet { alpha } => {
            let g = alpha.iter().map(|&a| gamma(a, 1.0, rng)).collect::<Result<Vec<_>>>()?;
            let total: f64 = g.iter().sum();
            g.into_iter().map(|v| v / total).collect()
        }
        Standard::Gamma { shape, rate } => vec![gamma(shape, rate, rng)?],
        Standard::NormalGamma { mean, kappa, shape, rate } => {
            let tau = gamma(shape, rate, rng)?;
            vec![normal(mean, kappa * tau, rng)?, tau]
        }
        Standard::Normal { mean, precision } | Standard::NormalKnownPrecision { mean, precision } => {
            vec![normal(mean, precision, rng)?]
        }
    })
}

/// One row of a learner's trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub learner: String,
    /// ELBO, or the double lower bound for the hierarchical learners.
    pub elbo: f64,
    /// Per block; `None` where the family has no count convention.
    pub ess: Vec<Option<f64>>,
    /// E[ρ] per forgetting factor; empty for learners without one.
    pub expected_rho: Vec<f64>,
    pub tmll: Option<f64>,
    pub summary: Vec<f64>,
}

/// Σ_t TMLL_t over a trace.
pub fn aggregate_tmll(trace: &[TraceRecord]) -> Result<f64> {
    if trace.is_empty() {
        return Err(invalid("cannot aggregate an empty trace"));
    }
    trace
        .iter()
        .map(|r| r.tmll.ok_or_else(|| invalid(format!("trace record t={} has no tmll", r.t))))
        .sum()
}

/// ESS per block, `None` for families without a count convention.
pub fn block_ess(posterior: &[NaturalParams]) -> Vec<Option<f64>> {
    posterior
        .iter()
        .map(|q| match q.family() {
            Family::Normal | Family::NormalKnownPrecision { .. } => None,
            _ => ess(q).ok(),
        })
        .collect()
}
