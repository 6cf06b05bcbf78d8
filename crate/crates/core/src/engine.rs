//! Mean-field coordinate ascent for one batch against a given prior.
//!
//! Each sweep updates the local responsibilities first and then every
//! global block. The ELBO is recorded after each sweep; ascent stops after
//! `max_iterations` sweeps or once the relative increase
//! `(L_k − L_{k−1}) / |L_{k−1}|` drops below `relative_tolerance`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expfam::NaturalParams;
use crate::models::{LocalParams, ModelSpec, Observation};
use crate::rng::{counter_rng, Domain};
use crate::streams::Batch;

/// Allowed ELBO decrease between sweeps, scaled by max(1, |L|).
pub const ELBO_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iterations: 100, relative_tolerance: 1e-4, seed: 0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations must be >= 1"));
        }
        if self.relative_tolerance.is_nan() || self.relative_tolerance <= 0.0 {
            return Err(invalid("relative_tolerance must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub posterior: Vec<NaturalParams>,
    pub locals: LocalParams,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
}

impl FitResult {
    pub fn elbo(&self) -> f64 {
        *self.elbo_trace.last().expect("at least one sweep")
    }
}

/// Fits the batch's training rows starting from a seeded initialization.
pub fn fit_batch(
    model: &ModelSpec,
    prior: &[NaturalParams],
    data: &Batch,
    cfg: &FitConfig,
) -> Result<FitResult> {
    fit(model, prior, &data.train, data.t, cfg, None)
}

/// Like [`fit_batch`] but starts the ascent from `start`.
pub fn fit_batch_from(
    model: &ModelSpec,
    prior: &[NaturalParams],
    data: &Batch,
    cfg: &FitConfig,
    start: &[NaturalParams],
) -> Result<FitResult> {
    model.check_blocks(start)?;
    fit(model, prior, &data.train, data.t, cfg, Some(start))
}

fn fit(
    model: &ModelSpec,
    prior: &[NaturalParams],
    data: &[Observation],
    t: usize,
    cfg: &FitConfig,
    start: Option<&[NaturalParams]>,
) -> Result<FitResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    model.check_blocks(prior)?;
    model.check_observations(data)?;

    let (mut posterior, mut locals) = match start {
        Some(s) => (s.to_vec(), LocalParams::default()),
        None => {
            let mut rng = counter_rng(cfg.seed, Domain::Init, t as u64);
            model.initial_state(prior, data, &mut rng)?
        }
    };
    let has_locals = model.local_latent().is_some();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        if has_locals {
            locals = model.update_locals(&posterior, data);
        }
        model.update_globals(prior, &mut posterior, data, &locals)?;
        let current = elbo_of(model, prior, &posterior, &locals, data)?;
        let previous = trace.last().copied();
        trace.push(current);
        match previous {
            None if model.exact_in_one_sweep() => {
                converged = true;
                break;
            }
            None => {}
            Some(prev) => {
                if current < prev - ELBO_SLACK * prev.abs().max(1.0) {
                    return Err(Error::Consistency(format!(
                        "ELBO decreased from {prev} to {current} at sweep {}",
                        trace.len()
                    )));
                }
                let rel = if prev != 0.0 { (current - prev) / prev.abs() } else { current - prev };
                if rel < cfg.relative_tolerance {
                    converged = true;
                    break;
                }
            }
        }
    }

    Ok(FitResult { posterior, locals, elbo_trace: trace, converged })
}

/// L = E_q[ln p(x, z | β)] + E_q[ln p(β)] − E_q[ln q(z)] − E_q[ln q(β)]
/// evaluated on the batch's training rows.
pub fn elbo(
    model: &ModelSpec,
    prior: &[NaturalParams],
    posterior: &[NaturalParams],
    locals: &LocalParams,
    data: &Batch,
) -> Result<f64> {
    model.check_blocks(prior)?;
    model.check_blocks(posterior)?;
    model.check_observations(&data.train)?;
    if model.local_latent().is_some() && locals.responsibilities.len() != data.train.len() {
        return Err(invalid(format!(
            "{} responsibility vectors for {} observations",
            locals.responsibilities.len(),
            data.train.len()
        )));
    }
    elbo_of(model, prior, posterior, locals, &data.train)
}

fn elbo_of(
    model: &ModelSpec,
    prior: &[NaturalParams],
    posterior: &[NaturalParams],
    locals: &LocalParams,
    data: &[Observation],
) -> Result<f64> {
    let mut kl = 0.0;
    for (q, p) in posterior.iter().zip(prior) {
        kl += q.kl_divergence(p)?;
    }
    let data_term = if data.is_empty() { 0.0 } else { model.data_term(posterior, data, locals) };
    Ok(data_term - kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::Standard;
    use crate::models::{make_beta_binomial, make_mixture_model};
    use crate::special::ln_multi_beta;

    fn bernoulli_batch(ones: usize, zeros: usize) -> Batch {
        let mut rows = vec![vec![1.0]; ones];
        rows.extend(vec![vec![0.0]; zeros]);
        Batch::new(1, rows)
    }

    #[test]
    fn beta_binomial_single_sweep_posterior() {
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        let fit = fit_batch(&m, m.priors(), &bernoulli_batch(30, 70), &FitConfig::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.elbo_trace.len(), 1);
        assert_eq!(fit.posterior[0].to_standard(), Standard::Beta { alpha: 31.0, beta: 71.0 });
    }

    #[test]
    fn beta_binomial_elbo_is_log_evidence() {
        let m = make_beta_binomial(2.0, 3.0).unwrap();
        let fit = fit_batch(&m, m.priors(), &bernoulli_batch(12, 5), &FitConfig::default()).unwrap();
        let exact = ln_multi_beta(&[14.0, 8.0]) - ln_multi_beta(&[2.0, 3.0]);
        assert!((fit.elbo() - exact).abs() < 1e-8);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        let err = fit_batch(&m, m.priors(), &Batch::new(1, vec![]), &FitConfig::default());
        assert!(matches!(err, Err(Error::EmptyBatch)));
    }

    #[test]
    fn elbo_is_zero_without_data_at_the_prior() {
        let m = make_mixture_model(2, 1).unwrap();
        let v = elbo(&m, m.priors(), m.priors(), &LocalParams::default(), &Batch::new(1, vec![])).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
        assert!(FitConfig { relative_tolerance: 0.0, ..Default::default() }.validate().is_err());
    }
}
