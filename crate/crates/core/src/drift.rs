//! Power priors and the hierarchical forgetting factor.
//!
//! The prior at step t mixes the previous posterior λ_{t−1} with the
//! uninformative prior α_u in natural coordinates,
//! `η̂ = ρ·λ_{t−1} + (1−ρ)·α_u`. With a hierarchical prior the forgetting
//! factor ρ gets a variational posterior q(ρ | ω) ∝ exp(ω·ρ) on [0, 1], a
//! truncated exponential with sufficient statistic t(ρ) = ρ. The prior
//! p(ρ | γ) uses natural parameter +γ under the same convention, so
//! ω > 0 leans towards remembering and ω < 0 towards forgetting.
//!
//! Updates maximize the double lower bound
//!
//! ```text
//! L̂ = E[ln p(x, Z | β)] + E[ρ]·E[ln p_δ(β | λ_{t−1})] + (1 − E[ρ])·E[ln p_u(β)]
//!     + E[ln p(ρ | γ)] − E[ln q(Z)] − E[ln q(β)] − E[ln q(ρ)]
//! ```
//!
//! which differs from the ELBO only by the convexity gap of the
//! log-normalizer. Its natural gradient in ω vanishes at
//! `ω* = KL(q ‖ p_u) − KL(q ‖ p_δ) + γ`.

use serde::{Deserialize, Serialize};

use crate::engine::{fit_batch, fit_batch_from, FitConfig, FitResult};
use crate::error::{invalid, Error, Result};
use crate::expfam::{dot, NaturalParams};
use crate::models::ModelSpec;
use crate::streams::Batch;

pub const DEFAULT_GAMMA: f64 = 0.1;

/// Below this |ω| the closed forms are replaced by their Taylor series.
const SERIES_CUTOFF: f64 = 0.05;

/// ln ∫₀¹ e^{ωρ} dρ = ln((e^ω − 1)/ω).
pub fn truncexp_log_normalizer(omega: f64) -> f64 {
    if omega.abs() < SERIES_CUTOFF {
        let w2 = omega * omega;
        omega / 2.0 + w2 / 24.0 - w2 * w2 / 2880.0 + w2 * w2 * w2 / 181_440.0
    } else if omega > 0.0 {
        omega + (-(-omega).exp_m1()).ln() - omega.ln()
    } else {
        (-omega.exp_m1()).ln() - (-omega).ln()
    }
}

/// E[ρ] = 1/(1 − e^{−ω}) − 1/ω.
pub fn truncexp_mean(omega: f64) -> f64 {
    if omega.abs() < SERIES_CUTOFF {
        let w2 = omega * omega;
        0.5 + omega / 12.0 - omega * w2 / 720.0 + omega * w2 * w2 / 30_240.0
            - omega * w2 * w2 * w2 / 1_209_600.0
    } else {
        1.0 / (-(-omega).exp_m1()) - 1.0 / omega
    }
}

/// Var[ρ] = 1/ω² − e^ω/(e^ω − 1)², the Fisher information in ω.
pub fn truncexp_variance(omega: f64) -> f64 {
    if omega.abs() < 0.1 {
        let w2 = omega * omega;
        1.0 / 12.0 - w2 / 240.0 + w2 * w2 / 6048.0 - w2 * w2 * w2 / 172_800.0
    } else {
        let half_sinh = (omega / 2.0).sinh();
        1.0 / (omega * omega) - 1.0 / (4.0 * half_sinh * half_sinh)
    }
}

/// Variational posterior q(ρ | ω) together with the prior parameter γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncExp {
    pub omega: f64,
    pub gamma: f64,
}

impl TruncExp {
    pub fn new(omega: f64, gamma: f64) -> Result<Self> {
        if !omega.is_finite() || !gamma.is_finite() {
            return Err(invalid(format!("truncated exponential needs finite (ω, γ), got ({omega}, {gamma})")));
        }
        Ok(Self { omega, gamma })
    }

    /// The drift-neutral starting point ω = γ.
    pub fn at_prior(gamma: f64) -> Result<Self> {
        Self::new(gamma, gamma)
    }

    /// The ω whose mean equals `rho` (bisection on the monotone mean).
    pub fn with_mean(rho: f64, gamma: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid(format!("mean of q(ρ) must lie in (0, 1), got {rho}")));
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        while truncexp_mean(lo) > rho {
            lo *= 2.0;
        }
        while truncexp_mean(hi) < rho {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if truncexp_mean(mid) < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::new(0.5 * (lo + hi), gamma)
    }

    pub fn expected_rho(&self) -> f64 {
        truncexp_mean(self.omega)
    }

    pub fn log_normalizer(&self) -> f64 {
        truncexp_log_normalizer(self.omega)
    }

    /// E_q[ln p(ρ | γ)] − E_q[ln q(ρ | ω)].
    pub fn prior_minus_entropy_terms(&self) -> f64 {
        let m = self.expected_rho();
        (self.gamma * m - truncexp_log_normalizer(self.gamma)) - (self.omega * m - self.log_normalizer())
    }
}

/// E[ρ] under q(ρ | ω); errors for non-finite ω.
pub fn expected_rho(s: &TruncExp) -> Result<f64> {
    if !s.omega.is_finite() {
        return Err(invalid(format!("ω must be finite, got {}", s.omega)));
    }
    Ok(s.expected_rho())
}

/// Elementwise ρ·λ_prev + (1−ρ)·α_u.
pub fn power_prior_combine(lambda_prev: &NaturalParams, alpha_u: &NaturalParams, rho: f64) -> Result<NaturalParams> {
    lambda_prev.same_family(alpha_u)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid(format!("ρ must lie in [0, 1], got {rho}")));
    }
    if rho == 1.0 {
        return Ok(lambda_prev.clone());
    }
    if rho == 0.0 {
        return Ok(alpha_u.clone());
    }
    let eta = lambda_prev
        .eta()
        .iter()
        .zip(alpha_u.eta())
        .map(|(l, a)| rho * l + (1.0 - rho) * a)
        .collect();
    NaturalParams::new(lambda_prev.family(), eta)
}

/// Fixed point of the natural gradient in ω.
pub fn update_omega(kl_to_uninformative: f64, kl_to_delta: f64, gamma: f64) -> Result<f64> {
    if !(kl_to_uninformative.is_finite() && kl_to_delta.is_finite() && gamma.is_finite()) {
        return Err(invalid(format!(
            "non-finite input to the ω update: ({kl_to_uninformative}, {kl_to_delta}, {gamma})"
        )));
    }
    Ok(kl_to_uninformative - kl_to_delta + gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Assignment {
    /// One forgetting factor for all blocks.
    Shared(TruncExp),
    /// One forgetting factor per global block.
    PerBlock(Vec<TruncExp>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftState {
    pub assignment: Assignment,
    pub uninformative_prior: Vec<NaturalParams>,
    /// Holds ρ at this value and skips the ω update.
    pub pinned: Option<f64>,
}

impl DriftState {
    pub fn shared(model: &ModelSpec, gamma: f64) -> Result<Self> {
        Ok(Self {
            assignment: Assignment::Shared(TruncExp::at_prior(gamma)?),
            uninformative_prior: model.priors().to_vec(),
            pinned: None,
        })
    }

    pub fn per_block(model: &ModelSpec, gamma: f64) -> Result<Self> {
        let s = TruncExp::at_prior(gamma)?;
        Ok(Self {
            assignment: Assignment::PerBlock(vec![s; model.blocks().len()]),
            uninformative_prior: model.priors().to_vec(),
            pinned: None,
        })
    }

    pub fn with_pinned(mut self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(invalid(format!("pinned ρ must lie in (0, 1], got {rho}")));
        }
        if rho < 1.0 {
            let gamma = self.gamma();
            let s = TruncExp::with_mean(rho, gamma)?;
            self.assignment = match self.assignment {
                Assignment::Shared(_) => Assignment::Shared(s),
                Assignment::PerBlock(v) => Assignment::PerBlock(vec![s; v.len()]),
            };
        }
        self.pinned = Some(rho);
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        match &self.assignment {
            Assignment::Shared(s) => s.gamma,
            Assignment::PerBlock(v) => v.first().map_or(DEFAULT_GAMMA, |s| s.gamma),
        }
    }

    fn check(&self, model: &ModelSpec) -> Result<()> {
        model.check_blocks(&self.uninformative_prior)?;
        if let Assignment::PerBlock(v) = &self.assignment {
            if v.len() != model.blocks().len() {
                return Err(invalid(format!(
                    "{} forgetting factors for {} blocks",
                    v.len(),
                    model.blocks().len()
                )));
            }
        }
        Ok(())
    }

    /// E[ρ] for every block.
    pub fn block_rhos(&self, num_blocks: usize) -> Vec<f64> {
        match (self.pinned, &self.assignment) {
            (Some(r), _) => vec![r; num_blocks],
            (_, Assignment::Shared(s)) => vec![s.expected_rho(); num_blocks],
            (_, Assignment::PerBlock(v)) => v.iter().map(|s| s.expected_rho()).collect(),
        }
    }

    /// E[ρ] per forgetting factor (one value when shared).
    pub fn expected_rhos(&self) -> Vec<f64> {
        match (self.pinned, &self.assignment) {
            (Some(r), Assignment::Shared(_)) => vec![r],
            (Some(r), Assignment::PerBlock(v)) => vec![r; v.len()],
            (_, Assignment::Shared(s)) => vec![s.expected_rho()],
            (_, Assignment::PerBlock(v)) => v.iter().map(|s| s.expected_rho()).collect(),
        }
    }

    fn factors(&self) -> Vec<TruncExp> {
        match &self.assignment {
            Assignment::Shared(s) => vec![*s],
            Assignment::PerBlock(v) => v.clone(),
        }
    }

    fn reset(&mut self) -> Result<()> {
        if self.pinned.is_some() {
            return Ok(());
        }
        let start = TruncExp::at_prior(self.gamma())?;
        match &mut self.assignment {
            Assignment::Shared(s) => *s = start,
            Assignment::PerBlock(v) => v.iter_mut().for_each(|s| *s = start),
        }
        Ok(())
    }

    /// Sets every ω to its fixed point given the current posterior.
    fn update(&mut self, posterior: &[NaturalParams], lambda_prev: &[NaturalParams]) -> Result<()> {
        let mut diffs = Vec::with_capacity(posterior.len());
        for ((q, prev), u) in posterior.iter().zip(lambda_prev).zip(&self.uninformative_prior) {
            diffs.push((q.kl_divergence(u)?, q.kl_divergence(prev)?));
        }
        match &mut self.assignment {
            Assignment::Shared(s) => {
                let (ku, kd) = diffs.iter().fold((0.0, 0.0), |acc, d| (acc.0 + d.0, acc.1 + d.1));
                s.omega = update_omega(ku, kd, s.gamma)?;
            }
            Assignment::PerBlock(v) => {
                for (s, (ku, kd)) in v.iter_mut().zip(diffs) {
                    s.omega = update_omega(ku, kd, s.gamma)?;
                }
            }
        }
        Ok(())
    }
}

/// Effective prior η̂ per block for the current E[ρ].
pub fn effective_prior(
    lambda_prev: &[NaturalParams],
    alpha_u: &[NaturalParams],
    rhos: &[f64],
) -> Result<Vec<NaturalParams>> {
    lambda_prev
        .iter()
        .zip(alpha_u)
        .zip(rhos)
        .map(|((l, a), &r)| power_prior_combine(l, a, r))
        .collect()
}

/// Evaluates L̂ for a fitted batch. With a pinned ρ the bound is taken
/// conditionally on that value, i.e. without the ρ prior and entropy terms.
pub fn double_lower_bound(
    model: &ModelSpec,
    lambda_prev: &[NaturalParams],
    alpha_u: &[NaturalParams],
    fit: &FitResult,
    state: &DriftState,
    data: &Batch,
) -> Result<f64> {
    model.check_blocks(lambda_prev)?;
    model.check_blocks(alpha_u)?;
    model.check_blocks(&fit.posterior)?;
    state.check(model)?;
    let rhos = state.block_rhos(lambda_prev.len());
    let eta_hat = effective_prior(lambda_prev, alpha_u, &rhos)?;

    let mut bound = if data.train.is_empty() {
        0.0
    } else {
        model.check_observations(&data.train)?;
        model.data_term(&fit.posterior, &data.train, &fit.locals)
    };
    for (((q, prior), (prev, u)), rho) in fit
        .posterior
        .iter()
        .zip(&eta_hat)
        .zip(lambda_prev.iter().zip(alpha_u))
        .zip(&rhos)
    {
        let mean = q.mean_params();
        bound += dot(prior.eta(), &mean) - rho * prev.log_normalizer() - (1.0 - rho) * u.log_normalizer();
        bound -= dot(q.eta(), &mean) - q.log_normalizer();
    }
    if state.pinned.is_none() {
        bound += state.factors().iter().map(|s| s.prior_minus_entropy_terms()).sum::<f64>();
    }
    Ok(bound)
}

/// Alternates (a) forming η̂ from E[ρ], (b) coordinate ascent for λ_t and
/// the locals against η̂, and (c) the closed-form ω update, until L̂
/// stops improving by more than `cfg.relative_tolerance` or after
/// `cfg.max_iterations` rounds. ω starts from γ at every call.
pub fn hpp_fit_batch(
    model: &ModelSpec,
    lambda_prev: &[NaturalParams],
    state: &DriftState,
    data: &Batch,
    cfg: &FitConfig,
) -> Result<(FitResult, DriftState, f64)> {
    cfg.validate()?;
    model.check_blocks(lambda_prev)?;
    state.check(model)?;
    let alpha_u = state.uninformative_prior.clone();
    let mut next = state.clone();
    next.reset()?;

    let mut fit: Option<FitResult> = None;
    let mut bound: Option<f64> = None;
    for _ in 0..cfg.max_iterations {
        let rhos = next.block_rhos(lambda_prev.len());
        let eta_hat = effective_prior(lambda_prev, &alpha_u, &rhos)?;
        let current = match &fit {
            None => fit_batch(model, &eta_hat, data, cfg)?,
            Some(f) => fit_batch_from(model, &eta_hat, data, cfg, &f.posterior)?,
        };
        if next.pinned.is_none() {
            next.update(&current.posterior, lambda_prev)?;
        }
        let value = double_lower_bound(model, lambda_prev, &alpha_u, &current, &next, data)?;
        fit = Some(current);
        let done = next.pinned.is_some()
            || bound.is_some_and(|prev| {
                let rel = if prev != 0.0 { (value - prev) / prev.abs() } else { value - prev };
                rel < cfg.relative_tolerance
            });
        bound = Some(value);
        if done {
            break;
        }
    }
    let fit = fit.ok_or_else(|| Error::Consistency("no outer iteration ran".into()))?;
    Ok((fit, next, bound.expect("bound set with fit")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{Family, Standard};

    #[test]
    fn combine_identities_and_arithmetic() {
        let prev = NaturalParams::new(Family::Beta, vec![30.0, 70.0]).unwrap();
        let u = NaturalParams::new(Family::Beta, vec![0.0, 0.0]).unwrap();
        assert_eq!(power_prior_combine(&prev, &u, 1.0).unwrap(), prev);
        assert_eq!(power_prior_combine(&prev, &u, 0.0).unwrap(), u);
        let mixed = power_prior_combine(&prev, &u, 0.9).unwrap();
        assert!((mixed.eta()[0] - 27.0).abs() < 1e-12 && (mixed.eta()[1] - 63.0).abs() < 1e-12);
        assert!(power_prior_combine(&prev, &u, 1.1).is_err());
        let g = NaturalParams::from_standard(&Standard::Gamma { shape: 1.0, rate: 1.0 }).unwrap();
        assert!(power_prior_combine(&prev, &g, 0.5).is_err());
    }

    #[test]
    fn expected_rho_reference_points() {
        assert_eq!(truncexp_mean(0.0), 0.5);
        // 1/(1 − e^{−1}) − 1 = 1/(e − 1)
        let at_one = 1.0 / (1f64.exp() - 1.0);
        assert!((truncexp_mean(1.0) - at_one).abs() < 1e-15);
        assert!((truncexp_mean(1.0) - 0.5820).abs() < 1e-4);
        assert!((truncexp_mean(-1.0) - (1.0 - at_one)).abs() < 1e-12);
        assert!(expected_rho(&TruncExp { omega: f64::NAN, gamma: 0.1 }).is_err());
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        for w in [SERIES_CUTOFF * 0.999, -SERIES_CUTOFF * 0.999] {
            let direct = 1.0 / (-(-w).exp_m1()) - 1.0 / w;
            assert!((truncexp_mean(w) - direct).abs() < 1e-13);
            let direct_a = (w.exp_m1() / w).ln();
            assert!((truncexp_log_normalizer(w) - direct_a).abs() < 1e-14);
        }
        let w: f64 = 0.0999;
        let direct_v = 1.0 / (w * w) - w.exp() / (w.exp() - 1.0).powi(2);
        assert!((truncexp_variance(w) - direct_v).abs() < 1e-10);
    }

    #[test]
    fn omega_fixed_point_values() {
        assert!((update_omega(5.0, 0.3, 0.1).unwrap() - 4.8).abs() < 1e-12);
        assert_eq!(update_omega(2.0, 2.0, 0.1).unwrap(), 0.1);
        let w = update_omega(0.3, 5.0, 0.1).unwrap();
        assert!((w + 4.6).abs() < 1e-12);
        assert!(truncexp_mean(w) < 0.5);
        assert!(update_omega(f64::INFINITY, 0.0, 0.1).is_err());
    }

    #[test]
    fn with_mean_inverts() {
        for rho in [0.01, 0.3, 0.5, 0.9, 0.999] {
            let s = TruncExp::with_mean(rho, 0.1).unwrap();
            assert!((s.expected_rho() - rho).abs() < 1e-14, "{rho}");
        }
        assert!(TruncExp::with_mean(1.0, 0.1).is_err());
    }
}
