//! Bayesian linear regression y ~ N(b₀ + Σ bᵢxᵢ, 1/γ) with Gaussian feature
//! marginals xᵢ ~ N(μᵢ, 1/τᵢ).
//!
//! Blocks: coefficients b₀..b_d (Normal), noise precision γ (Gamma), then
//! one NormalGamma per feature. The posterior is fully factorized, so
//! the coefficients and γ are updated one at a time given the others.

use std::f64::consts::PI;

use crate::error::Result;
use crate::expfam::{NaturalParams, Standard};

use super::gaussian::{self, expected_log_normal, log_normal_pdf};
use super::Observation;

struct Layout {
    d: usize,
}

impl Layout {
    fn noise(&self) -> usize {
        self.d + 1
    }
    fn feature(&self, i: usize) -> usize {
        self.d + 2 + i
    }
}

/// Design row (1, x₁, …, x_d).
fn design(row: &[f64], d: usize) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(1.0).chain(row[..d].iter().copied())
}

fn coefficient_moments(d: usize, posterior: &[NaturalParams]) -> (Vec<f64>, Vec<f64>) {
    (0..=d)
        .map(|j| match posterior[j].to_standard() {
            Standard::Normal { mean, precision } => (mean, 1.0 / precision),
            _ => unreachable!("Normal block"),
        })
        .unzip()
}

fn noise_moments(posterior: &NaturalParams) -> (f64, f64) {
    // mean params of Gamma are (E ln γ, −E γ)
    let m = posterior.mean_params();
    (m[0], -m[1])
}

/// E_q[(y − bᵀx̃)²] for every row.
fn expected_sq_residuals(d: usize, means: &[f64], vars: &[f64], data: &[Observation]) -> Vec<f64> {
    data.iter()
        .map(|row| {
            let (mut pred, mut spread) = (0.0, 0.0);
            for (j, xj) in design(row, d).enumerate() {
                pred += means[j] * xj;
                spread += vars[j] * xj * xj;
            }
            let r = row[d] - pred;
            r * r + spread
        })
        .collect()
}

pub(super) fn update_globals(
    d: usize,
    prior: &[NaturalParams],
    posterior: &mut [NaturalParams],
    data: &[Observation],
) -> Result<()> {
    let layout = Layout { d };
    let (_, e_gamma) = noise_moments(&posterior[layout.noise()]);
    let (mut means, _) = coefficient_moments(d, posterior);
    let mut preds: Vec<f64> = data
        .iter()
        .map(|row| design(row, d).zip(&means).map(|(x, m)| x * m).sum())
        .collect();

    for j in 0..=d {
        let (mut xr, mut xx) = (0.0, 0.0);
        for (row, pred) in data.iter().zip(&preds) {
            let xj = if j == 0 { 1.0 } else { row[j - 1] };
            let partial = row[d] - (pred - means[j] * xj);
            xr += xj * partial;
            xx += xj * xj;
        }
        let updated = prior[j].add_stats(&[e_gamma * xr, e_gamma * xx])?;
        let new_mean = updated.eta()[0] / updated.eta()[1];
        for (row, pred) in data.iter().zip(preds.iter_mut()) {
            let xj = if j == 0 { 1.0 } else { row[j - 1] };
            *pred += (new_mean - means[j]) * xj;
        }
        means[j] = new_mean;
        posterior[j] = updated;
    }

    let (means, vars) = coefficient_moments(d, posterior);
    let sq: f64 = expected_sq_residuals(d, &means, &vars, data).iter().sum();
    posterior[layout.noise()] =
        prior[layout.noise()].add_stats(&[0.5 * data.len() as f64, 0.5 * sq])?;

    for i in 0..d {
        let stats = gaussian::stats(&data.iter().map(|row| vec![row[i]]).collect::<Vec<_>>());
        posterior[layout.feature(i)] = prior[layout.feature(i)].add_stats(&stats)?;
    }
    Ok(())
}

pub(super) fn data_term(d: usize, posterior: &[NaturalParams], data: &[Observation]) -> f64 {
    let layout = Layout { d };
    let (means, vars) = coefficient_moments(d, posterior);
    let (e_ln_gamma, e_gamma) = noise_moments(&posterior[layout.noise()]);
    let sq: f64 = expected_sq_residuals(d, &means, &vars, data).iter().sum();
    let n = data.len() as f64;
    let mut total = 0.5 * n * e_ln_gamma - 0.5 * n * (2.0 * PI).ln() - 0.5 * e_gamma * sq;
    for i in 0..d {
        let m = posterior[layout.feature(i)].mean_params();
        total += data.iter().map(|row| expected_log_normal(&m, row[i])).sum::<f64>();
    }
    total
}

pub(super) fn log_likelihood_at(d: usize, draw: &[Vec<f64>], x: &[f64]) -> f64 {
    let layout = Layout { d };
    let pred: f64 = design(x, d).enumerate().map(|(j, xj)| draw[j][0] * xj).sum();
    let mut total = log_normal_pdf(x[d], pred, draw[layout.noise()][0]);
    for i in 0..d {
        let theta = &draw[layout.feature(i)];
        total += log_normal_pdf(x[i], theta[0], theta[1]);
    }
    total
}

/// Coefficient means followed by E[γ].
pub(super) fn summary(d: usize, posterior: &[NaturalParams]) -> Vec<f64> {
    let (mut means, _) = coefficient_moments(d, posterior);
    means.push(noise_moments(&posterior[d + 1]).1);
    means
}
