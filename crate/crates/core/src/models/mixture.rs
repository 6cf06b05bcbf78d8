//! Gaussian mixture with a Dirichlet prior on the weights and an
//! independent NormalGamma block per (component, dimension). Block 0 holds
//! the weights, block `1 + c·dims + d` component c in dimension d.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::expfam::{NaturalParams, Standard};
use crate::special::log_sum_exp;

use super::gaussian::{expected_log_normal, log_normal_pdf, point_stats, student_t_log_pdf};
use super::{LocalParams, Observation};

fn block(c: usize, d: usize, dims: usize) -> usize {
    1 + c * dims + d
}

pub(super) fn random_locals<R: Rng>(k: usize, n: usize, rng: &mut R) -> LocalParams {
    let responsibilities = (0..n)
        .map(|_| {
            let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|v: f64| v / total).collect()
        })
        .collect();
    LocalParams { responsibilities }
}

/// Unnormalized log responsibilities E[ln π_c] + Σ_d E[ln N(x_d | θ_cd)].
fn log_weights(k: usize, dims: usize, weight_means: &[f64], comp_means: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    (0..k)
        .map(|c| {
            weight_means[c]
                + (0..dims)
                    .map(|d| expected_log_normal(&comp_means[c * dims + d], x[d]))
                    .sum::<f64>()
        })
        .collect()
}

fn expectations(posterior: &[NaturalParams]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let weight_means = posterior[0].mean_params();
    let comp_means = posterior[1..].iter().map(|p| p.mean_params()).collect();
    (weight_means, comp_means)
}

pub(super) fn update_locals(k: usize, dims: usize, posterior: &[NaturalParams], data: &[Observation]) -> LocalParams {
    let (wm, cm) = expectations(posterior);
    let responsibilities = data
        .iter()
        .map(|x| {
            let lw = log_weights(k, dims, &wm, &cm, x);
            let norm = log_sum_exp(&lw);
            lw.iter().map(|v| (v - norm).exp()).collect()
        })
        .collect();
    LocalParams { responsibilities }
}

pub(super) fn stats(k: usize, dims: usize, data: &[Observation], locals: &LocalParams) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; k]];
    out.extend((0..k * dims).map(|_| vec![0.0; 4]));
    for (x, r) in data.iter().zip(&locals.responsibilities) {
        for c in 0..k {
            out[0][c] += r[c];
            for d in 0..dims {
                let s = point_stats(x[d]);
                let acc = &mut out[block(c, d, dims)];
                for i in 0..4 {
                    acc[i] += r[c] * s[i];
                }
            }
        }
    }
    out
}

pub(super) fn update_globals(
    k: usize,
    dims: usize,
    prior: &[NaturalParams],
    data: &[Observation],
    locals: &LocalParams,
) -> Result<Vec<NaturalParams>> {
    stats(k, dims, data, locals)
        .iter()
        .zip(prior)
        .map(|(s, p)| p.add_stats(s))
        .collect()
}

pub(super) fn data_term(
    k: usize,
    dims: usize,
    posterior: &[NaturalParams],
    data: &[Observation],
    locals: &LocalParams,
) -> f64 {
    let (wm, cm) = expectations(posterior);
    let mut total = 0.0;
    for (x, r) in data.iter().zip(&locals.responsibilities) {
        let lw = log_weights(k, dims, &wm, &cm, x);
        for c in 0..k {
            if r[c] > 0.0 {
                total += r[c] * (lw[c] - r[c].ln());
            }
        }
    }
    total
}

pub(super) fn log_predictive(k: usize, dims: usize, posterior: &[NaturalParams], x: &[f64]) -> f64 {
    let alpha = match posterior[0].to_standard() {
        Standard::Dirichlet { alpha } => alpha,
        _ => unreachable!("Dirichlet block"),
    };
    let total: f64 = alpha.iter().sum();
    let terms: Vec<f64> = (0..k)
        .map(|c| {
            (alpha[c] / total).ln()
                + (0..dims)
                    .map(|d| student_t_log_pdf(&posterior[block(c, d, dims)], x[d]))
                    .sum::<f64>()
        })
        .collect();
    log_sum_exp(&terms)
}

pub(super) fn log_likelihood_at(k: usize, dims: usize, draw: &[Vec<f64>], x: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..k)
        .map(|c| {
            draw[0][c].ln()
                + (0..dims)
                    .map(|d| {
                        let theta = &draw[block(c, d, dims)];
                        log_normal_pdf(x[d], theta[0], theta[1])
                    })
                    .sum::<f64>()
        })
        .collect();
    log_sum_exp(&terms)
}

/// Expected weights followed by component means.
pub(super) fn summary(k: usize, dims: usize, posterior: &[NaturalParams]) -> Vec<f64> {
    let mut out = match posterior[0].to_standard() {
        Standard::Dirichlet { alpha } => {
            let total: f64 = alpha.iter().sum();
            alpha.iter().map(|a| a / total).collect::<Vec<_>>()
        }
        _ => unreachable!("Dirichlet block"),
    };
    for c in 0..k {
        for d in 0..dims {
            if let Standard::NormalGamma { mean, .. } = posterior[block(c, d, dims)].to_standard() {
                out.push(mean);
            }
        }
    }
    out
}
