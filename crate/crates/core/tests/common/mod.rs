//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here goes through the library's natural-parameter code: the
//! densities are written in standard coordinates and integrated with
//! Gauss-Legendre quadrature.

#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Gauss-Legendre nodes and weights on [−1, 1] (Newton on Pₙ).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite rule: `panels` equal panels on [a, b], `order` nodes each.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for &(x, w) in &rule {
            total += w * f(lo + 0.5 * h * (x + 1.0));
        }
    }
    0.5 * h * total
}

pub fn beta_log_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

pub fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn normal_log_pdf(x: f64, mean: f64, precision: f64) -> f64 {
    0.5 * (precision / (2.0 * PI)).ln() - 0.5 * precision * (x - mean) * (x - mean)
}

pub fn dirichlet_log_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    let norm: f64 = alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(alpha.iter().sum());
    x.iter().zip(alpha).map(|(x, a)| (a - 1.0) * x.ln()).sum::<f64>() - norm
}

/// τ ~ Gamma(shape, rate), μ | τ ~ N(mean, 1/(κτ)).
pub fn normal_gamma_log_pdf(mu: f64, tau: f64, mean: f64, kappa: f64, shape: f64, rate: f64) -> f64 {
    gamma_log_pdf(tau, shape, rate) + normal_log_pdf(mu, mean, kappa * tau)
}

/// ∫₀¹ f with the endpoints resolved by a substitution that clusters
/// nodes near 0 and 1 (x = (1 − cos πu)/2).
pub fn integrate_unit(f: impl FnMut(f64) -> f64) -> f64 {
    integrate_unit_with(f, 64, 20)
}

pub fn integrate_unit_with(mut f: impl FnMut(f64) -> f64, panels: usize, order: usize) -> f64 {
    integrate(
        |u| {
            let x = 0.5 * (1.0 - (PI * u).cos());
            let jac = 0.5 * PI * (PI * u).sin();
            if x <= 0.0 || x >= 1.0 { 0.0 } else { f(x) * jac }
        },
        0.0,
        1.0,
        panels,
        order,
    )
}

/// ∫₀^∞ f via x = u/(1−u).
pub fn integrate_positive(mut f: impl FnMut(f64) -> f64) -> f64 {
    integrate(
        |u| {
            let x = u / (1.0 - u);
            if x <= 0.0 || !x.is_finite() { 0.0 } else { f(x) / ((1.0 - u) * (1.0 - u)) }
        },
        0.0,
        1.0,
        400,
        20,
    )
}

/// KL(q ‖ p) = ∫ q (ln q − ln p) for one-dimensional densities given in log form.
pub fn kl_1d(lq: impl Fn(f64) -> f64, lp: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    integrate(|x| { let v = lq(x); v.exp() * (v - lp(x)) }, a, b, 400, 20)
}
