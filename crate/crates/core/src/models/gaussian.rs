use std::f64::consts::PI;

use crate::expfam::{dot, NaturalParams, Standard};
use crate::special::ln_gamma;

use super::Observation;

pub(super) fn point_stats(x: f64) -> [f64; 4] {
    [x, 1.0, 0.5, x * x / 2.0]
}

pub(super) fn stats(data: &[Observation]) -> Vec<f64> {
    let mut s = vec![0.0; 4];
    for row in data {
        for (acc, v) in s.iter_mut().zip(point_stats(row[0])) {
            *acc += v;
        }
    }
    s
}

/// E_q[ln N(x | μ, τ)] summed over the data.
pub(super) fn data_term(q: &NaturalParams, data: &[Observation]) -> f64 {
    dot(&stats(data), &q.mean_params()) - 0.5 * (2.0 * PI).ln() * data.len() as f64
}

pub(super) fn expected_log_normal(mean_params: &[f64], x: f64) -> f64 {
    dot(&point_stats(x), mean_params) - 0.5 * (2.0 * PI).ln()
}

pub(super) fn log_normal_pdf(x: f64, mu: f64, tau: f64) -> f64 {
    0.5 * (tau / (2.0 * PI)).ln() - 0.5 * tau * (x - mu) * (x - mu)
}

/// Posterior predictive of a NormalGamma block: Student-t with 2a degrees
/// of freedom, location μ₀ and squared scale b(κ+1)/(aκ).
pub fn student_t_log_pdf(q: &NaturalParams, x: f64) -> f64 {
    let Standard::NormalGamma { mean, kappa, shape, rate } = q.to_standard() else {
        panic!("student_t_log_pdf needs a NormalGamma block, got {}", q.family());
    };
    let spread = 2.0 * rate * (kappa + 1.0) / kappa;
    ln_gamma(shape + 0.5) - ln_gamma(shape) - 0.5 * (PI * spread).ln()
        - (shape + 0.5) * (1.0 + (x - mean) * (x - mean) / spread).ln()
}

pub(super) fn summary(q: &NaturalParams) -> Vec<f64> {
    match q.to_standard() {
        Standard::NormalGamma { mean, shape, rate, .. } => vec![mean, shape / rate],
        _ => unreachable!("NormalGamma block"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_t_matches_direct_formula() {
        // a = 1.5, b = 2, κ = 3, μ₀ = 0.5: ν = 3, scale² = b(κ+1)/(aκ) = 16/9
        let q = NaturalParams::from_standard(&Standard::NormalGamma {
            mean: 0.5,
            kappa: 3.0,
            shape: 1.5,
            rate: 2.0,
        })
        .unwrap();
        let (nu, s2, x): (f64, f64, f64) = (3.0, 16.0 / 9.0, 1.7);
        let z = (x - 0.5) * (x - 0.5) / s2;
        let want = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI * s2).ln()
            - (nu + 1.0) / 2.0 * (1.0 + z / nu).ln();
        assert!((student_t_log_pdf(&q, x) - want).abs() < 1e-12);
    }
}
