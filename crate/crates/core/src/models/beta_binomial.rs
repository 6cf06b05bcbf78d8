use crate::expfam::{NaturalParams, Standard};

use super::Observation;

/// (successes, failures)
pub(super) fn stats(data: &[Observation]) -> Vec<f64> {
    let ones: f64 = data.iter().map(|x| x[0]).sum();
    vec![ones, data.len() as f64 - ones]
}

pub(super) fn data_term(q: &NaturalParams, data: &[Observation]) -> f64 {
    let m = q.mean_params();
    let s = stats(data);
    s[0] * m[0] + s[1] * m[1]
}

pub(super) fn log_predictive(q: &NaturalParams, y: f64) -> f64 {
    match q.to_standard() {
        Standard::Beta { alpha, beta } => {
            let hit = if y == 1.0 { alpha } else { beta };
            (hit / (alpha + beta)).ln()
        }
        _ => unreachable!("Beta block"),
    }
}
