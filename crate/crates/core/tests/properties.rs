mod common;

use proptest::prelude::*;

use streamvb::drift::{
    double_lower_bound, power_prior_combine, truncexp_log_normalizer, truncexp_mean, truncexp_variance, Assignment,
    DriftState, TruncExp,
};
use streamvb::engine::{fit_batch, FitConfig};
use streamvb::expfam::{NaturalParams, Standard};
use streamvb::learners::{LearnerConfig, LearnerRegistry};
use streamvb::metrics::ess;
use streamvb::models::make_beta_binomial;
use streamvb::streams::Batch;

fn beta(a: f64, b: f64) -> NaturalParams {
    NaturalParams::from_standard(&Standard::Beta { alpha: a, beta: b }).unwrap()
}

fn normal_gamma(mean: f64, kappa: f64, shape: f64, rate: f64) -> NaturalParams {
    NaturalParams::from_standard(&Standard::NormalGamma { mean, kappa, shape, rate }).unwrap()
}

fn bernoulli(t: usize, ones: usize, zeros: usize) -> Batch {
    let mut rows = vec![vec![1.0]; ones];
    rows.extend(vec![vec![0.0]; zeros]);
    Batch::new(t, rows)
}

proptest! {
    #[test]
    fn expected_rho_is_symmetric_and_increasing(w in -60.0f64..60.0, dw in 1e-3f64..1.0) {
        prop_assert!((truncexp_mean(-w) - (1.0 - truncexp_mean(w))).abs() < 1e-12);
        prop_assert!(truncexp_mean(w + dw) > truncexp_mean(w));
        let m = truncexp_mean(w);
        prop_assert!(m > 0.0 && m < 1.0);
    }

    #[test]
    fn truncexp_moments_match_quadrature(w in -30.0f64..30.0) {
        let z = common::integrate(|r| (w * r).exp(), 0.0, 1.0, 16, 20);
        let m = common::integrate(|r| r * (w * r).exp(), 0.0, 1.0, 16, 20) / z;
        let v = common::integrate(|r| (r - m).powi(2) * (w * r).exp(), 0.0, 1.0, 16, 20) / z;
        prop_assert!((truncexp_log_normalizer(w) - z.ln()).abs() < 1e-10);
        prop_assert!((truncexp_mean(w) - m).abs() < 1e-10);
        prop_assert!((truncexp_variance(w) - v).abs() < 1e-9);
    }

    #[test]
    fn power_prior_mixing_stays_in_domain(
        a1 in 0.1f64..50.0, b1 in 0.1f64..50.0, a2 in 0.1f64..50.0, b2 in 0.1f64..50.0, rho in 0.0f64..=1.0,
    ) {
        let mixed = power_prior_combine(&beta(a1, b1), &beta(a2, b2), rho).unwrap();
        let Standard::Beta { alpha, beta: b } = mixed.to_standard() else { unreachable!() };
        prop_assert!(alpha > 0.0 && b > 0.0);
        prop_assert!((alpha - (rho * a1 + (1.0 - rho) * a2)).abs() < 1e-9);
    }

    #[test]
    fn log_normalizer_is_convex_along_mixes(
        m1 in -3.0f64..3.0, k1 in 0.1f64..20.0, s1 in 0.6f64..20.0, r1 in 0.1f64..10.0,
        m2 in -3.0f64..3.0, k2 in 0.1f64..20.0, s2 in 0.6f64..20.0, r2 in 0.1f64..10.0,
        rho in 0.0f64..=1.0,
    ) {
        let (p, q) = (normal_gamma(m1, k1, s1, r1), normal_gamma(m2, k2, s2, r2));
        let mix = power_prior_combine(&p, &q, rho).unwrap();
        let rhs = rho * p.log_normalizer() + (1.0 - rho) * q.log_normalizer();
        prop_assert!(mix.log_normalizer() <= rhs + 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal(
        a1 in 0.2f64..30.0, b1 in 0.2f64..30.0, a2 in 0.2f64..30.0, b2 in 0.2f64..30.0,
    ) {
        let (p, q) = (beta(a1, b1), beta(a2, b2));
        prop_assert!(p.kl_divergence(&q).unwrap() >= 0.0);
        prop_assert!(p.kl_divergence(&p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn svb_updates_are_additive(ones in 0usize..200, zeros in 0usize..200, a in 0.5f64..5.0, b in 0.5f64..5.0) {
        prop_assume!(ones + zeros > 0);
        let model = make_beta_binomial(a, b).unwrap();
        let fit = fit_batch(&model, model.priors(), &bernoulli(1, ones, zeros), &FitConfig::default()).unwrap();
        let want = [a - 1.0 + ones as f64, b - 1.0 + zeros as f64];
        prop_assert!((fit.posterior[0].eta()[0] - want[0]).abs() < 1e-12);
        prop_assert!((fit.posterior[0].eta()[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn recursive_power_prior_matches_one_shot(
        s0 in 0usize..100, f0 in 0usize..100, s1 in 0usize..100, f1 in 0usize..100, rho in 0.05f64..=1.0,
    ) {
        prop_assume!(s0 + f0 > 0 && s1 + f1 > 0);
        let model = make_beta_binomial(1.0, 1.0).unwrap();
        let cfg = LearnerConfig { pinned_rho: Some(rho), ..LearnerConfig::svb_hpp() };
        let mut l = LearnerRegistry::default().build(&model, &cfg).unwrap();
        l.step(&bernoulli(1, s0, f0)).unwrap();
        l.step(&bernoulli(2, s1, f1)).unwrap();
        let Standard::Beta { alpha, beta } = l.state().posterior[0].to_standard() else { unreachable!() };
        prop_assert!((alpha - (1.0 + rho * s0 as f64 + s1 as f64)).abs() < 1e-10);
        prop_assert!((beta - (1.0 + rho * f0 as f64 + f1 as f64)).abs() < 1e-10);
    }

    #[test]
    fn double_bound_lies_below_the_bound(
        prev_ones in 0usize..80, prev_zeros in 0usize..80, ones in 0usize..80, zeros in 0usize..80,
        omega in -20.0f64..20.0,
    ) {
        prop_assume!(ones + zeros > 0);
        let model = make_beta_binomial(1.0, 1.0).unwrap();
        let prev = vec![beta(1.0 + prev_ones as f64, 1.0 + prev_zeros as f64)];
        let batch = bernoulli(2, ones, zeros);
        let fit = fit_batch(&model, &prev, &batch, &FitConfig::default()).unwrap();
        let mut state = DriftState::shared(&model, 0.1).unwrap();
        state.assignment = Assignment::Shared(TruncExp::new(omega, 0.1).unwrap());
        let hat = double_lower_bound(&model, &prev, model.priors(), &fit, &state, &batch).unwrap();

        // L by quadrature over ρ with the exact mixed log-normalizer
        let q = &fit.posterior[0];
        let data = streamvb::engine::elbo(&model, &fit.posterior, &fit.posterior, &fit.locals, &batch).unwrap();
        let (ag_w, ag_g) = (truncexp_log_normalizer(omega), truncexp_log_normalizer(0.1));
        let exact = data + common::integrate(|rho| {
            let p = power_prior_combine(&prev[0], &model.priors()[0], rho).unwrap();
            let log_q = omega * rho - ag_w;
            log_q.exp() * (-q.kl_divergence(&p).unwrap() + 0.1 * rho - ag_g - log_q)
        }, 0.0, 1.0, 64, 16);
        prop_assert!(hat <= exact + 1e-6, "{hat} > {exact}");
    }

    #[test]
    fn svb_ess_grows_by_batch_size(sizes in prop::collection::vec(1usize..300, 1..20)) {
        let model = make_beta_binomial(1.0, 1.0).unwrap();
        let mut l = LearnerRegistry::default().build(&model, &LearnerConfig::svb()).unwrap();
        let mut total = 2.0;
        for (t, n) in sizes.into_iter().enumerate() {
            let rec = l.step(&bernoulli(t + 1, n / 2, n - n / 2)).unwrap();
            total += n as f64;
            prop_assert_eq!(rec.ess[0], Some(total));
        }
    }
}

#[test]
fn degenerate_rho_closes_the_gap_when_histories_agree() {
    let model = make_beta_binomial(1.0, 1.0).unwrap();
    let batch = bernoulli(1, 12, 30);
    let fit = fit_batch(&model, model.priors(), &batch, &FitConfig::default()).unwrap();
    let state = DriftState::shared(&model, 0.1).unwrap().with_pinned(1.0).unwrap();
    let hat = double_lower_bound(&model, model.priors(), model.priors(), &fit, &state, &batch).unwrap();
    assert!((hat - fit.elbo()).abs() < 1e-12);
}

#[test]
fn svb_pp_ess_approaches_its_limit() {
    let model = make_beta_binomial(1.0, 1.0).unwrap();
    let mut l = LearnerRegistry::default().build(&model, &LearnerConfig::svb_pp(0.9)).unwrap();
    let mut last = 0.0;
    for t in 1..=100 {
        last = l.step(&bernoulli(t, 37, 63)).unwrap().ess[0].unwrap();
    }
    assert!((last - 1000.0).abs() / 1000.0 < 0.01, "{last}");
    assert!((ess(&l.state().posterior[0]).unwrap() - last).abs() < 1e-12);
}
