//! Conjugate models mapped onto exponential-family blocks.
//!
//! A [`ModelSpec`] lists the global parameter blocks (name, family,
//! prior), an optional categorical local latent, and the observation
//! model. The per-model coordinate updates live in the submodules and are
//! reached through the dispatch functions at the bottom of this file; the
//! engine only talks to those.
//!
//! Observations are rows of reals:
//!
//! * Beta-Binomial: `[y]` with y ∈ {0, 1}
//! * Gaussian: `[x]`
//! * Linear regression with d features: `[x₁, …, x_d, y]`
//! * Mixture with `dims` dimensions: `[x₁, …, x_dims]`

mod beta_binomial;
mod gaussian;
mod mixture;
mod regression;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expfam::{Family, NaturalParams, Standard};

pub use gaussian::student_t_log_pdf;

/// One data row.
pub type Observation = Vec<f64>;

/// Precision used for "flat" Gaussian priors.
pub const FLAT_PRECISION: f64 = 1e-10;

/// The NormalGamma prior used throughout: Gamma(shape 1, rate 1) on the
/// precision, mean 0 with precision scale 1e-10.
pub fn flat_normal_gamma() -> NaturalParams {
    NaturalParams::from_standard(&Standard::NormalGamma {
        mean: 0.0,
        kappa: FLAT_PRECISION,
        shape: 1.0,
        rate: 1.0,
    })
    .expect("flat NormalGamma prior is in domain")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    BetaBinomial,
    Gaussian,
    LinearRegression { num_features: usize },
    Mixture { k: usize, dims: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    kind: ModelKind,
    blocks: Vec<Block>,
    local_latent: Option<usize>,
    priors: Vec<NaturalParams>,
}

/// Variational parameters of the local latents: one probability vector
/// per observation. Empty for latent-free models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalParams {
    pub responsibilities: Vec<Vec<f64>>,
}

impl LocalParams {
    pub fn is_empty(&self) -> bool {
        self.responsibilities.is_empty()
    }
}

pub fn make_beta_binomial(prior_alpha: f64, prior_beta: f64) -> Result<ModelSpec> {
    if !(prior_alpha > 0.0 && prior_beta > 0.0) {
        return Err(invalid(format!(
            "Beta-Binomial hyperparameters must be positive, got ({prior_alpha}, {prior_beta})"
        )));
    }
    let prior = NaturalParams::from_standard(&Standard::Beta { alpha: prior_alpha, beta: prior_beta })?;
    ModelSpec::new(
        ModelKind::BetaBinomial,
        vec![Block { name: "p".into(), family: Family::Beta }],
        None,
        vec![prior],
    )
}

pub fn make_gaussian_model() -> ModelSpec {
    ModelSpec::new(
        ModelKind::Gaussian,
        vec![Block { name: "theta".into(), family: Family::NormalGamma }],
        None,
        vec![flat_normal_gamma()],
    )
    .expect("static model is valid")
}

pub fn make_mixture_model(k: usize, dims: usize) -> Result<ModelSpec> {
    if k < 2 {
        return Err(invalid(format!("a mixture needs k >= 2 components, got {k}")));
    }
    if dims < 1 {
        return Err(invalid("a mixture needs dims >= 1"));
    }
    let mut blocks = vec![Block { name: "weights".into(), family: Family::Dirichlet { k } }];
    let mut priors = vec![NaturalParams::new(Family::Dirichlet { k }, vec![0.0; k])?];
    for c in 0..k {
        for d in 0..dims {
            blocks.push(Block { name: format!("component{c}.dim{d}"), family: Family::NormalGamma });
            priors.push(flat_normal_gamma());
        }
    }
    ModelSpec::new(ModelKind::Mixture { k, dims }, blocks, Some(k), priors)
}

pub fn make_linear_regression(num_features: usize) -> Result<ModelSpec> {
    if num_features < 1 {
        return Err(invalid("linear regression needs at least one feature"));
    }
    let flat = NaturalParams::from_standard(&Standard::Normal { mean: 0.0, precision: FLAT_PRECISION })?;
    let mut blocks = Vec::new();
    let mut priors = Vec::new();
    for j in 0..=num_features {
        blocks.push(Block { name: format!("b{j}"), family: Family::Normal });
        priors.push(flat.clone());
    }
    blocks.push(Block { name: "noise_precision".into(), family: Family::Gamma });
    priors.push(NaturalParams::from_standard(&Standard::Gamma { shape: 1.0, rate: 1.0 })?);
    for i in 0..num_features {
        blocks.push(Block { name: format!("x{}", i + 1), family: Family::NormalGamma });
        priors.push(flat_normal_gamma());
    }
    ModelSpec::new(ModelKind::LinearRegression { num_features }, blocks, None, priors)
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        blocks: Vec<Block>,
        local_latent: Option<usize>,
        priors: Vec<NaturalParams>,
    ) -> Result<Self> {
        if blocks.len() != priors.len() {
            return Err(invalid(format!(
                "{} blocks but {} priors",
                blocks.len(),
                priors.len()
            )));
        }
        for (b, p) in blocks.iter().zip(&priors) {
            if b.family != p.family() {
                return Err(Error::FamilyMismatch {
                    expected: b.family.to_string(),
                    found: p.family().to_string(),
                });
            }
        }
        if let Some(k) = local_latent {
            if k < 2 {
                return Err(invalid("local latents need at least 2 components"));
            }
        }
        Ok(Self { kind, blocks, local_latent, priors })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn local_latent(&self) -> Option<usize> {
        self.local_latent
    }

    /// Uninformative priors α_u, one per block.
    pub fn priors(&self) -> &[NaturalParams] {
        &self.priors
    }

    pub fn likelihood(&self) -> &'static str {
        match self.kind {
            ModelKind::BetaBinomial => "bernoulli",
            ModelKind::Gaussian => "gaussian",
            ModelKind::LinearRegression { .. } => "linear-gaussian",
            ModelKind::Mixture { .. } => "gaussian-mixture",
        }
    }

    /// Number of reals per observation row.
    pub fn observation_width(&self) -> usize {
        match self.kind {
            ModelKind::BetaBinomial | ModelKind::Gaussian => 1,
            ModelKind::LinearRegression { num_features } => num_features + 1,
            ModelKind::Mixture { dims, .. } => dims,
        }
    }

    /// Checks that `params` has one in-family entry per block.
    pub fn check_blocks(&self, params: &[NaturalParams]) -> Result<()> {
        if params.len() != self.blocks.len() {
            return Err(invalid(format!(
                "expected {} parameter blocks, got {}",
                self.blocks.len(),
                params.len()
            )));
        }
        for (b, p) in self.blocks.iter().zip(params) {
            if b.family != p.family() {
                return Err(Error::FamilyMismatch {
                    expected: format!("{} for block {}", b.family, b.name),
                    found: p.family().to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn check_observations(&self, data: &[Observation]) -> Result<()> {
        let width = self.observation_width();
        for (i, row) in data.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Support(format!(
                    "observation {i} has {} values, {} model expects {width}",
                    row.len(),
                    self.likelihood()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Support(format!("observation {i} contains {v}")));
            }
            if self.kind == ModelKind::BetaBinomial && row[0] != 0.0 && row[0] != 1.0 {
                return Err(Error::Support(format!(
                    "observation {i} = {} is not a 0/1 outcome",
                    row[0]
                )));
            }
        }
        Ok(())
    }

    /// True when one global update from the prior already reaches the
    /// exact optimum (single conjugate block, no local latents).
    pub fn exact_in_one_sweep(&self) -> bool {
        matches!(self.kind, ModelKind::BetaBinomial | ModelKind::Gaussian)
    }

    /// Starting point for coordinate ascent. Mixtures draw random
    /// responsibilities from `rng` and turn them into a first global
    /// update; other models start from the prior.
    pub(crate) fn initial_state<R: Rng>(
        &self,
        prior: &[NaturalParams],
        data: &[Observation],
        rng: &mut R,
    ) -> Result<(Vec<NaturalParams>, LocalParams)> {
        match self.kind {
            ModelKind::Mixture { k, dims } => {
                let locals = mixture::random_locals(k, data.len(), rng);
                let post = mixture::update_globals(k, dims, prior, data, &locals)?;
                Ok((post, locals))
            }
            _ => Ok((prior.to_vec(), LocalParams::default())),
        }
    }

    pub(crate) fn update_locals(
        &self,
        posterior: &[NaturalParams],
        data: &[Observation],
    ) -> LocalParams {
        match self.kind {
            ModelKind::Mixture { k, dims } => mixture::update_locals(k, dims, posterior, data),
            _ => LocalParams::default(),
        }
    }

    /// One pass of global updates; each block is set to its optimum given
    /// the others.
    pub(crate) fn update_globals(
        &self,
        prior: &[NaturalParams],
        posterior: &mut Vec<NaturalParams>,
        data: &[Observation],
        locals: &LocalParams,
    ) -> Result<()> {
        match self.kind {
            ModelKind::BetaBinomial => {
                *posterior = vec![prior[0].add_stats(&beta_binomial::stats(data))?];
            }
            ModelKind::Gaussian => {
                *posterior = vec![prior[0].add_stats(&gaussian::stats(data))?];
            }
            ModelKind::Mixture { k, dims } => {
                *posterior = mixture::update_globals(k, dims, prior, data, locals)?;
            }
            ModelKind::LinearRegression { num_features } => {
                regression::update_globals(num_features, prior, posterior, data)?;
            }
        }
        Ok(())
    }

    /// E_q[ln p(x, z | β)] − E_q[ln q(z)].
    pub(crate) fn data_term(
        &self,
        posterior: &[NaturalParams],
        data: &[Observation],
        locals: &LocalParams,
    ) -> f64 {
        match self.kind {
            ModelKind::BetaBinomial => beta_binomial::data_term(&posterior[0], data),
            ModelKind::Gaussian => gaussian::data_term(&posterior[0], data),
            ModelKind::Mixture { k, dims } => mixture::data_term(k, dims, posterior, data, locals),
            ModelKind::LinearRegression { num_features } => {
                regression::data_term(num_features, posterior, data)
            }
        }
    }

    /// Summed expected sufficient statistics per block, the quantity a
    /// stochastic natural-gradient step rescales. Not available for the
    /// regression model, whose coefficient and noise blocks are coupled.
    pub fn expected_stats(
        &self,
        posterior: &[NaturalParams],
        data: &[Observation],
        locals: &LocalParams,
    ) -> Result<Vec<Vec<f64>>> {
        match self.kind {
            ModelKind::BetaBinomial => Ok(vec![beta_binomial::stats(data)]),
            ModelKind::Gaussian => Ok(vec![gaussian::stats(data)]),
            ModelKind::Mixture { k, dims } => {
                let _ = posterior;
                Ok(mixture::stats(k, dims, data, locals))
            }
            ModelKind::LinearRegression { .. } => Err(Error::Unsupported(
                "the linear regression model is not conditionally conjugate; \
                 its lower-bound gradient has no closed form"
                    .into(),
            )),
        }
    }

    /// Closed-form log predictive density of one observation under the
    /// variational posterior, where one exists.
    pub fn log_predictive(&self, posterior: &[NaturalParams], x: &[f64]) -> Option<f64> {
        match self.kind {
            ModelKind::BetaBinomial => Some(beta_binomial::log_predictive(&posterior[0], x[0])),
            ModelKind::Gaussian => Some(student_t_log_pdf(&posterior[0], x[0])),
            ModelKind::Mixture { k, dims } => Some(mixture::log_predictive(k, dims, posterior, x)),
            ModelKind::LinearRegression { .. } => None,
        }
    }

    /// ln p(x | β) for one draw of the global parameters. `draw[b]` holds
    /// the sampled value(s) of block b: Beta → [p], Dirichlet → weights,
    /// Gamma → [τ], NormalGamma → [μ, τ], Normal → [b].
    pub fn log_likelihood_at(&self, draw: &[Vec<f64>], x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::BetaBinomial => {
                let p = draw[0][0];
                if x[0] == 1.0 { p.ln() } else { (1.0 - p).ln() }
            }
            ModelKind::Gaussian => gaussian::log_normal_pdf(x[0], draw[0][0], draw[0][1]),
            ModelKind::Mixture { k, dims } => mixture::log_likelihood_at(k, dims, draw, x),
            ModelKind::LinearRegression { num_features } => {
                regression::log_likelihood_at(num_features, draw, x)
            }
        }
    }

    /// Point summary of the posterior, e.g. E[β_t] for the Beta-Binomial.
    pub fn posterior_summary(&self, posterior: &[NaturalParams]) -> Vec<f64> {
        match self.kind {
            ModelKind::BetaBinomial => match posterior[0].to_standard() {
                Standard::Beta { alpha, beta } => vec![alpha / (alpha + beta)],
                _ => unreachable!("Beta block"),
            },
            ModelKind::Gaussian => gaussian::summary(&posterior[0]),
            ModelKind::Mixture { k, dims } => mixture::summary(k, dims, posterior),
            ModelKind::LinearRegression { num_features } => {
                regression::summary(num_features, posterior)
            }
        }
    }

    pub fn summary_labels(&self) -> Vec<String> {
        match self.kind {
            ModelKind::BetaBinomial => vec!["mean_p".into()],
            ModelKind::Gaussian => vec!["mean_mu".into(), "mean_tau".into()],
            ModelKind::Mixture { k, dims } => {
                let mut v: Vec<String> = (0..k).map(|c| format!("weight{c}")).collect();
                for c in 0..k {
                    for d in 0..dims {
                        v.push(format!("mean{c}.{d}"));
                    }
                }
                v
            }
            ModelKind::LinearRegression { num_features } => {
                let mut v: Vec<String> = (0..=num_features).map(|j| format!("b{j}")).collect();
                v.push("noise_precision".into());
                v
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_binomial_construction() {
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        assert_eq!(m.blocks().len(), 1);
        assert_eq!(m.priors()[0].eta(), &[0.0, 0.0]);
        assert!(make_beta_binomial(0.0, 1.0).is_err());
        assert!(make_beta_binomial(1.0, -2.0).is_err());
    }

    #[test]
    fn gaussian_prior_hyperparameters() {
        let m = make_gaussian_model();
        match m.priors()[0].to_standard() {
            Standard::NormalGamma { mean, kappa, shape, rate } => {
                assert_eq!((mean, shape, rate), (0.0, 1.0, 1.0));
                assert!((kappa - 1e-10).abs() < 1e-24);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixture_block_counts() {
        let m = make_mixture_model(2, 1).unwrap();
        assert_eq!(m.blocks().len(), 3);
        assert_eq!(m.blocks()[0].family, Family::Dirichlet { k: 2 });
        assert_eq!(m.local_latent(), Some(2));
        let m5 = make_mixture_model(5, 2).unwrap();
        assert_eq!(m5.blocks().len(), 1 + 10);
        assert!(make_mixture_model(1, 1).is_err());
        assert!(make_mixture_model(3, 0).is_err());
    }

    #[test]
    fn regression_structure() {
        let m = make_linear_regression(3).unwrap();
        let fams: Vec<Family> = m.blocks().iter().map(|b| b.family).collect();
        assert_eq!(&fams[..4], &[Family::Normal; 4]);
        assert_eq!(fams[4], Family::Gamma);
        assert_eq!(&fams[5..], &[Family::NormalGamma; 3]);
        match m.priors()[4].to_standard() {
            Standard::Gamma { shape, rate } => assert_eq!((shape, rate), (1.0, 1.0)),
            other => panic!("{other:?}"),
        }
        assert!(make_linear_regression(0).is_err());
    }

    #[test]
    fn observation_checks() {
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        assert!(m.check_observations(&[vec![1.0], vec![0.0]]).is_ok());
        assert!(m.check_observations(&[vec![0.5]]).is_err());
        assert!(m.check_observations(&[vec![1.0, 0.0]]).is_err());
        let g = make_gaussian_model();
        assert!(g.check_observations(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn spec_rejects_mismatched_priors() {
        let blocks = vec![Block { name: "p".into(), family: Family::Beta }];
        let priors = vec![flat_normal_gamma()];
        assert!(ModelSpec::new(ModelKind::BetaBinomial, blocks, None, priors).is_err());
    }
}
