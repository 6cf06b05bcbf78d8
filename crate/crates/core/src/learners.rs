//! Streaming learners behind one batch-update interface.
//!
//! Each learner owns its posterior λ_t and advances it one batch at a time.
//! Learners are built by name through a [`LearnerRegistry`]:
//!
//! | name       | prior for batch t                    |
//! |------------|--------------------------------------|
//! | `svb`      | λ_{t−1}                              |
//! | `svb-pp`   | ρλ_{t−1} + (1−ρ)α_u with fixed ρ     |
//! | `pvb`      | stochastic natural-gradient step     |
//! | `svb-hpp`  | power prior with one inferred ρ      |
//! | `svb-mhpp` | power prior with one ρ per block     |

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::drift::{hpp_fit_batch, power_prior_combine, DriftState, DEFAULT_GAMMA};
use crate::engine::{elbo, fit_batch, FitConfig, FitResult};
use crate::error::{invalid, Error, Result};
use crate::expfam::NaturalParams;
use crate::metrics::{block_ess, tmll, TraceRecord};
use crate::models::ModelSpec;
use crate::streams::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerKind {
    Svb,
    SvbPp,
    Pvb,
    SvbHpp,
    SvbMhpp,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] =
        [LearnerKind::Svb, LearnerKind::SvbPp, LearnerKind::Pvb, LearnerKind::SvbHpp, LearnerKind::SvbMhpp];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Svb => "svb",
            LearnerKind::SvbPp => "svb-pp",
            LearnerKind::Pvb => "pvb",
            LearnerKind::SvbHpp => "svb-hpp",
            LearnerKind::SvbMhpp => "svb-mhpp",
        }
    }

    /// Accepts `svb-pp`, `SVB_PP`, `svb_pp` and so on.
    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown learner kind '{s}'")))
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BatchKeyword {
    Batch,
}

/// PVB's population size M: a fixed count or the size of each batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationSize {
    Fixed(u64),
    #[serde(with = "batch_keyword")]
    BatchSize,
}

mod batch_keyword {
    use super::BatchKeyword;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        BatchKeyword::Batch.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        BatchKeyword::deserialize(d).map(|_| ())
    }
}

impl PopulationSize {
    fn resolve(self, batch_len: usize) -> f64 {
        match self {
            PopulationSize::Fixed(m) => m as f64,
            PopulationSize::BatchSize => batch_len as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: String,
    /// Defaults to the kind's name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub population_size: Option<PopulationSize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Holds ρ fixed in the hierarchical learners.
    #[serde(default)]
    pub pinned_rho: Option<f64>,
    #[serde(default)]
    pub fit: FitConfig,
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind: kind.name().into(),
            name: None,
            rho: None,
            population_size: None,
            learning_rate: None,
            gamma: None,
            pinned_rho: None,
            fit: FitConfig::default(),
        }
    }

    pub fn svb() -> Self {
        Self::new(LearnerKind::Svb)
    }

    pub fn svb_pp(rho: f64) -> Self {
        Self { rho: Some(rho), ..Self::new(LearnerKind::SvbPp) }
    }

    pub fn pvb(population_size: PopulationSize, learning_rate: f64) -> Self {
        Self {
            population_size: Some(population_size),
            learning_rate: Some(learning_rate),
            ..Self::new(LearnerKind::Pvb)
        }
    }

    pub fn svb_hpp() -> Self {
        Self::new(LearnerKind::SvbHpp)
    }

    pub fn svb_mhpp() -> Self {
        Self::new(LearnerKind::SvbMhpp)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn learner_kind(&self) -> Result<LearnerKind> {
        LearnerKind::parse(&self.kind)
    }

    pub fn display_name(&self) -> String {
        match (&self.name, self.learner_kind()) {
            (Some(n), _) => n.clone(),
            (None, Ok(k)) => k.name().into(),
            (None, Err(_)) => self.kind.clone(),
        }
    }

    /// Checks that exactly the fields used by the kind are set and in range.
    pub fn validate(&self) -> Result<LearnerKind> {
        let kind = self.learner_kind()?;
        self.fit.validate().map_err(|e| Error::Config(e.to_string()))?;
        let fields = [
            ("rho", self.rho.is_some(), kind == LearnerKind::SvbPp),
            (
                "population_size",
                self.population_size.is_some(),
                kind == LearnerKind::Pvb,
            ),
            ("learning_rate", self.learning_rate.is_some(), kind == LearnerKind::Pvb),
            ("gamma", self.gamma.is_some(), matches!(kind, LearnerKind::SvbHpp | LearnerKind::SvbMhpp)),
            (
                "pinned_rho",
                self.pinned_rho.is_some(),
                matches!(kind, LearnerKind::SvbHpp | LearnerKind::SvbMhpp),
            ),
        ];
        for (field, present, allowed) in fields {
            if present && !allowed {
                return Err(Error::Config(format!("field '{field}' does not apply to {kind}")));
            }
        }
        let unit = |field: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{field} must lie in (0, 1], got {v}")))
            }
        };
        match kind {
            LearnerKind::SvbPp => {
                unit("rho", self.rho.ok_or_else(|| Error::Config("svb-pp needs 'rho'".into()))?)?
            }
            LearnerKind::Pvb => {
                match self.population_size {
                    None => return Err(Error::Config("pvb needs 'population_size'".into())),
                    Some(PopulationSize::Fixed(0)) => {
                        return Err(Error::Config("population_size must be >= 1".into()))
                    }
                    Some(_) => {}
                }
                unit(
                    "learning_rate",
                    self.learning_rate.ok_or_else(|| Error::Config("pvb needs 'learning_rate'".into()))?,
                )?;
            }
            LearnerKind::SvbHpp | LearnerKind::SvbMhpp => {
                if let Some(g) = self.gamma {
                    if !g.is_finite() {
                        return Err(Error::Config(format!("gamma must be finite, got {g}")));
                    }
                }
                if let Some(r) = self.pinned_rho {
                    unit("pinned_rho", r)?;
                }
            }
            LearnerKind::Svb => {}
        }
        Ok(kind)
    }
}

/// λ_t, the drift state of the hierarchical learners, and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub posterior: Vec<NaturalParams>,
    pub drift: Option<DriftState>,
    pub step: usize,
}

/// Validates `cfg` and returns the initial state: the model priors at step 0.
pub fn learner_init(model: &ModelSpec, cfg: &LearnerConfig) -> Result<LearnerState> {
    let kind = cfg.validate()?;
    let gamma = cfg.gamma.unwrap_or(DEFAULT_GAMMA);
    let drift = match kind {
        LearnerKind::SvbHpp => Some(DriftState::shared(model, gamma)?),
        LearnerKind::SvbMhpp => Some(DriftState::per_block(model, gamma)?),
        _ => None,
    };
    let drift = match (drift, cfg.pinned_rho) {
        (Some(d), Some(r)) => Some(d.with_pinned(r)?),
        (d, _) => d,
    };
    Ok(LearnerState { posterior: model.priors().to_vec(), drift, step: 0 })
}

pub trait Learner: Send {
    fn name(&self) -> &str;
    fn kind(&self) -> LearnerKind;
    fn state(&self) -> &LearnerState;
    /// Consumes one batch. On error the state is left unchanged.
    fn step(&mut self, batch: &Batch) -> Result<TraceRecord>;
}

pub type LearnerFactory = fn(&ModelSpec, &LearnerConfig) -> Result<Box<dyn Learner>>;

/// Name → constructor table.
#[derive(Clone)]
pub struct LearnerRegistry {
    factories: BTreeMap<String, LearnerFactory>,
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        for kind in LearnerKind::ALL {
            r.register(kind.name(), build_builtin);
        }
        r
    }
}

impl LearnerRegistry {
    pub fn register(&mut self, name: &str, factory: LearnerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, model: &ModelSpec, cfg: &LearnerConfig) -> Result<Box<dyn Learner>> {
        let key = cfg.kind.trim().to_ascii_lowercase().replace('_', "-");
        let factory = self
            .factories
            .get(&key)
            .ok_or_else(|| Error::Config(format!("no learner registered as '{}'", cfg.kind)))?;
        factory(model, cfg)
    }
}

fn build_builtin(model: &ModelSpec, cfg: &LearnerConfig) -> Result<Box<dyn Learner>> {
    let kind = cfg.validate()?;
    if kind == LearnerKind::Pvb {
        // surfaces the regression model's missing closed-form gradient up front
        model.expected_stats(model.priors(), &[], &Default::default())?;
    }
    let state = learner_init(model, cfg)?;
    Ok(Box::new(Streaming { name: cfg.display_name(), kind, model: model.clone(), cfg: cfg.clone(), state }))
}

struct Streaming {
    name: String,
    kind: LearnerKind,
    model: ModelSpec,
    cfg: LearnerConfig,
    state: LearnerState,
}

struct Update {
    posterior: Vec<NaturalParams>,
    drift: Option<DriftState>,
    bound: f64,
}

impl Streaming {
    fn update(&self, batch: &Batch) -> Result<Update> {
        let model = &self.model;
        let prev = &self.state.posterior;
        let fit_cfg = &self.cfg.fit;
        let plain = |fit: FitResult| Update { bound: fit.elbo(), posterior: fit.posterior, drift: None };
        Ok(match self.kind {
            LearnerKind::Svb => plain(fit_batch(model, prev, batch, fit_cfg)?),
            LearnerKind::SvbPp => {
                let rho = self.cfg.rho.expect("validated");
                let prior = prev
                    .iter()
                    .zip(model.priors())
                    .map(|(l, u)| power_prior_combine(l, u, rho))
                    .collect::<Result<Vec<_>>>()?;
                plain(fit_batch(model, &prior, batch, fit_cfg)?)
            }
            LearnerKind::Pvb => {
                let nu = self.cfg.learning_rate.expect("validated");
                let m = self.cfg.population_size.expect("validated").resolve(batch.train.len());
                let local_fit = fit_batch(model, prev, batch, fit_cfg)?;
                let stats = model.expected_stats(&local_fit.posterior, &batch.train, &local_fit.locals)?;
                let scale = m / batch.train.len() as f64;
                let mut posterior = Vec::with_capacity(prev.len());
                for ((l, u), s) in prev.iter().zip(model.priors()).zip(&stats) {
                    let eta = l
                        .eta()
                        .iter()
                        .zip(u.eta())
                        .zip(s)
                        .map(|((l, u), s)| (1.0 - nu) * l + nu * (u + scale * s))
                        .collect();
                    posterior.push(NaturalParams::new(l.family(), eta)?);
                }
                let bound = elbo(model, prev, &posterior, &local_fit.locals, batch)?;
                Update { posterior, drift: None, bound }
            }
            LearnerKind::SvbHpp | LearnerKind::SvbMhpp => {
                let drift = self.state.drift.as_ref().expect("hierarchical learners carry a drift state");
                let (fit, next, bound) = hpp_fit_batch(model, prev, drift, batch, fit_cfg)?;
                Update { posterior: fit.posterior, drift: Some(next), bound }
            }
        })
    }
}

impl Learner for Streaming {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> LearnerKind {
        self.kind
    }

    fn state(&self) -> &LearnerState {
        &self.state
    }

    fn step(&mut self, batch: &Batch) -> Result<TraceRecord> {
        if batch.train.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let up = self.update(batch)?;
        let score = if batch.test.is_empty() {
            None
        } else {
            Some(tmll(&self.model, &up.posterior, &batch.test, self.cfg.fit.seed, batch.t)?)
        };
        if !up.bound.is_finite() {
            return Err(invalid(format!("non-finite bound {} at t={}", up.bound, batch.t)));
        }
        let record = TraceRecord {
            t: batch.t,
            learner: self.name.clone(),
            elbo: up.bound,
            ess: block_ess(&up.posterior),
            expected_rho: up.drift.as_ref().map(|d| d.expected_rhos()).unwrap_or_default(),
            tmll: score,
            summary: self.model.posterior_summary(&up.posterior),
        };
        self.state = LearnerState { posterior: up.posterior, drift: up.drift, step: self.state.step + 1 };
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::Standard;
    use crate::models::{make_beta_binomial, make_linear_regression, make_mixture_model};

    #[test]
    fn kind_parsing() {
        assert_eq!(LearnerKind::parse("SVB_PP").unwrap(), LearnerKind::SvbPp);
        assert_eq!(LearnerKind::parse("svb-mhpp").unwrap(), LearnerKind::SvbMhpp);
        assert!(LearnerKind::parse("svi").is_err());
    }

    #[test]
    fn init_states() {
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        let s = learner_init(&m, &LearnerConfig::svb()).unwrap();
        assert_eq!(s.step, 0);
        assert_eq!(s.posterior[0].to_standard(), Standard::Beta { alpha: 1.0, beta: 1.0 });
        assert!(learner_init(&m, &LearnerConfig::new(LearnerKind::SvbPp)).is_err());

        let mix = make_mixture_model(2, 1).unwrap();
        assert_eq!(mix.blocks().len(), 3);
        let s = learner_init(&mix, &LearnerConfig::svb_mhpp()).unwrap();
        assert_eq!(s.drift.unwrap().expected_rhos().len(), 3);
    }

    #[test]
    fn irrelevant_fields_are_rejected() {
        let cfg = LearnerConfig { rho: Some(0.9), ..LearnerConfig::svb() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = LearnerConfig { gamma: Some(0.1), ..LearnerConfig::pvb(PopulationSize::BatchSize, 0.1) };
        assert!(cfg.validate().is_err());
        assert!(LearnerConfig::svb_pp(0.0).validate().is_err());
        assert!(LearnerConfig::pvb(PopulationSize::Fixed(0), 0.1).validate().is_err());
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = LearnerRegistry::default();
        assert_eq!(reg.names().count(), 5);
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        let l = reg.build(&m, &LearnerConfig::svb_pp(0.9).named("pp")).unwrap();
        assert_eq!((l.name(), l.kind()), ("pp", LearnerKind::SvbPp));
        let reg_model = make_linear_regression(2).unwrap();
        let err = reg.build(&reg_model, &LearnerConfig::pvb(PopulationSize::BatchSize, 0.1));
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn failed_step_leaves_state_untouched() {
        let m = make_beta_binomial(1.0, 1.0).unwrap();
        let mut l = LearnerRegistry::default().build(&m, &LearnerConfig::svb()).unwrap();
        let before = l.state().clone();
        assert!(l.step(&Batch::new(1, vec![vec![0.5]])).is_err());
        assert_eq!(l.state(), &before);
        l.step(&Batch::new(1, vec![vec![1.0]; 3])).unwrap();
        assert_eq!(l.state().step, 1);
    }
}
