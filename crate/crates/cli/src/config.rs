//! Experiment configuration: one TOML file plus dotted-key overrides.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [model]
//! kind = "beta-binomial"        # or gaussian, mixture, linear-regression
//!
//! [stream]
//! source = "binomial"           # or gaussian, csv
//! batch_size = 100
//! segments = [{ steps = 30, params = [0.2] }, { steps = 70, params = [0.8] }]
//!
//! [[learners]]
//! kind = "svb-pp"
//! rho = 0.9
//! ```
//!
//! Any key can be overridden with `--set path=value`, where the path is
//! dotted and array elements are addressed by index (`learners.0.rho=0.99`).
//! The value is parsed as a TOML value, falling back to a plain string.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use streamvb::learners::LearnerConfig;
use streamvb::models::{make_beta_binomial, make_gaussian_model, make_linear_regression, make_mixture_model, ModelSpec};
use streamvb::streams::{generate_binomial_stream, generate_gaussian_stream, load_csv_stream, Batch, DriftSchedule, Segment};
use toml::{Table, Value};

use crate::error::CliError;

pub const OUTPUT_DIR_ENV: &str = "STREAMVB_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub stream: StreamConfig,
    #[serde(default)]
    pub learners: Vec<LearnerConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    BetaBinomial {
        #[serde(default = "one")]
        prior_alpha: f64,
        #[serde(default = "one")]
        prior_beta: f64,
    },
    Gaussian,
    Mixture { k: usize, dims: usize },
    LinearRegression { num_features: usize },
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        Ok(match *self {
            ModelConfig::BetaBinomial { prior_alpha, prior_beta } => make_beta_binomial(prior_alpha, prior_beta)?,
            ModelConfig::Gaussian => make_gaussian_model(),
            ModelConfig::Mixture { k, dims } => make_mixture_model(k, dims)?,
            ModelConfig::LinearRegression { num_features } => make_linear_regression(num_features)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StreamConfig {
    Binomial {
        segments: Vec<Segment>,
        batch_size: usize,
        #[serde(default)]
        holdout: bool,
    },
    Gaussian {
        segments: Vec<Segment>,
        batch_size: usize,
        #[serde(default)]
        holdout: bool,
    },
    Csv { path: PathBuf, batch_column: String },
}

impl StreamConfig {
    /// The schedule of a synthetic source, seeded with `seed`.
    pub fn schedule(&self, seed: u64) -> Option<DriftSchedule> {
        match self {
            StreamConfig::Binomial { segments, batch_size, holdout }
            | StreamConfig::Gaussian { segments, batch_size, holdout } => Some(DriftSchedule {
                segments: segments.clone(),
                batch_size: *batch_size,
                seed,
                holdout: *holdout,
            }),
            StreamConfig::Csv { .. } => None,
        }
    }

    /// Relative CSV paths resolve against `base` (the config file's directory).
    pub fn load(&self, seed: u64, base: &Path) -> Result<Vec<Batch>, CliError> {
        match self {
            StreamConfig::Binomial { .. } => Ok(generate_binomial_stream(&self.schedule(seed).expect("synthetic"))?),
            StreamConfig::Gaussian { .. } => Ok(generate_gaussian_stream(&self.schedule(seed).expect("synthetic"))?),
            StreamConfig::Csv { path, batch_column } => {
                let path = base.join(path);
                load_csv_stream(&path, batch_column, seed).map_err(|e| CliError::from_core_at(e, &path))
            }
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads `path`, applies `--set` pairs, then `--seed`, then the output
    /// directory from the flag, the environment or the file, in that order.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        Self::parse(&text, overrides, env_dir)
    }

    pub fn parse(text: &str, overrides: &Overrides, env_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for pair in &overrides.set {
            apply_override(&mut table, pair)?;
        }
        let mut cfg: ExperimentConfig =
            Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = overrides.output_dir.clone().or(env_dir) {
            cfg.output_dir = dir;
        }
        Ok(cfg)
    }

    /// Learner configs with the experiment seed applied, after checking
    /// that there is at least one and the names are unique.
    pub fn learner_configs(&self) -> Result<Vec<LearnerConfig>, CliError> {
        if self.learners.is_empty() {
            return Err(CliError::Config("the experiment lists no learners".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.learners {
            let name = l.display_name();
            if !seen.insert(name.clone()) {
                return Err(CliError::Config(format!("learner name '{name}' is used twice")));
            }
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(CliError::Config(format!("learner name '{name}' cannot be used as a file name")));
            }
        }
        Ok(self
            .learners
            .iter()
            .cloned()
            .map(|mut l| {
                l.fit.seed = self.seed;
                l
            })
            .collect())
    }
}

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut Table, pair: &str) -> Result<(), CliError> {
    let (path, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{pair}' is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key '{path}' has an empty segment")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("non-empty");

    let mut node: &mut Value = root
        .entry(keys[0].to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    if parents.is_empty() {
        *node = value;
        return Ok(());
    }
    for key in &parents[1..] {
        node = child(node, key, path)?;
    }
    match node {
        Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        Value::Array(a) => {
            let i = index(last, a.len(), path)?;
            a[i] = value;
        }
        _ => return Err(CliError::Config(format!("override '{path}' descends into a scalar"))),
    }
    Ok(())
}

fn child<'a>(node: &'a mut Value, key: &str, path: &str) -> Result<&'a mut Value, CliError> {
    match node {
        Value::Table(t) => Ok(t.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()))),
        Value::Array(a) => {
            let i = index(key, a.len(), path)?;
            Ok(&mut a[i])
        }
        _ => Err(CliError::Config(format!("override '{path}' descends into a scalar"))),
    }
}

fn index(key: &str, len: usize, path: &str) -> Result<usize, CliError> {
    match key.parse::<usize>() {
        Ok(i) if i < len => Ok(i),
        _ => Err(CliError::Config(format!("override '{path}': no element '{key}' in an array of {len}"))),
    }
}
