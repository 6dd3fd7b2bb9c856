//! Run configuration read from a TOML file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmle_mnar::data::{CsvConfig, MissingnessScheme};
use tmle_mnar::estimators::{ContrastKind, EstimatorKind};
use tmle_mnar::mi::ImputationConfig;
use tmle_mnar::nuisance::{NuisanceSpecs, P_FLOOR};
use tmle_mnar::simulate::{Arm, Scenario, ScenarioSpec};

/// Overrides the configured seed.
pub const SEED_ENV: &str = "TMLE_MNAR_SEED";
/// Overrides the configured output directory.
pub const OUT_ENV: &str = "TMLE_MNAR_OUT";

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn plain(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    TextTable,
}

fn default_seed() -> u64 {
    20240601
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::TextTable, OutputFormat::Csv, OutputFormat::Json]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_table: Option<TableConfig>,
}

/// The single command a configuration describes.
#[derive(Clone, Copy, Debug)]
pub enum Command<'a> {
    Estimate(&'a EstimateConfig),
    Simulate(&'a SimulateConfig),
    ReplicateTable(&'a TableConfig),
}

fn default_roster() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::CompleteCase,
        EstimatorKind::MultipleImputation,
        EstimatorKind::TmleA,
        EstimatorKind::TmleB,
    ]
}

fn default_one() -> f64 {
    1.0
}

fn default_b_single() -> usize {
    5000
}

fn default_p_floor() -> f64 {
    P_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: PathBuf,
    pub columns: CsvConfig,
    #[serde(default = "default_roster")]
    pub roster: Vec<EstimatorKind>,
    #[serde(default = "default_one")]
    pub a: f64,
    /// Regrouping of missingness indicators applied before estimation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<MissingnessScheme>,
    /// Covariate ordering for the sequential estimators, by variable name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<ContrastKind>,
    /// Bootstrap resamples; 0 disables the bootstrap.
    #[serde(default = "default_b_single")]
    pub bootstrap: usize,
    #[serde(default = "default_p_floor")]
    pub p_floor: f64,
    #[serde(default)]
    pub specs: NuisanceSpecs,
    #[serde(default)]
    pub imputation: ImputationConfig,
}

/// A scenario by name with optional size and exposure level, or a full
/// specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioChoice {
    Preset(ScenarioPreset),
    Custom(ScenarioSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioPreset {
    pub preset: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl ScenarioChoice {
    pub fn spec(&self) -> ScenarioSpec {
        match self {
            ScenarioChoice::Custom(s) => s.clone(),
            ScenarioChoice::Preset(p) => {
                let mut s = ScenarioSpec::default_for(p.preset);
                if let Some(n) = p.n {
                    s.n = n;
                }
                if let Some(a) = p.a {
                    s.a = a;
                }
                s
            }
        }
    }
}

fn default_reps() -> usize {
    1000
}

fn default_b_sim() -> usize {
    1000
}

fn default_arms() -> Vec<Arm> {
    Arm::ALL.to_vec()
}

fn default_sim_imputation() -> ImputationConfig {
    ImputationConfig::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioChoice,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_b_sim")]
    pub b: usize,
    /// Estimators per arm; the scenario's default five when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    /// Estimators that get bootstrap intervals; all of them when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<Vec<EstimatorKind>>,
    #[serde(default = "default_sim_imputation")]
    pub imputation: ImputationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_b_sim")]
    pub b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<Vec<EstimatorKind>>,
    #[serde(default = "default_sim_imputation")]
    pub imputation: ImputationConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn check_unique<T: Ord + fmt::Debug>(what: &str, items: &[T]) -> Result<(), ConfigError> {
    let set: BTreeSet<&T> = items.iter().collect();
    if set.len() != items.len() {
        return Err(ConfigError::plain(format!("{what} lists an entry twice")));
    }
    Ok(())
}

fn check_bootstrap(b: usize, any: bool) -> Result<(), ConfigError> {
    if any && b < 100 {
        return Err(ConfigError::plain(format!("bootstrap needs b >= 100, got {b}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::plain(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn command(&self) -> Command<'_> {
        match (&self.estimate, &self.simulate, &self.replicate_table) {
            (Some(e), None, None) => Command::Estimate(e),
            (None, Some(s), None) => Command::Simulate(s),
            (None, None, Some(t)) => Command::ReplicateTable(t),
            _ => unreachable!("validated configuration holds one command"),
        }
    }

    /// Applies the seed and output-directory environment overrides.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(s) = get(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| ConfigError::plain(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?;
        }
        if let Some(dir) = get(OUT_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let count = [
            self.estimate.is_some(),
            self.simulate.is_some(),
            self.replicate_table.is_some(),
        ]
        .into_iter()
        .filter(|x| *x)
        .count();
        if count != 1 {
            return Err(ConfigError::plain(
                "exactly one of [estimate], [simulate] or [replicate_table] is required",
            ));
        }
        if self.formats.is_empty() {
            return Err(ConfigError::plain("formats is empty"));
        }
        check_unique("formats", &self.formats)?;
        match self.command() {
            Command::Estimate(e) => {
                if e.roster.is_empty() {
                    return Err(ConfigError::plain("estimate.roster is empty"));
                }
                check_unique("estimate.roster", &e.roster)?;
                if e.a != 0.0 && e.a != 1.0 {
                    return Err(ConfigError::plain(format!("estimate.a must be 0 or 1, got {}", e.a)));
                }
                if !(e.p_floor > 0.0 && e.p_floor < 1.0) {
                    return Err(ConfigError::plain("estimate.p_floor must lie in (0, 1)"));
                }
                if e.bootstrap != 0 {
                    check_bootstrap(e.bootstrap, true)?;
                }
                if e.roster.contains(&EstimatorKind::MultipleImputation) {
                    e.imputation.validate().map_err(|x| ConfigError::plain(x.to_string()))?;
                }
            }
            Command::Simulate(s) => {
                if s.reps == 0 {
                    return Err(ConfigError::plain("simulate.reps must be positive"));
                }
                if s.arms.is_empty() || s.estimators.as_ref().is_some_and(|e| e.is_empty()) {
                    return Err(ConfigError::plain("simulate roster is empty"));
                }
                check_unique("simulate.arms", &s.arms)?;
                if let Some(e) = &s.estimators {
                    check_unique("simulate.estimators", e)?;
                }
                let boots = s.bootstrap.as_ref().is_none_or(|v| !v.is_empty());
                check_bootstrap(s.b, boots)?;
                s.scenario
                    .spec()
                    .validate()
                    .map_err(|x| ConfigError::plain(x.to_string()))?;
                s.imputation.validate().map_err(|x| ConfigError::plain(x.to_string()))?;
            }
            Command::ReplicateTable(t) => {
                if t.reps == 0 {
                    return Err(ConfigError::plain("replicate_table.reps must be positive"));
                }
                let boots = t.bootstrap.as_ref().is_none_or(|v| !v.is_empty());
                check_bootstrap(t.b, boots)?;
                if t.n == Some(0) {
                    return Err(ConfigError::plain("replicate_table.n must be positive"));
                }
                t.imputation.validate().map_err(|x| ConfigError::plain(x.to_string()))?;
            }
        }
        Ok(())
    }
}
