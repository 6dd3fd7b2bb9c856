//! Structural equations for the three missingness scenarios.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ObservedDataset, PartialVariable, Schema};
use crate::error::{Error, Result};
use crate::glm::expit;
use crate::rng;

/// Units drawn per RNG stream.
pub(crate) const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// Joint missingness of exposure and covariates, driven by observed data.
    #[serde(rename = "I_MAR")]
    Mar,
    /// Exposure missingness may depend on the exposure; one covariate block.
    #[serde(rename = "II_MNAR_A")]
    MnarA,
    /// As above with one missingness indicator per covariate.
    #[serde(rename = "III_MNAR_B")]
    MnarB,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Mar, Scenario::MnarA, Scenario::MnarB];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Mar => "I",
            Scenario::MnarA => "II",
            Scenario::MnarB => "III",
        }
    }

    fn missingness_equations(self) -> &'static [(&'static str, &'static [&'static str])] {
        match self {
            Scenario::Mar => &[("r", &["intercept", "l_o", "y"])],
            Scenario::MnarA => &[
                ("r_l", &["intercept", "l_o", "u_a"]),
                ("r_a", &["intercept", "l_o", "l_m1", "l_m2", "a", "r_l", "u_a"]),
            ],
            Scenario::MnarB => &[
                ("r_l1", &["intercept", "l_o", "u_a"]),
                ("r_l2", &["intercept", "l_o", "l_m1", "r_l1", "u_a"]),
                ("r_a", &["intercept", "l_o", "l_m1", "l_m2", "a", "r_l1", "r_l2", "u_a"]),
            ],
        }
    }
}

const STRUCTURAL: [(&str, &[&str]); 5] = [
    ("l_o", &["intercept", "u1", "u3"]),
    ("l_m1", &["intercept", "l_o", "u1", "u2"]),
    ("l_m2", &["intercept", "l_o", "l_m1", "u1", "u2"]),
    ("a", &["intercept", "l_o", "l_m1", "l_m2", "u_a"]),
    ("y", &["intercept", "a", "l_o", "l_m1", "l_m2", "u2", "u3"]),
];

/// Coefficients of one logistic equation, keyed by term name.
pub type Equation = BTreeMap<String, f64>;

/// Declarative data-generating process. Every variable is Bernoulli with a
/// logit linear in the listed terms; `u1`, `u2`, `u3` and `u_a` are
/// independent standard normal latents. Missingness equations give the
/// probability that the variable is observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    /// Exposure level of the target `E(Y^a)`.
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub seed: u64,
    /// Intended share of units with at least one missing value.
    pub target_missingness: f64,
    pub structural: BTreeMap<String, Equation>,
    pub missingness: BTreeMap<String, Equation>,
}

fn one() -> f64 {
    1.0
}

fn equation(terms: &[(&str, f64)]) -> Equation {
    terms.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn default_structural() -> BTreeMap<String, Equation> {
    [
        ("l_o", equation(&[("intercept", 0.0), ("u1", 0.8), ("u3", 0.8)])),
        (
            "l_m1",
            equation(&[("intercept", -0.3), ("l_o", 0.8), ("u1", 0.8), ("u2", 0.8)]),
        ),
        (
            "l_m2",
            equation(&[
                ("intercept", -0.2),
                ("l_o", 0.5),
                ("l_m1", 0.6),
                ("u1", 0.8),
                ("u2", 0.8),
            ]),
        ),
        (
            "a",
            equation(&[
                ("intercept", -1.8),
                ("l_o", 0.6),
                ("l_m1", 1.0),
                ("l_m2", 0.8),
                ("u_a", 0.8),
            ]),
        ),
        (
            "y",
            equation(&[
                ("intercept", -2.7),
                ("a", 0.7),
                ("l_o", 0.8),
                ("l_m1", 0.8),
                ("l_m2", 0.6),
                ("u2", 0.6),
                ("u3", 0.6),
            ]),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl ScenarioSpec {
    /// Calibrated defaults: about a quarter of units incomplete, `E(Y^1)`
    /// between 0.2 and 0.4.
    pub fn default_for(scenario: Scenario) -> Self {
        let missingness: Vec<(&str, Equation)> = match scenario {
            Scenario::Mar => vec![("r", equation(&[("intercept", 1.6), ("l_o", -1.2)]))],
            Scenario::MnarA => vec![
                ("r_l", equation(&[("intercept", 3.0), ("l_o", -1.0), ("u_a", -0.8)])),
                (
                    "r_a",
                    equation(&[
                        ("intercept", 2.9),
                        ("l_o", -0.4),
                        ("l_m1", 0.4),
                        ("l_m2", -0.4),
                        ("a", -1.5),
                        ("u_a", 0.8),
                    ]),
                ),
            ],
            Scenario::MnarB => vec![
                ("r_l1", equation(&[("intercept", 3.6), ("l_o", -1.0), ("u_a", -0.8)])),
                (
                    "r_l2",
                    equation(&[("intercept", 3.4), ("l_o", -0.6), ("l_m1", -1.0), ("u_a", -0.8)]),
                ),
                (
                    "r_a",
                    equation(&[
                        ("intercept", 3.2),
                        ("l_o", -0.4),
                        ("l_m1", 0.4),
                        ("l_m2", -0.4),
                        ("a", -1.5),
                        ("u_a", 0.8),
                    ]),
                ),
            ],
        };
        Self {
            scenario,
            n: 2500,
            a: 1.0,
            seed: 20240601,
            target_missingness: 0.25,
            structural: default_structural(),
            missingness: missingness.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    /// Sequential-missingness variant in which neither covariate affects the
    /// other's indicator, so any ordering of the two is valid. With
    /// `symmetric` both covariates are missing about equally often;
    /// otherwise `l_m1` is rarely missing and `l_m2` often.
    pub fn ordering_variant(symmetric: bool) -> Self {
        let mut spec = Self::default_for(Scenario::MnarB);
        let (c1, c2) = if symmetric { (2.0, 2.0) } else { (3.6, 1.1) };
        spec.missingness
            .insert("r_l1".into(), equation(&[("intercept", c1), ("l_o", -0.5)]));
        spec.missingness
            .insert("r_l2".into(), equation(&[("intercept", c2), ("l_o", -0.5)]));
        spec.missingness.insert(
            "r_a".into(),
            equation(&[("intercept", 3.5), ("l_m1", 0.4), ("a", -1.5), ("u_a", 0.8)]),
        );
        spec.target_missingness = if symmetric { 0.30 } else { 0.35 };
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 {
            return bad("scenario n must be positive".into());
        }
        if self.a != 0.0 && self.a != 1.0 {
            return bad(format!("exposure level must be 0 or 1, got {}", self.a));
        }
        if !(self.target_missingness > 0.0 && self.target_missingness < 1.0) {
            return bad("target_missingness must lie in (0, 1)".into());
        }
        check_equations("structural", &self.structural, &STRUCTURAL)?;
        check_equations("missingness", &self.missingness, self.scenario.missingness_equations())
    }

    /// Same process with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn check_equations(kind: &str, given: &BTreeMap<String, Equation>, expected: &[(&str, &[&str])]) -> Result<()> {
    for name in given.keys() {
        if !expected.iter().any(|(e, _)| e == name) {
            return Err(Error::InvalidConfig(format!("unknown {kind} equation `{name}`")));
        }
    }
    for (name, allowed) in expected {
        let Some(eq) = given.get(*name) else {
            return Err(Error::InvalidConfig(format!("missing {kind} equation `{name}`")));
        };
        for (term, value) in eq {
            if !allowed.contains(&term.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "term `{term}` is not allowed in equation `{name}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
            if value.is_nan() || (value.is_infinite() && term != "intercept") {
                return Err(Error::InvalidConfig(format!(
                    "coefficient `{name}.{term}` must be finite"
                )));
            }
        }
    }
    Ok(())
}

/// Indices into a unit's value array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub(crate) enum Var {
    One,
    U1,
    U2,
    U3,
    UA,
    LO,
    LM1,
    LM2,
    A,
    Y,
    RL1,
    RL2,
    RA,
}

pub(crate) const VARS: usize = 13;

impl Var {
    fn from_term(term: &str) -> Var {
        match term {
            "intercept" => Var::One,
            "u1" => Var::U1,
            "u2" => Var::U2,
            "u3" => Var::U3,
            "u_a" => Var::UA,
            "l_o" => Var::LO,
            "l_m1" => Var::LM1,
            "l_m2" => Var::LM2,
            "a" => Var::A,
            "y" => Var::Y,
            // the single covariate indicator of Scenario II is stored as r_l1
            "r_l" | "r_l1" => Var::RL1,
            "r_l2" => Var::RL2,
            other => unreachable!("unvalidated term {other}"),
        }
    }
}

/// Equation as (variable index, coefficient) pairs.
#[derive(Clone, Debug)]
struct Linear(Vec<(usize, f64)>);

impl Linear {
    fn compile(eq: Option<&Equation>) -> Self {
        Linear(
            eq.into_iter()
                .flatten()
                .filter(|(_, c)| **c != 0.0)
                .map(|(t, c)| (Var::from_term(t) as usize, *c))
                .collect(),
        )
    }

    fn prob(&self, v: &[f64; VARS]) -> f64 {
        // zero values are skipped so that infinite coefficients stay meaningful
        let eta: f64 = self
            .0
            .iter()
            .filter(|(i, _)| v[*i] != 0.0)
            .map(|(i, c)| c * v[*i])
            .sum();
        expit(eta)
    }
}

/// Compiled scenario ready for sampling.
#[derive(Clone, Debug)]
pub(crate) struct Sampler {
    scenario: Scenario,
    structural: [Linear; 5],
    r: Vec<(Var, Linear)>,
}

fn bernoulli(rng: &mut impl Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

impl Sampler {
    pub(crate) fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let s = |name: &str| Linear::compile(spec.structural.get(name));
        let r = spec
            .scenario
            .missingness_equations()
            .iter()
            .map(|(name, _)| {
                let var = match *name {
                    "r" | "r_a" => Var::RA,
                    "r_l" | "r_l1" => Var::RL1,
                    _ => Var::RL2,
                };
                (var, Linear::compile(spec.missingness.get(*name)))
            })
            .collect();
        Ok(Self {
            scenario: spec.scenario,
            structural: [s("l_o"), s("l_m1"), s("l_m2"), s("a"), s("y")],
            r,
        })
    }

    /// Latents and covariates.
    pub(crate) fn covariates(&self, rng: &mut impl Rng, v: &mut [f64; VARS]) {
        v[Var::One as usize] = 1.0;
        for u in [Var::U1, Var::U2, Var::U3, Var::UA] {
            v[u as usize] = rng.sample(StandardNormal);
        }
        v[Var::LO as usize] = bernoulli(rng, self.structural[0].prob(v));
        v[Var::LM1 as usize] = bernoulli(rng, self.structural[1].prob(v));
        v[Var::LM2 as usize] = bernoulli(rng, self.structural[2].prob(v));
    }

    /// Outcome probability at the current values.
    pub(crate) fn outcome_prob(&self, v: &[f64; VARS]) -> f64 {
        self.structural[4].prob(v)
    }

    pub(crate) fn unit(&self, rng: &mut impl Rng) -> [f64; VARS] {
        let mut v = [0.0; VARS];
        self.covariates(rng, &mut v);
        v[Var::A as usize] = bernoulli(rng, self.structural[3].prob(&v));
        v[Var::Y as usize] = bernoulli(rng, self.outcome_prob(&v));
        for (var, eq) in &self.r {
            v[*var as usize] = bernoulli(rng, eq.prob(&v));
        }
        match self.scenario {
            Scenario::Mar => {
                v[Var::RL1 as usize] = v[Var::RA as usize];
                v[Var::RL2 as usize] = v[Var::RA as usize];
            }
            Scenario::MnarA => v[Var::RL2 as usize] = v[Var::RL1 as usize],
            Scenario::MnarB => {}
        }
        v
    }

    /// `n` full units; chunk `c` uses stream `(seed, c)`.
    pub(crate) fn units(&self, n: usize, seed: u64) -> Vec<[f64; VARS]> {
        let chunks = n.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = rng::stream(seed, c as u64);
                let len = CHUNK.min(n - c * CHUNK);
                (0..len).map(move |_| self.unit(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }
}

pub fn scenario_schema() -> Schema {
    Schema {
        outcome: "y".into(),
        exposure: "a".into(),
        observed: vec!["l_o".into()],
        partial: vec![PartialVariable::single("l_m1"), PartialVariable::single("l_m2")],
    }
}

pub(crate) fn mask(units: &[[f64; VARS]]) -> Result<ObservedDataset> {
    let get = |v: &[f64; VARS], x: Var| v[x as usize];
    let observed = |v: &[f64; VARS], x: Var, r: Var| (get(v, r) == 1.0).then_some(get(v, x));
    ObservedDataset::new(
        scenario_schema(),
        units.iter().map(|v| get(v, Var::Y)).collect(),
        units.iter().map(|v| observed(v, Var::A, Var::RA)).collect(),
        vec![units.iter().map(|v| get(v, Var::LO)).collect()],
        vec![
            units.iter().map(|v| observed(v, Var::LM1, Var::RL1)).collect(),
            units.iter().map(|v| observed(v, Var::LM2, Var::RL2)).collect(),
        ],
    )
}

/// Draws `spec.n` units and masks them per the missingness equations.
pub fn generate(spec: &ScenarioSpec) -> Result<ObservedDataset> {
    let sampler = Sampler::new(spec)?;
    mask(&sampler.units(spec.n, spec.seed))
}

/// Draws units without masking; columns are `l_o, l_m1, l_m2, a, y` with no
/// missing values.
pub fn generate_full(spec: &ScenarioSpec) -> Result<ObservedDataset> {
    let sampler = Sampler::new(spec)?;
    let mut units = sampler.units(spec.n, spec.seed);
    for v in &mut units {
        for r in [Var::RA, Var::RL1, Var::RL2] {
            v[r as usize] = 1.0;
        }
    }
    mask(&units)
}

/// Share of units with the exposure or any covariate missing.
pub fn missingness_fraction(data: &ObservedDataset) -> f64 {
    let incomplete = (0..data.n()).filter(|&i| !data.unit_complete(i)).count();
    incomplete as f64 / data.n() as f64
}

/// Share of units missing each partially observed covariate.
pub fn covariate_missing_rates(data: &ObservedDataset) -> Vec<f64> {
    (0..data.q())
        .map(|k| {
            let miss = (0..data.n()).filter(|&i| !data.variable_observed(k, i)).count();
            miss as f64 / data.n() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for s in Scenario::ALL {
            ScenarioSpec::default_for(s).validate().unwrap();
        }
        ScenarioSpec::ordering_variant(true).validate().unwrap();
        ScenarioSpec::ordering_variant(false).validate().unwrap();
    }

    #[test]
    fn forbidden_terms_are_rejected() {
        let mut spec = ScenarioSpec::default_for(Scenario::MnarA);
        spec.missingness.get_mut("r_a").unwrap().insert("y".into(), 0.5);
        assert!(matches!(spec.validate(), Err(Error::InvalidConfig(_))));
        let mut spec = ScenarioSpec::default_for(Scenario::MnarA);
        spec.missingness.get_mut("r_l").unwrap().insert("l_m1".into(), 0.5);
        assert!(spec.validate().is_err());
        let mut spec = ScenarioSpec::default_for(Scenario::Mar);
        spec.missingness.insert("r_a".into(), Equation::new());
        assert!(spec.validate().is_err());
    }

    #[test]
    fn chunks_are_independent_of_threads() {
        let spec = ScenarioSpec::default_for(Scenario::MnarB).with_seed(5);
        let sampler = Sampler::new(&spec).unwrap();
        let a = sampler.units(10_000, 5);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sampler.units(10_000, 5));
        assert_eq!(a, b);
    }
}
