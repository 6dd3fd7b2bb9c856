//! Regression checks that a scenario's missingness respects the
//! conditional independences its estimators rely on.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::scenario::{Sampler, Scenario, ScenarioSpec, Var, VARS};
use crate::error::{Error, Result};
use crate::glm::{expit, fit_glm, Link, Matrix};

/// One conditional-independence check: `response ⟂ forbidden | given`.
#[derive(Clone, Debug)]
struct Check {
    name: &'static str,
    response: Var,
    given: &'static [Var],
    forbidden: &'static [Var],
}

use Var::*;

fn checks(scenario: Scenario) -> Vec<Check> {
    let exposure = Check {
        name: "r_a independent of y given a, l",
        response: RA,
        given: &[A, LO, LM1, LM2],
        forbidden: &[Y],
    };
    match scenario {
        Scenario::Mar => vec![Check {
            name: "r independent of a, l_m given y, l_o",
            response: RA,
            given: &[Y, LO],
            forbidden: &[A, LM1, LM2],
        }],
        Scenario::MnarA => vec![
            exposure,
            Check {
                name: "r_l independent of y given a, l, r_a",
                response: RL1,
                given: &[A, LO, LM1, LM2, RA],
                forbidden: &[Y],
            },
            Check {
                name: "r_l independent of l_m given l_o",
                response: RL1,
                given: &[LO],
                forbidden: &[LM1, LM2],
            },
        ],
        Scenario::MnarB => vec![
            exposure,
            Check {
                name: "r_l1 independent of y given a, l, r_a",
                response: RL1,
                given: &[A, LO, LM1, LM2, RA],
                forbidden: &[Y],
            },
            Check {
                name: "r_l2 independent of y given a, l, r_a, r_l1",
                response: RL2,
                given: &[A, LO, LM1, LM2, RA, RL1],
                forbidden: &[Y],
            },
            Check {
                name: "r_l1 independent of l_m given l_o",
                response: RL1,
                given: &[LO],
                forbidden: &[LM1, LM2],
            },
            Check {
                name: "r_l2 independent of l_m2 given r_l1, l_m1, l_o",
                response: RL2,
                given: &[RL1, LM1, LO],
                forbidden: &[LM2],
            },
        ],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditResult {
    pub check: String,
    pub variable: String,
    pub coefficient: f64,
    pub se: f64,
}

impl AuditResult {
    pub fn z(&self) -> f64 {
        self.coefficient / self.se
    }

    /// Coefficient within three standard errors of zero.
    pub fn passes(&self) -> bool {
        self.z().abs() < 3.0
    }
}

fn var_name(v: Var) -> &'static str {
    match v {
        A => "a",
        Y => "y",
        LM1 => "l_m1",
        LM2 => "l_m2",
        _ => "other",
    }
}

/// Fits a logistic model of the indicator on a saturated function of the
/// conditioning variables plus main effects of the forbidden ones, on
/// `draws` full units, and reports each forbidden coefficient with its
/// inverse-information standard error.
pub fn audit_assumptions(spec: &ScenarioSpec, draws: usize, seed: u64) -> Result<Vec<AuditResult>> {
    let sampler = Sampler::new(spec)?;
    let units = sampler.units(draws, seed);
    let mut out = Vec::new();
    for check in checks(spec.scenario) {
        out.extend(run_check(&check, &units)?);
    }
    Ok(out)
}

fn bits(v: &[f64; VARS], vars: &[Var]) -> Vec<u8> {
    vars.iter().map(|x| v[*x as usize] as u8).collect()
}

fn run_check(check: &Check, units: &[[f64; VARS]]) -> Result<Vec<AuditResult>> {
    // (cell, forbidden values, response) -> count
    let mut counts: BTreeMap<(Vec<u8>, Vec<u8>, u8), f64> = BTreeMap::new();
    let mut cell_responses: BTreeMap<Vec<u8>, [bool; 2]> = BTreeMap::new();
    for v in units {
        let cell = bits(v, check.given);
        let r = v[check.response as usize] as u8;
        cell_responses.entry(cell.clone()).or_default()[r as usize] = true;
        *counts.entry((cell, bits(v, check.forbidden), r)).or_default() += 1.0;
    }
    // cells where the indicator never varies carry no information
    let cells: BTreeMap<&Vec<u8>, usize> = cell_responses
        .iter()
        .filter(|(_, seen)| seen[0] && seen[1])
        .map(|(c, _)| c)
        .enumerate()
        .map(|(j, c)| (c, j))
        .collect();
    let k = cells.len();
    let p = k + check.forbidden.len();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for ((cell, forb, r), c) in &counts {
        let Some(&j) = cells.get(cell) else { continue };
        let mut row = vec![0.0; p];
        row[j] = 1.0;
        for (f, x) in forb.iter().enumerate() {
            row[k + f] = f64::from(*x);
        }
        rows.push(row);
        y.push(f64::from(*r));
        w.push(*c);
    }
    if rows.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "audit `{}` has no informative cells",
            check.name
        )));
    }
    let design = Matrix::from_rows(&rows)?;
    let fit = fit_glm(&design, &y, &w, None, Link::Logit)?;
    let mut info = DMatrix::<f64>::zeros(p, p);
    for (i, row) in rows.iter().enumerate() {
        let eta: f64 = row.iter().zip(&fit.coefficients).map(|(x, b)| x * b).sum();
        let mu = expit(eta);
        let wi = w[i] * mu * (1.0 - mu);
        for a in 0..p {
            for b in 0..p {
                info[(a, b)] += wi * row[a] * row[b];
            }
        }
    }
    let cov = info.try_inverse().ok_or(Error::SingularDesign)?;
    Ok(check
        .forbidden
        .iter()
        .enumerate()
        .map(|(f, v)| AuditResult {
            check: check.name.into(),
            variable: var_name(*v).into(),
            coefficient: fit.coefficients[k + f],
            se: cov[(k + f, k + f)].sqrt(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_violation_is_detected() {
        // exposure indicator driven by the outcome breaks the first check
        let mut spec = ScenarioSpec::default_for(Scenario::MnarA);
        spec.missingness.get_mut("r_a").unwrap().insert("a".into(), 0.0);
        let sampler = Sampler::new(&spec).unwrap();
        let mut units = sampler.units(50_000, 3);
        for (i, v) in units.iter_mut().enumerate() {
            if v[Y as usize] == 1.0 && i % 3 == 0 {
                v[RA as usize] = 0.0;
            }
        }
        let res = run_check(&checks(Scenario::MnarA)[0], &units).unwrap();
        assert!(res[0].coefficient < 0.0);
        assert!(!res[0].passes(), "{res:?}");
    }
}
