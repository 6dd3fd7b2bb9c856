//! Replicated estimation under a scenario and the usual summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{covariate_missing_rates, generate, Scenario, ScenarioSpec};
use super::truth::{true_psi, Truth};
use crate::data::CovariateOrder;
use crate::error::{Error, Result};
use crate::estimators::{estimate_roster, EstimatorConfig, EstimatorKind};
use crate::inference::{bootstrap_rows_multi, if_se_rows, mean, sample_sd, Z_975};
use crate::nuisance::{ModelSpec, NuisanceSpecs};
use crate::rng::derive_seed;

/// Working-model arms: everything correct, a misspecified outcome chain, or
/// a misspecified exposure model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "i")]
    Correct,
    #[serde(rename = "ii")]
    OutcomeMisspecified,
    #[serde(rename = "iii")]
    ExposureMisspecified,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Correct, Arm::OutcomeMisspecified, Arm::ExposureMisspecified];

    pub fn id(self) -> &'static str {
        match self {
            Arm::Correct => "i",
            Arm::OutcomeMisspecified => "ii",
            Arm::ExposureMisspecified => "iii",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Arm::Correct => "all models correct",
            Arm::OutcomeMisspecified => "outcome models misspecified",
            Arm::ExposureMisspecified => "exposure model misspecified",
        }
    }

    /// Saturated models are correct for the binary scenario data. The
    /// misspecified models keep main effects of `l_o` only (plus the
    /// exposure in the outcome model).
    pub fn specs(self) -> NuisanceSpecs {
        let mut s = NuisanceSpecs::saturated();
        match self {
            Arm::Correct => {}
            Arm::OutcomeMisspecified => {
                s.outcome = ModelSpec::main_effects(&["l_o"]);
                s.outcome_chain = ModelSpec::main_effects(&["l_o"]);
            }
            Arm::ExposureMisspecified => s.exposure = ModelSpec::main_effects(&["l_o"]),
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RosterEntry {
    pub label: String,
    pub arm: Arm,
    pub config: EstimatorConfig,
    /// Percentile bootstrap interval per replication.
    pub bootstrap: bool,
}

/// Estimators compared under a scenario: complete cases, imputation, and
/// the plug-in, weighting and targeted estimators of the family matching
/// the scenario's missingness structure.
pub fn scenario_estimators(scenario: Scenario) -> [EstimatorKind; 5] {
    use EstimatorKind::*;
    match scenario {
        Scenario::Mar | Scenario::MnarA => [CompleteCase, MultipleImputation, IceA, IpwA, TmleA],
        Scenario::MnarB => [CompleteCase, MultipleImputation, IceB, IpwB, TmleB],
    }
}

/// All estimators of [`scenario_estimators`] under every arm, arm-major.
/// `bootstrap` selects the entries that get bootstrap intervals.
pub fn table_roster(scenario: Scenario, a: f64, bootstrap: impl Fn(Arm, EstimatorKind) -> bool) -> Vec<RosterEntry> {
    let mut out = Vec::new();
    for arm in Arm::ALL {
        for kind in scenario_estimators(scenario) {
            out.push(RosterEntry {
                label: kind.id().to_ascii_uppercase(),
                arm,
                config: EstimatorConfig::new(kind, arm.specs(), a),
                bootstrap: bootstrap(arm, kind),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub label: String,
    pub estimator_id: String,
    pub arm: Arm,
    /// Replications with an estimate.
    pub reps: usize,
    /// Replications where the estimator failed.
    pub failures: usize,
    pub truth: f64,
    pub bias: f64,
    pub emp_se: f64,
    pub mcse_bias: f64,
    pub mean_if_se: Option<f64>,
    /// Share of influence-function intervals covering the truth.
    pub cp_if: Option<f64>,
    pub mean_boot_se: Option<f64>,
    /// Share of bootstrap percentile intervals covering the truth.
    pub cp_boot: Option<f64>,
    /// Replications whose bootstrap was abandoned.
    pub boot_failures: usize,
}

impl SimulationReport {
    /// Headline coverage: bootstrap when available, else influence function.
    pub fn cp(&self) -> Option<f64> {
        self.cp_boot.or(self.cp_if)
    }

    /// Estimated standard error shown next to the empirical one.
    pub fn mean_se(&self) -> Option<f64> {
        self.mean_boot_se.or(self.mean_if_se)
    }
}

/// Bias, empirical SE and Monte Carlo SE of the bias.
pub fn summarize_estimates(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    let sd = sample_sd(estimates);
    (mean(estimates) - truth, sd, sd / (estimates.len() as f64).sqrt())
}

#[derive(Clone, Debug, Default)]
struct Interval {
    se: f64,
    low: f64,
    high: f64,
}

#[derive(Clone, Debug, Default)]
struct RepOutcome {
    psi: Vec<Option<f64>>,
    if_ci: Vec<Option<Interval>>,
    boot_ci: Vec<Option<Interval>>,
    boot_failed: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Study {
    pub spec: ScenarioSpec,
    pub truth: Truth,
    pub reps: usize,
    pub b: usize,
    pub seed: u64,
    pub reports: Vec<SimulationReport>,
    /// Point estimates by roster entry, then replication.
    #[serde(skip)]
    pub estimates: Vec<Vec<Option<f64>>>,
}

fn replicate(spec: &ScenarioSpec, roster: &[RosterEntry], b: usize, rep_seed: u64) -> Result<RepOutcome> {
    let data = generate(&spec.with_seed(derive_seed(rep_seed, 0)))?;
    let c = data.compress();
    let configs: Vec<&EstimatorConfig> = roster.iter().map(|e| &e.config).collect();
    let point = estimate_roster(&c.data, &c.counts, &configs, derive_seed(rep_seed, 1));
    let mut out = RepOutcome::default();
    for r in &point {
        match r {
            Ok(est) => {
                out.psi.push(Some(est.psi));
                out.if_ci
                    .push(if_se_rows(&est.influence, &c.counts).ok().map(|se| Interval {
                        se,
                        low: est.psi - Z_975 * se,
                        high: est.psi + Z_975 * se,
                    }));
            }
            Err(_) => {
                out.psi.push(None);
                out.if_ci.push(None);
            }
        }
    }
    out.boot_ci = vec![None; roster.len()];
    out.boot_failed = vec![false; roster.len()];
    let boot: Vec<usize> = (0..roster.len()).filter(|&j| roster[j].bootstrap).collect();
    if !boot.is_empty() {
        let boot_cfgs: Vec<&EstimatorConfig> = boot.iter().map(|&j| &roster[j].config).collect();
        let reps = bootstrap_rows_multi(
            &c.unit_rows,
            c.data.n(),
            b,
            derive_seed(rep_seed, 2),
            boot.len(),
            |w, s| {
                estimate_roster(&c.data, w, &boot_cfgs, s)
                    .into_iter()
                    .map(|r| r.ok().map(|e| e.psi))
                    .collect()
            },
        );
        for (slot, &j) in boot.iter().enumerate() {
            match reps[slot].percentile_interval(0) {
                Ok(ci) => {
                    out.boot_ci[j] = Some(Interval {
                        se: ci.se,
                        low: ci.ci_low,
                        high: ci.ci_high,
                    })
                }
                Err(_) => out.boot_failed[j] = true,
            }
        }
    }
    Ok(out)
}

fn coverage(cis: &[&Interval], truth: f64) -> (Option<f64>, Option<f64>) {
    if cis.is_empty() {
        return (None, None);
    }
    let n = cis.len() as f64;
    let covered = cis.iter().filter(|ci| ci.low <= truth && truth <= ci.high).count();
    (
        Some(cis.iter().map(|ci| ci.se).sum::<f64>() / n),
        Some(covered as f64 / n),
    )
}

/// Runs `reps` replications of every roster entry. Replication `r` draws its
/// data, imputations and resamples from seeds derived from `(seed, r)`, so
/// the output does not depend on the thread count.
pub fn run_study(spec: &ScenarioSpec, roster: &[RosterEntry], reps: usize, b: usize, seed: u64) -> Result<Study> {
    if reps == 0 {
        return Err(Error::InvalidConfig("a study needs at least one replication".into()));
    }
    if roster.is_empty() {
        return Err(Error::InvalidConfig("the estimator roster is empty".into()));
    }
    if roster.iter().any(|e| e.bootstrap) && b < 100 {
        return Err(Error::InvalidConfig(format!("bootstrap needs b >= 100, got {b}")));
    }
    spec.validate()?;
    let truth = true_psi(spec)?;
    let outcomes: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .map(|r| replicate(spec, roster, b, derive_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut estimates = Vec::new();
    for (j, entry) in roster.iter().enumerate() {
        let psi: Vec<Option<f64>> = outcomes.iter().map(|o| o.psi[j]).collect();
        let ok: Vec<f64> = psi.iter().flatten().copied().collect();
        let (bias, emp_se, mcse_bias) = if ok.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            summarize_estimates(&ok, truth.psi)
        };
        let if_cis: Vec<&Interval> = outcomes.iter().filter_map(|o| o.if_ci[j].as_ref()).collect();
        let boot_cis: Vec<&Interval> = outcomes.iter().filter_map(|o| o.boot_ci[j].as_ref()).collect();
        let (mean_if_se, cp_if) = coverage(&if_cis, truth.psi);
        let (mean_boot_se, cp_boot) = coverage(&boot_cis, truth.psi);
        reports.push(SimulationReport {
            label: entry.label.clone(),
            estimator_id: entry.config.kind.id().into(),
            arm: entry.arm,
            reps: ok.len(),
            failures: reps - ok.len(),
            truth: truth.psi,
            bias,
            emp_se,
            mcse_bias,
            mean_if_se,
            cp_if,
            mean_boot_se,
            cp_boot,
            boot_failures: outcomes.iter().filter(|o| o.boot_failed[j]).count(),
        });
        estimates.push(psi);
    }
    Ok(Study {
        spec: spec.clone(),
        truth,
        reps,
        b,
        seed,
        reports,
        estimates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingReport {
    /// Share of units missing each covariate.
    pub missing_rates: Vec<f64>,
    /// Covariates from least to most often missing.
    pub increasing: Vec<usize>,
    pub increasing_report: SimulationReport,
    pub decreasing_report: SimulationReport,
    /// Empirical SE under the increasing ordering over that under the
    /// decreasing one.
    pub se_ratio: f64,
}

/// Sequential TMLE under the covariate ordering of increasing missingness
/// and its reverse, with correct working models.
pub fn ordering_experiment(spec: &ScenarioSpec, reps: usize, seed: u64) -> Result<OrderingReport> {
    if spec.scenario != Scenario::MnarB {
        return Err(Error::InvalidConfig(
            "the ordering experiment needs sequential covariate missingness".into(),
        ));
    }
    let mut big = spec.clone();
    big.n = 200_000;
    let rates = covariate_missing_rates(&generate(&big)?);
    let mut increasing: Vec<usize> = (0..rates.len()).collect();
    increasing.sort_by(|&i, &j| rates[i].total_cmp(&rates[j]).then(i.cmp(&j)));
    let decreasing: Vec<usize> = increasing.iter().rev().copied().collect();
    let q = rates.len();
    let entry = |label: &str, order: &[usize]| -> Result<RosterEntry> {
        Ok(RosterEntry {
            label: label.into(),
            arm: Arm::Correct,
            config: EstimatorConfig::new(EstimatorKind::TmleB, Arm::Correct.specs(), spec.a)
                .with_ordering(CovariateOrder::new(order.to_vec(), q)?),
            bootstrap: false,
        })
    };
    let roster = vec![entry("increasing", &increasing)?, entry("decreasing", &decreasing)?];
    let study = run_study(spec, &roster, reps, 0, seed)?;
    let [inc, dec]: [SimulationReport; 2] = study.reports.try_into().expect("two roster entries");
    Ok(OrderingReport {
        missing_rates: rates,
        increasing,
        se_ratio: inc.emp_se / dec.emp_se,
        increasing_report: inc,
        decreasing_report: dec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries_by_hand() {
        let (bias, se, mcse) = summarize_estimates(&[0.30, 0.28, 0.29], 0.288);
        assert!((bias - 0.002).abs() < 1e-12);
        assert!((se - 0.01).abs() < 1e-12);
        assert!((mcse - 0.01 / 3f64.sqrt()).abs() < 1e-12);
        assert!((mcse - 0.00577).abs() < 1e-5);
    }

    #[test]
    fn roster_shape() {
        let r = table_roster(Scenario::MnarB, 1.0, |_, _| false);
        assert_eq!(r.len(), 15);
        assert_eq!(r[4].label, "TMLE-B");
        assert_eq!(r[5].arm, Arm::OutcomeMisspecified);
    }
}
