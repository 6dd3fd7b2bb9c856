//! Text, CSV and JSON renderings of estimation and simulation results.

use std::fmt::Write as _;

use serde::Serialize;
use tmle_mnar::simulate::{SimulationReport, Study};

/// One estimator's result on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRow {
    pub estimator: String,
    pub target: String,
    pub estimate: f64,
    pub if_se: Option<f64>,
    pub bootstrap_se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// `bootstrap_percentile`, `if_variance` or empty.
    pub ci_method: String,
    pub failed_resamples: usize,
    pub floored: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub input: String,
    pub n: usize,
    pub seed: u64,
    pub bootstrap: usize,
    pub rows: Vec<EstimateRow>,
}

fn x100(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{:.2}", 100.0 * v),
        _ => "-".into(),
    }
}

fn raw(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => String::new(),
    }
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

impl EstimateReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}  n={}  seed={}  b={}  (values x100)",
            self.input, self.n, self.seed, self.bootstrap
        );
        let _ = writeln!(
            s,
            "{:<8} {:<18} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
            "Method", "Target", "Estimate", "IF SE", "Boot SE", "CI low", "CI high", "Floored"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:<18} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
                r.estimator.to_ascii_uppercase(),
                r.target,
                x100(Some(r.estimate)),
                x100(r.if_se),
                x100(r.bootstrap_se),
                x100(r.ci_low),
                x100(r.ci_high),
                r.floored
            );
        }
        for r in self.rows.iter().filter(|r| !r.warnings.is_empty()) {
            for w in &r.warnings {
                let _ = writeln!(s, "warning ({}): {w}", r.estimator);
            }
        }
        s
    }

    pub fn csv(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.estimator.clone(),
                    r.target.clone(),
                    raw(Some(r.estimate)),
                    raw(r.if_se),
                    raw(r.bootstrap_se),
                    raw(r.ci_low),
                    raw(r.ci_high),
                    r.ci_method.clone(),
                    r.failed_resamples.to_string(),
                    r.floored.to_string(),
                ]
            })
            .collect();
        csv_string(
            &[
                "estimator",
                "target",
                "estimate",
                "if_se",
                "bootstrap_se",
                "ci_low",
                "ci_high",
                "ci_method",
                "failed_resamples",
                "floored",
            ],
            rows,
        )
    }
}

/// Studies rendered together, one block per scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub studies: Vec<Study>,
}

impl SimulationOutput {
    pub fn rows(&self) -> impl Iterator<Item = (&Study, &SimulationReport)> {
        self.studies.iter().flat_map(|s| s.reports.iter().map(move |r| (s, r)))
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for study in &self.studies {
            let _ = writeln!(
                s,
                "Scenario {}  n={}  reps={}  b={}  truth E(Y^{})={:.4}  (values x100)",
                study.spec.scenario.id(),
                study.spec.n,
                study.reps,
                study.b,
                study.spec.a,
                study.truth.psi
            );
            let _ = writeln!(
                s,
                "{:<4} {:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>5}",
                "Arm", "Method", "Bias", "SE", "Mean SE", "CP", "CP (IF)", "MCSE", "Fail"
            );
            for r in &study.reports {
                let _ = writeln!(
                    s,
                    "{:<4} {:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>5}",
                    r.arm.id(),
                    r.label,
                    x100(Some(r.bias)),
                    x100(Some(r.emp_se)),
                    x100(r.mean_se()),
                    x100(r.cp()),
                    x100(r.cp_if),
                    x100(Some(r.mcse_bias)),
                    r.failures
                );
            }
            s.push('\n');
        }
        s
    }

    pub fn csv(&self) -> String {
        let rows = self
            .rows()
            .map(|(s, r)| {
                vec![
                    s.spec.scenario.id().to_string(),
                    r.arm.id().to_string(),
                    r.estimator_id.clone(),
                    r.reps.to_string(),
                    r.failures.to_string(),
                    raw(Some(r.truth)),
                    raw(Some(r.bias)),
                    raw(Some(r.emp_se)),
                    raw(Some(r.mcse_bias)),
                    raw(r.mean_if_se),
                    raw(r.cp_if),
                    raw(r.mean_boot_se),
                    raw(r.cp_boot),
                    r.boot_failures.to_string(),
                ]
            })
            .collect();
        csv_string(
            &[
                "scenario",
                "arm",
                "estimator",
                "reps",
                "failures",
                "truth",
                "bias",
                "emp_se",
                "mcse_bias",
                "mean_if_se",
                "cp_if",
                "mean_boot_se",
                "cp_boot",
                "boot_failures",
            ],
            rows,
        )
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}
