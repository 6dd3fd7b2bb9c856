//! The three commands: estimation on a CSV file, one simulation study, and
//! the full scenario-by-arm comparison table.

use std::io::Write;
use std::path::{Path, PathBuf};

use tmle_mnar::data::{load_csv, CovariateOrder, ObservedDataset};
use tmle_mnar::estimators::{
    contrast, estimate, estimate_rows, ContrastKind, EstimateResult, EstimatorConfig, EstimatorKind, Minuend,
};
use tmle_mnar::inference::{bootstrap, bootstrap_statistic, if_se, InferenceResult, Z_975};
use tmle_mnar::mi::ImputationConfig;
use tmle_mnar::rng::derive_seed;
use tmle_mnar::simulate::{run_study, scenario_estimators, Arm, RosterEntry, Scenario, ScenarioSpec};

use crate::config::{Command, ConfigError, EstimateConfig, OutputFormat, RunConfig, SimulateConfig, TableConfig};
use crate::report::{json, EstimateReport, EstimateRow, SimulationOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(tmle_mnar::Error),
    #[error("estimation failed: {0}")]
    Estimation(tmle_mnar::Error),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 1,
            CliError::Data(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

fn estimation(e: tmle_mnar::Error) -> CliError {
    match e {
        tmle_mnar::Error::InvalidConfig(m) | tmle_mnar::Error::InvalidOrdering(m) => {
            CliError::Config(ConfigError { line: None, message: m })
        }
        other => CliError::Estimation(other),
    }
}

/// Rendered output files, by name.
pub type Outputs = Vec<(String, String)>;

fn render(
    stem: &str,
    formats: &[OutputFormat],
    text: impl Fn() -> String,
    csv: impl Fn() -> String,
    json: impl Fn() -> String,
) -> Outputs {
    formats
        .iter()
        .map(|f| match f {
            OutputFormat::TextTable => (format!("{stem}.txt"), text()),
            OutputFormat::Csv => (format!("{stem}.csv"), csv()),
            OutputFormat::Json => (format!("{stem}.json"), json()),
        })
        .collect()
}

/// Runs the configured command and returns the files to write.
pub fn run(cfg: &RunConfig) -> Result<Outputs, CliError> {
    match cfg.command() {
        Command::Estimate(e) => {
            let report = cmd_estimate(e, cfg.seed)?;
            Ok(render(
                "estimate",
                &cfg.formats,
                || report.text(),
                || report.csv(),
                || json(&report),
            ))
        }
        Command::Simulate(s) => {
            let out = cmd_simulate(s, cfg.seed)?;
            Ok(render(
                "simulation",
                &cfg.formats,
                || out.text(),
                || out.csv(),
                || json(&out),
            ))
        }
        Command::ReplicateTable(t) => {
            let out = cmd_replicate_table(t, cfg.seed)?;
            Ok(render(
                "table",
                &cfg.formats,
                || out.text(),
                || out.csv(),
                || json(&out),
            ))
        }
    }
}

/// Writes every file through a temporary sibling and an atomic rename.
pub fn write_outputs(dir: &Path, outputs: &Outputs) -> Result<(), CliError> {
    let err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Output { path, source }
    };
    std::fs::create_dir_all(dir).map_err(err(dir))?;
    let mut staged = Vec::new();
    for (name, body) in outputs {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err(dir))?;
        tmp.write_all(body.as_bytes()).map_err(err(tmp.path()))?;
        tmp.as_file().sync_all().map_err(err(tmp.path()))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(&path)
            .map_err(|e| CliError::Output { path, source: e.error })?;
    }
    Ok(())
}

fn target_label(kind: Option<ContrastKind>, a: f64) -> String {
    match kind {
        None => format!("E(Y^{a})"),
        Some(ContrastKind::Difference) => "E(Y^1) - E(Y^0)".into(),
        Some(ContrastKind::ObservedMinusCounterfactual) => "E(Y) - E(Y^0)".into(),
    }
}

fn weighted_outcome_mean(data: &ObservedDataset, w: &[f64]) -> f64 {
    let y = data.outcome();
    y.iter().zip(w).map(|(v, c)| v * c).sum::<f64>() / w.iter().sum::<f64>()
}

fn row(
    kind: EstimatorKind,
    target: String,
    value: f64,
    influence: &[f64],
    boot: Option<InferenceResult>,
    parts: &[&EstimateResult],
) -> EstimateRow {
    let if_se = if influence.is_empty() {
        None
    } else {
        if_se(influence).ok()
    };
    let (ci, method) = match (&boot, if_se) {
        (Some(b), _) => (Some((b.ci_low, b.ci_high)), "bootstrap_percentile"),
        (None, Some(se)) => (Some((value - Z_975 * se, value + Z_975 * se)), "if_variance"),
        (None, None) => (None, ""),
    };
    let mut warnings: Vec<String> = parts.iter().flat_map(|r| r.diagnostics.warnings.clone()).collect();
    warnings.sort();
    warnings.dedup();
    EstimateRow {
        estimator: kind.id().into(),
        target,
        estimate: value,
        if_se,
        bootstrap_se: boot.as_ref().map(|b| b.se),
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
        ci_method: method.into(),
        failed_resamples: boot.as_ref().map_or(0, |b| b.failed),
        floored: parts
            .iter()
            .filter_map(|r| r.diagnostics.positivity.as_ref())
            .map(|p| p.floored_total())
            .sum(),
        warnings,
    }
}

pub fn cmd_estimate(cfg: &EstimateConfig, seed: u64) -> Result<EstimateReport, CliError> {
    let data = load_csv(&cfg.input, &cfg.columns).map_err(CliError::Data)?;
    let data = match &cfg.scheme {
        Some(s) => s.apply(&data).map_err(CliError::Data)?,
        None => data,
    };
    let ordering = cfg
        .ordering
        .as_ref()
        .map(|names| CovariateOrder::from_names(names, data.schema()))
        .transpose()
        .map_err(estimation)?;
    let imputation = ImputationConfig {
        seed: derive_seed(seed, 0),
        ..cfg.imputation.clone()
    };
    let mut rows = Vec::new();
    for (j, &kind) in cfg.roster.iter().enumerate() {
        let make = |a: f64| {
            let mut c = EstimatorConfig::new(kind, cfg.specs.clone(), a).with_imputation(imputation.clone());
            c.p_floor = cfg.p_floor;
            if let Some(o) = &ordering {
                c = c.with_ordering(o.clone());
            }
            c
        };
        let boot_seed = derive_seed(seed, 1 + j as u64);
        match cfg.contrast {
            None => {
                let c = make(cfg.a);
                let r = estimate(&data, &c).map_err(estimation)?;
                let boot = if cfg.bootstrap > 0 {
                    Some(bootstrap(&data, &c, cfg.bootstrap, boot_seed).map_err(estimation)?)
                } else {
                    None
                };
                rows.push(row(
                    kind,
                    target_label(None, cfg.a),
                    r.psi_hat,
                    &r.influence_values,
                    boot,
                    &[&r],
                ));
            }
            Some(ck) => {
                let c0 = make(0.0);
                let c1 = make(1.0);
                let r0 = estimate(&data, &c0).map_err(estimation)?;
                let r1 = match ck {
                    ContrastKind::Difference => Some(estimate(&data, &c1).map_err(estimation)?),
                    ContrastKind::ObservedMinusCounterfactual => None,
                };
                let first = match &r1 {
                    Some(r) => Minuend::Estimate(r),
                    None => Minuend::ObservedMean(&data),
                };
                let con = contrast(first, &r0).map_err(estimation)?;
                let boot = if cfg.bootstrap > 0 {
                    let stat = |rows: &ObservedDataset, w: &[f64], s: u64| {
                        let p0 = estimate_rows(rows, w, &c0, s)?.psi;
                        let p1 = match ck {
                            ContrastKind::Difference => estimate_rows(rows, w, &c1, s)?.psi,
                            ContrastKind::ObservedMinusCounterfactual => weighted_outcome_mean(rows, w),
                        };
                        Ok(p1 - p0)
                    };
                    Some(bootstrap_statistic(&data, cfg.bootstrap, boot_seed, stat).map_err(estimation)?)
                } else {
                    None
                };
                let parts: Vec<&EstimateResult> = std::iter::once(&r0).chain(r1.as_ref()).collect();
                rows.push(row(
                    kind,
                    target_label(Some(ck), cfg.a),
                    con.value,
                    &con.influence_values,
                    boot,
                    &parts,
                ));
            }
        }
    }
    Ok(EstimateReport {
        input: cfg.input.display().to_string(),
        n: data.n(),
        seed,
        bootstrap: cfg.bootstrap,
        rows,
    })
}

fn roster(
    a: f64,
    arms: &[Arm],
    kinds: &[EstimatorKind],
    boot: &Option<Vec<EstimatorKind>>,
    imputation: &ImputationConfig,
) -> Vec<RosterEntry> {
    let mut out = Vec::new();
    for &arm in arms {
        for &kind in kinds {
            out.push(RosterEntry {
                label: kind.id().to_ascii_uppercase(),
                arm,
                config: EstimatorConfig::new(kind, arm.specs(), a).with_imputation(imputation.clone()),
                bootstrap: boot.as_ref().is_none_or(|b| b.contains(&kind)),
            });
        }
    }
    out
}

pub fn cmd_simulate(cfg: &SimulateConfig, seed: u64) -> Result<SimulationOutput, CliError> {
    let spec = cfg.scenario.spec();
    let kinds = cfg
        .estimators
        .clone()
        .unwrap_or_else(|| scenario_estimators(spec.scenario).to_vec());
    let entries = roster(spec.a, &cfg.arms, &kinds, &cfg.bootstrap, &cfg.imputation);
    let study = run_study(&spec, &entries, cfg.reps, cfg.b, seed).map_err(estimation)?;
    Ok(SimulationOutput { studies: vec![study] })
}

pub fn cmd_replicate_table(cfg: &TableConfig, seed: u64) -> Result<SimulationOutput, CliError> {
    let mut studies = Vec::new();
    for (k, scenario) in Scenario::ALL.into_iter().enumerate() {
        let mut spec = ScenarioSpec::default_for(scenario);
        if let Some(n) = cfg.n {
            spec.n = n;
        }
        let kinds = scenario_estimators(scenario);
        let entries = roster(spec.a, &Arm::ALL, &kinds, &cfg.bootstrap, &cfg.imputation);
        let study = run_study(&spec, &entries, cfg.reps, cfg.b, derive_seed(seed, k as u64)).map_err(estimation)?;
        studies.push(study);
    }
    Ok(SimulationOutput { studies })
}
