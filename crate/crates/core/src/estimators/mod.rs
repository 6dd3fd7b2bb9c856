//! Estimators of the mean counterfactual outcome `E(Y^a)`.
//!
//! Every estimator runs on distinct rows with frequency weights. The public
//! functions compress the units, estimate, and map per-row influence values
//! back to units. Resampling reuses the row form with new multiplicities.

mod chain;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use chain::Mode;
pub use chain::RowEstimate;

use crate::data::{CovariateOrder, ObservedDataset};
use crate::error::{Error, Result};
use crate::mi::{impute_rows, ImputationConfig};
use crate::nuisance::{
    fit_nuisances, sequential_blocks, single_block, NuisanceSet, NuisanceSpecs, PositivityReport, P_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "cc")]
    CompleteCase,
    #[serde(rename = "mi")]
    MultipleImputation,
    #[serde(rename = "ice-a")]
    IceA,
    #[serde(rename = "ice-b")]
    IceB,
    #[serde(rename = "ipw-a")]
    IpwA,
    #[serde(rename = "ipw-b")]
    IpwB,
    #[serde(rename = "tmle-a")]
    TmleA,
    #[serde(rename = "tmle-b")]
    TmleB,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::CompleteCase,
        EstimatorKind::MultipleImputation,
        EstimatorKind::IceA,
        EstimatorKind::IceB,
        EstimatorKind::IpwA,
        EstimatorKind::IpwB,
        EstimatorKind::TmleA,
        EstimatorKind::TmleB,
    ];

    pub fn id(self) -> &'static str {
        match self {
            EstimatorKind::CompleteCase => "cc",
            EstimatorKind::MultipleImputation => "mi",
            EstimatorKind::IceA => "ice-a",
            EstimatorKind::IceB => "ice-b",
            EstimatorKind::IpwA => "ipw-a",
            EstimatorKind::IpwB => "ipw-b",
            EstimatorKind::TmleA => "tmle-a",
            EstimatorKind::TmleB => "tmle-b",
        }
    }

    /// Whether an influence function is available for this estimator.
    pub fn has_influence(self) -> bool {
        matches!(
            self,
            EstimatorKind::CompleteCase | EstimatorKind::TmleA | EstimatorKind::TmleB
        )
    }

    fn sequential(self) -> bool {
        matches!(self, EstimatorKind::IceB | EstimatorKind::IpwB | EstimatorKind::TmleB)
    }

    fn mode(self) -> Mode {
        match self {
            EstimatorKind::IceA | EstimatorKind::IceB => Mode::Ice,
            EstimatorKind::IpwA | EstimatorKind::IpwB => Mode::Ipw,
            _ => Mode::Tmle,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.id() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

/// Everything that determines an estimate apart from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub specs: NuisanceSpecs,
    /// Exposure level `a` of `E(Y^a)`.
    pub a: f64,
    /// Covariate ordering for the sequential estimators; identity when unset.
    pub ordering: Option<CovariateOrder>,
    pub imputation: ImputationConfig,
    pub p_floor: f64,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, specs: NuisanceSpecs, a: f64) -> Self {
        Self {
            kind,
            specs,
            a,
            ordering: None,
            imputation: ImputationConfig::default(),
            p_floor: P_FLOOR,
        }
    }

    pub fn with_ordering(mut self, ordering: CovariateOrder) -> Self {
        self.ordering = Some(ordering);
        self
    }

    pub fn with_imputation(mut self, imputation: ImputationConfig) -> Self {
        self.imputation = imputation;
        self
    }

    fn blocks(&self, q: usize) -> Result<Vec<Vec<usize>>> {
        if self.kind.sequential() {
            let ordering = match &self.ordering {
                Some(o) => {
                    if o.len() != q {
                        return Err(Error::InvalidOrdering(format!(
                            "ordering has {} entries but there are {q} partially observed variables",
                            o.len()
                        )));
                    }
                    o.clone()
                }
                None => CovariateOrder::identity(q),
            };
            Ok(sequential_blocks(&ordering))
        } else {
            Ok(single_block(q))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumCount {
    pub name: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub positivity: Option<PositivityReport>,
    pub strata: Vec<StratumCount>,
    /// Empirical means of the weighted-residual terms solved by targeting.
    pub score_terms: Vec<f64>,
    pub warnings: Vec<String>,
    /// False when a fluctuation hit its bound.
    pub converged: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            positivity: None,
            strata: Vec::new(),
            score_terms: Vec::new(),
            warnings: Vec::new(),
            converged: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub a: f64,
    pub psi_hat: f64,
    /// Number of units the estimate was computed from.
    pub n: usize,
    /// Per-unit influence values; empty when not available.
    pub influence_values: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn require_complete(data: &ObservedDataset, w: &[f64]) -> Result<()> {
    match (0..data.n()).find(|&i| w[i] > 0.0 && !data.unit_complete(i)) {
        Some(i) => Err(Error::InvalidDataset(format!(
            "complete-data estimator given an incomplete unit (row {i})"
        ))),
        None => Ok(()),
    }
}

fn complete_data_rows(
    data: &ObservedDataset,
    w: &[f64],
    specs: &NuisanceSpecs,
    a: f64,
    p_floor: f64,
) -> Result<RowEstimate> {
    require_complete(data, w)?;
    let ns = fit_nuisances(data, w, specs, a, &[], false, p_floor)?;
    chain::run(&ns, data, w, specs, Mode::Tmle)
}

fn complete_case_rows(
    data: &ObservedDataset,
    w: &[f64],
    specs: &NuisanceSpecs,
    a: f64,
    p_floor: f64,
) -> Result<RowEstimate> {
    let wc: Vec<f64> = (0..data.n())
        .map(|i| if data.unit_complete(i) { w[i] } else { 0.0 })
        .collect();
    let n_cc: f64 = wc.iter().sum();
    if n_cc == 0.0 {
        return Err(Error::EmptyStratum("complete cases".into()));
    }
    let mut est = complete_data_rows(data, &wc, specs, a, p_floor)?;
    let scale = w.iter().sum::<f64>() / n_cc;
    for (v, &c) in est.influence.iter_mut().zip(&wc) {
        *v = if c > 0.0 { *v * scale } else { 0.0 };
    }
    Ok(est)
}

fn mi_rows(data: &ObservedDataset, w: &[f64], cfg: &EstimatorConfig, seed: u64) -> Result<RowEstimate> {
    let sets = impute_rows(data, w, &cfg.imputation, seed)?;
    mi_pool(&sets, cfg)
}

fn mi_pool(sets: &[crate::mi::ImputedRows], cfg: &EstimatorConfig) -> Result<RowEstimate> {
    let mut psis = Vec::with_capacity(sets.len());
    let mut diagnostics = Diagnostics::default();
    for set in sets {
        let est = complete_data_rows(&set.data, &set.counts, &cfg.specs, cfg.a, cfg.p_floor)?;
        psis.push(est.psi);
        diagnostics.converged &= est.diagnostics.converged;
        diagnostics.warnings.extend(est.diagnostics.warnings);
    }
    diagnostics.warnings.sort();
    diagnostics.warnings.dedup();
    Ok(RowEstimate {
        // centred on the first estimate so identical imputations pool exactly
        psi: psis[0] + psis.iter().map(|p| p - psis[0]).sum::<f64>() / psis.len() as f64,
        influence: Vec::new(),
        epsilons: Vec::new(),
        diagnostics,
    })
}

/// Estimate on distinct rows with frequency weights `w`. `seed` drives the
/// imputations of the multiple-imputation estimator and is ignored otherwise.
pub fn estimate_rows(data: &ObservedDataset, w: &[f64], cfg: &EstimatorConfig, seed: u64) -> Result<RowEstimate> {
    if w.len() != data.n() {
        return Err(Error::DimensionMismatch("weights do not match dataset".into()));
    }
    match cfg.kind {
        EstimatorKind::CompleteCase => complete_case_rows(data, w, &cfg.specs, cfg.a, cfg.p_floor),
        EstimatorKind::MultipleImputation => mi_rows(data, w, cfg, seed),
        kind => {
            let blocks = cfg.blocks(data.q())?;
            let ns = fit_nuisances(data, w, &cfg.specs, cfg.a, &blocks, true, cfg.p_floor)?;
            chain::run(&ns, data, w, &cfg.specs, kind.mode())
        }
    }
}

/// Estimates `E(Y^a)` from unit-level data.
pub fn estimate(data: &ObservedDataset, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let c = data.compress();
    let est = estimate_rows(&c.data, &c.counts, cfg, cfg.imputation.seed)?;
    Ok(EstimateResult {
        estimator: cfg.kind,
        a: cfg.a,
        psi_hat: est.psi,
        n: data.n(),
        influence_values: if est.influence.is_empty() {
            Vec::new()
        } else {
            c.expand(&est.influence)
        },
        epsilons: est.epsilons,
        diagnostics: est.diagnostics,
    })
}

/// Evaluates several estimators on the same weighted rows, fitting shared
/// nuisance models and imputations once. Results follow the input order.
pub fn estimate_roster(
    data: &ObservedDataset,
    w: &[f64],
    configs: &[&EstimatorConfig],
    seed: u64,
) -> Vec<Result<RowEstimate>> {
    type NuisanceKey<'a> = (Vec<Vec<usize>>, &'a NuisanceSpecs, u64, u64);
    let mut nuisances: Vec<(NuisanceKey<'_>, Option<NuisanceSet>)> = Vec::new();
    let mut imputations: Vec<(&ImputationConfig, Option<Vec<crate::mi::ImputedRows>>)> = Vec::new();
    let mut out = Vec::with_capacity(configs.len());
    for cfg in configs {
        let result = match cfg.kind {
            EstimatorKind::CompleteCase => complete_case_rows(data, w, &cfg.specs, cfg.a, cfg.p_floor),
            EstimatorKind::MultipleImputation => {
                let pos = match imputations.iter().position(|(c, _)| *c == &cfg.imputation) {
                    Some(p) => p,
                    None => {
                        imputations.push((&cfg.imputation, impute_rows(data, w, &cfg.imputation, seed).ok()));
                        imputations.len() - 1
                    }
                };
                match &imputations[pos].1 {
                    Some(sets) => mi_pool(sets, cfg),
                    // failures are rare: rerun to recover the error
                    None => impute_rows(data, w, &cfg.imputation, seed).map(|_| unreachable!()),
                }
            }
            kind => match cfg.blocks(data.q()) {
                Err(e) => Err(e),
                Ok(blocks) => {
                    let key = (blocks, &cfg.specs, cfg.a.to_bits(), cfg.p_floor.to_bits());
                    let pos = match nuisances.iter().position(|(k, _)| *k == key) {
                        Some(p) => p,
                        None => {
                            let fitted = fit_nuisances(data, w, &cfg.specs, cfg.a, &key.0, true, cfg.p_floor).ok();
                            nuisances.push((key, fitted));
                            nuisances.len() - 1
                        }
                    };
                    match &nuisances[pos].1 {
                        Some(ns) => chain::run(ns, data, w, &cfg.specs, kind.mode()),
                        None => fit_nuisances(data, w, &cfg.specs, cfg.a, &nuisances[pos].0 .0, true, cfg.p_floor)
                            .map(|_| unreachable!()),
                    }
                }
            },
        };
        out.push(result);
    }
    out
}

/// Standard TMLE on fully observed data.
pub fn tmle_complete_data(data: &ObservedDataset, specs: &NuisanceSpecs, a: f64) -> Result<EstimateResult> {
    if !data.is_complete() {
        return Err(Error::InvalidDataset(
            "complete-data TMLE needs a fully observed dataset".into(),
        ));
    }
    // complete-data TMLE is the complete-case estimator on complete data
    estimate(
        data,
        &EstimatorConfig::new(EstimatorKind::CompleteCase, specs.clone(), a),
    )
}

pub fn estimate_complete_case(data: &ObservedDataset, specs: &NuisanceSpecs, a: f64) -> Result<EstimateResult> {
    estimate(
        data,
        &EstimatorConfig::new(EstimatorKind::CompleteCase, specs.clone(), a),
    )
}

pub fn estimate_ice_a(data: &ObservedDataset, specs: &NuisanceSpecs, a: f64) -> Result<EstimateResult> {
    estimate(data, &EstimatorConfig::new(EstimatorKind::IceA, specs.clone(), a))
}

pub fn estimate_ice_b(
    data: &ObservedDataset,
    specs: &NuisanceSpecs,
    a: f64,
    ordering: &CovariateOrder,
) -> Result<EstimateResult> {
    estimate(
        data,
        &EstimatorConfig::new(EstimatorKind::IceB, specs.clone(), a).with_ordering(ordering.clone()),
    )
}

pub fn estimate_ipw_a(data: &ObservedDataset, specs: &NuisanceSpecs, a: f64) -> Result<EstimateResult> {
    estimate(data, &EstimatorConfig::new(EstimatorKind::IpwA, specs.clone(), a))
}

pub fn estimate_ipw_b(
    data: &ObservedDataset,
    specs: &NuisanceSpecs,
    a: f64,
    ordering: &CovariateOrder,
) -> Result<EstimateResult> {
    estimate(
        data,
        &EstimatorConfig::new(EstimatorKind::IpwB, specs.clone(), a).with_ordering(ordering.clone()),
    )
}

pub fn estimate_tmle_a(data: &ObservedDataset, specs: &NuisanceSpecs, a: f64) -> Result<EstimateResult> {
    estimate(data, &EstimatorConfig::new(EstimatorKind::TmleA, specs.clone(), a))
}

pub fn estimate_tmle_b(
    data: &ObservedDataset,
    specs: &NuisanceSpecs,
    a: f64,
    ordering: &CovariateOrder,
) -> Result<EstimateResult> {
    estimate(
        data,
        &EstimatorConfig::new(EstimatorKind::TmleB, specs.clone(), a).with_ordering(ordering.clone()),
    )
}

/// Multiple imputation followed by complete-data TMLE on each completed set.
pub fn mi_estimate(
    data: &ObservedDataset,
    cfg: &ImputationConfig,
    specs: &NuisanceSpecs,
    a: f64,
) -> Result<EstimateResult> {
    estimate(
        data,
        &EstimatorConfig::new(EstimatorKind::MultipleImputation, specs.clone(), a).with_imputation(cfg.clone()),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastKind {
    /// `E(Y^{a=1}) - E(Y^{a=0})`.
    Difference,
    /// `E(Y) - E(Y^{a=0})`.
    ObservedMinusCounterfactual,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CausalContrast {
    pub kind: ContrastKind,
    pub value: f64,
    /// Minuend and subtrahend.
    pub components: (f64, f64),
    /// Unit-wise combined influence values; empty unless both parts have them.
    pub influence_values: Vec<f64>,
}

/// First term of a contrast.
#[derive(Clone, Copy, Debug)]
pub enum Minuend<'a> {
    Estimate(&'a EstimateResult),
    ObservedMean(&'a ObservedDataset),
}

/// Contrast of a first term against `r0`.
pub fn contrast(first: Minuend<'_>, r0: &EstimateResult) -> Result<CausalContrast> {
    match first {
        Minuend::Estimate(r1) => {
            if r1.n != r0.n {
                return Err(Error::MismatchedData);
            }
            let influence_values = if r1.influence_values.is_empty() || r0.influence_values.is_empty() {
                Vec::new()
            } else {
                r1.influence_values
                    .iter()
                    .zip(&r0.influence_values)
                    .map(|(x, y)| x - y)
                    .collect()
            };
            Ok(CausalContrast {
                kind: ContrastKind::Difference,
                value: r1.psi_hat - r0.psi_hat,
                components: (r1.psi_hat, r0.psi_hat),
                influence_values,
            })
        }
        Minuend::ObservedMean(data) => {
            if data.n() != r0.n {
                return Err(Error::MismatchedData);
            }
            let y = data.outcome();
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let influence_values = if r0.influence_values.is_empty() {
                Vec::new()
            } else {
                y.iter()
                    .zip(&r0.influence_values)
                    .map(|(v, f)| (v - mean) - f)
                    .collect()
            };
            Ok(CausalContrast {
                kind: ContrastKind::ObservedMinusCounterfactual,
                value: mean - r0.psi_hat,
                components: (mean, r0.psi_hat),
                influence_values,
            })
        }
    }
}
