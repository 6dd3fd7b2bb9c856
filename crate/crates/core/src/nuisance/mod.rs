//! Nuisance models: exposure propensity, exposure and covariate missingness,
//! and the top outcome regression of the sequential chain.

mod design;

pub use design::{DesignTemplate, Predictor};

use serde::{Deserialize, Serialize};

use crate::data::{ColumnRef, CovariateOrder, ObservedDataset};
use crate::error::{Error, Result};
use crate::glm::{self, GlmFit, Link, ETA_MAX};

/// Default probability floor for anything entering a denominator.
pub const P_FLOOR: f64 = 0.01;

/// Specification of one parametric working model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// Predictor names; `None` uses every predictor the model may condition on.
    pub covariates: Option<Vec<String>>,
    /// Adds all pairwise products between distinct predictors.
    pub interactions: bool,
    /// One indicator per observed value combination of the predictors.
    pub saturated: bool,
}

impl ModelSpec {
    pub fn saturated() -> Self {
        Self {
            saturated: true,
            ..Self::default()
        }
    }

    pub fn main_effects(covariates: &[&str]) -> Self {
        Self {
            covariates: Some(covariates.iter().map(|c| c.to_string()).collect()),
            ..Self::default()
        }
    }
}

/// Working models for every nuisance role.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSpecs {
    /// Exposure propensity among fully observed units.
    pub exposure: ModelSpec,
    /// Exposure observation given covariates.
    pub exposure_missingness: ModelSpec,
    /// Covariate observation given fully observed covariates and earlier blocks.
    pub covariate_missingness: ModelSpec,
    /// Outcome given exposure and all covariates.
    pub outcome: ModelSpec,
    /// Regressions of targeted predictions onto shrinking conditioning sets.
    pub outcome_chain: ModelSpec,
}

impl NuisanceSpecs {
    pub fn saturated() -> Self {
        Self {
            exposure: ModelSpec::saturated(),
            exposure_missingness: ModelSpec::saturated(),
            covariate_missingness: ModelSpec::saturated(),
            outcome: ModelSpec::saturated(),
            outcome_chain: ModelSpec::saturated(),
        }
    }
}

/// Resolves a selector against the predictors a model may use. Names outside
/// the allowed set are ignored; names absent from the dataset are errors.
pub fn resolve_predictors(
    spec: &ModelSpec,
    data: &ObservedDataset,
    allowed: &[Predictor],
    forced: &[Predictor],
) -> Result<Vec<Predictor>> {
    let mut chosen: Vec<Predictor> = match &spec.covariates {
        None => allowed.to_vec(),
        Some(names) => {
            let mut picked = Vec::new();
            for name in names {
                let p = match data.schema().lookup(name) {
                    Some(ColumnRef::Outcome) => Predictor::Outcome,
                    Some(ColumnRef::Exposure) => Predictor::Exposure,
                    Some(ColumnRef::Observed(j)) => Predictor::Observed(j),
                    Some(ColumnRef::Variable(k)) => Predictor::Partial(k),
                    Some(ColumnRef::PartialColumn(c)) => Predictor::Partial(
                        (0..data.q())
                            .find(|&k| data.variable_columns(k).contains(&c))
                            .expect("column belongs to a variable"),
                    ),
                    None => return Err(Error::UnknownColumn(name.clone())),
                };
                picked.push(p);
            }
            allowed.iter().copied().filter(|p| picked.contains(p)).collect()
        }
    };
    for f in forced {
        if !chosen.contains(f) {
            chosen.insert(0, *f);
        }
    }
    chosen.sort();
    Ok(chosen)
}

#[derive(Clone, Debug, PartialEq)]
enum ModelFit {
    Glm(GlmFit),
    /// Degenerate response; stores the bounded logit.
    Constant(f64),
}

/// A fitted working model together with its design recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    name: String,
    template: DesignTemplate,
    fit: ModelFit,
    link: Link,
}

impl FittedModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn template(&self) -> &DesignTemplate {
        &self.template
    }

    pub fn glm(&self) -> Option<&GlmFit> {
        match &self.fit {
            ModelFit::Glm(f) => Some(f),
            ModelFit::Constant(_) => None,
        }
    }

    pub fn converged(&self) -> bool {
        self.glm().is_none_or(|f| f.converged)
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        self.glm().map(|f| f.coefficients.as_slice())
    }

    /// Linear predictor for `rows` (bounded on the logit scale).
    pub fn linear_predictor(&self, data: &ObservedDataset, rows: &[usize], exposure: Option<f64>) -> Result<Vec<f64>> {
        match &self.fit {
            ModelFit::Constant(eta) => Ok(vec![*eta; rows.len()]),
            ModelFit::Glm(fit) => {
                let x = self.template.build(data, rows, exposure);
                glm::linear_predictor(fit, &x, None)
            }
        }
    }

    /// Mean predictions for `rows`.
    pub fn predict(&self, data: &ObservedDataset, rows: &[usize], exposure: Option<f64>) -> Result<Vec<f64>> {
        let eta = self.linear_predictor(data, rows, exposure)?;
        Ok(match self.link {
            Link::Logit => eta.into_iter().map(glm::expit).collect(),
            Link::Identity => eta,
        })
    }
}

/// Everything needed to fit one working model.
pub struct ModelRequest<'a> {
    pub name: &'a str,
    pub spec: &'a ModelSpec,
    pub allowed: &'a [Predictor],
    pub forced: &'a [Predictor],
    pub link: Link,
    /// Fitting stratum (row indices).
    pub rows: &'a [usize],
    /// Response aligned with `rows`.
    pub response: &'a [f64],
    /// Frequency weights aligned with `rows`.
    pub weights: &'a [f64],
    pub start: Option<&'a [f64]>,
}

/// Fits one working model on its stratum. Rows with zero weight are ignored,
/// including when laying out saturated cells.
pub fn fit_model(data: &ObservedDataset, req: ModelRequest<'_>) -> Result<FittedModel> {
    let predictors = resolve_predictors(req.spec, data, req.allowed, req.forced)?;
    let keep: Vec<usize> = (0..req.rows.len()).filter(|&j| req.weights[j] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::EmptyStratum(req.name.to_string()));
    }
    let rows: Vec<usize> = keep.iter().map(|&j| req.rows[j]).collect();
    let response: Vec<f64> = keep.iter().map(|&j| req.response[j]).collect();
    let weights: Vec<f64> = keep.iter().map(|&j| req.weights[j]).collect();

    let template = if req.spec.saturated {
        DesignTemplate::saturated(predictors, data, &rows)
    } else {
        DesignTemplate::main_effects(predictors, req.spec.interactions)
    };

    if req.link == Link::Logit {
        if response.iter().all(|&y| y == 1.0) {
            return Ok(FittedModel {
                name: req.name.to_string(),
                template,
                fit: ModelFit::Constant(ETA_MAX),
                link: req.link,
            });
        }
        if response.iter().all(|&y| y == 0.0) {
            return Ok(FittedModel {
                name: req.name.to_string(),
                template,
                fit: ModelFit::Constant(-ETA_MAX),
                link: req.link,
            });
        }
    }
    let fit = match template.cells_of(data, &rows) {
        // a saturated fit is the vector of cell means
        Some(cells) => saturated_fit(&cells, template.width(data), &response, &weights, req.link),
        None => {
            let x = template.build(data, &rows, None);
            glm::fit_glm_from(&x, &response, &weights, None, req.link, req.start)?
        }
    };
    Ok(FittedModel {
        name: req.name.to_string(),
        template,
        fit: ModelFit::Glm(fit),
        link: req.link,
    })
}

fn saturated_fit(cells: &[Option<usize>], width: usize, response: &[f64], weights: &[f64], link: Link) -> GlmFit {
    let mut num = vec![0.0; width];
    let mut den = vec![0.0; width];
    for ((c, y), w) in cells.iter().zip(response).zip(weights) {
        let c = c.expect("fitting rows define the cells");
        num[c] += w * y;
        den[c] += w;
    }
    let mut separated = false;
    let coefficients: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(s, d)| {
            let mean = s / d;
            match link {
                Link::Identity => mean,
                Link::Logit => {
                    let eta = glm::bounded_logit(mean);
                    separated |= eta.abs() >= ETA_MAX;
                    eta
                }
            }
        })
        .collect();
    let mut deviance = 0.0;
    for ((c, y), w) in cells.iter().zip(response).zip(weights) {
        let b = coefficients[c.unwrap()];
        deviance += match link {
            Link::Identity => w * (y - b).powi(2),
            Link::Logit => {
                let mu = glm::expit(b);
                let ll = |v: f64, p: f64| if v > 0.0 { v * (v / p).ln() } else { 0.0 };
                2.0 * w * (ll(*y, mu) + ll(1.0 - y, 1.0 - mu))
            }
        };
    }
    GlmFit {
        link,
        coefficients,
        converged: !separated,
        iterations: 0,
        deviance,
        ridged: false,
        separated,
    }
}

/// Row-index lists.
pub(crate) fn rows_where(n: usize, pred: impl Fn(usize) -> bool) -> Vec<usize> {
    (0..n).filter(|&i| pred(i)).collect()
}

/// Monotone strata of the covariate blocks: `strata[k]` holds the rows whose
/// first `k` blocks are all observed.
pub(crate) fn block_strata(data: &ObservedDataset, blocks: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let n = data.n();
    let mut strata = vec![vec![true; n]];
    for block in blocks {
        let prev = strata.last().unwrap();
        let next = (0..n)
            .map(|i| prev[i] && block.iter().all(|&k| data.variable_observed(k, i)))
            .collect();
        strata.push(next);
    }
    strata
}

/// Fitted nuisance functions for one identifying formula and exposure level.
///
/// Probabilities are stored per row, already floored, and are `NaN` outside
/// the rows where they are defined.
#[derive(Clone, Debug)]
pub struct NuisanceSet {
    pub target_level: f64,
    /// Covariate blocks in observation order (variable indices).
    pub blocks: Vec<Vec<usize>>,
    /// `strata[k]`: first `k` blocks observed.
    pub strata: Vec<Vec<bool>>,
    pub pi_a: FittedModel,
    pub pi_ra: Option<FittedModel>,
    pub pi_rl: Vec<FittedModel>,
    /// Top outcome regression (outcome on exposure and all covariates).
    pub outcome: FittedModel,
    pub p_floor: f64,
    /// Raw (unfloored) probabilities per row.
    pub prob_a: Vec<f64>,
    pub prob_ra: Vec<f64>,
    pub prob_rl: Vec<Vec<f64>>,
}

impl NuisanceSet {
    /// Rows with every covariate block observed.
    pub fn covariates_complete(&self, i: usize) -> bool {
        self.strata[self.blocks.len()][i]
    }

    /// Rows used to fit the exposure and outcome models.
    pub fn fully_observed(&self, data: &ObservedDataset, i: usize) -> bool {
        self.covariates_complete(i) && data.exposure_observed(i)
    }

    /// Rows where the targeting step and the inverse weights apply.
    pub fn targeted(&self, data: &ObservedDataset, i: usize) -> bool {
        self.fully_observed(data, i) && data.exposure_raw()[i] == self.target_level
    }

    fn floor(&self, p: f64) -> f64 {
        p.max(self.p_floor)
    }

    /// `1 / prod_{j<=k} pi_RLj` on rows of `strata[k]`.
    pub fn block_weight(&self, k: usize, i: usize) -> f64 {
        (0..k).map(|j| 1.0 / self.floor(self.prob_rl[j][i])).product()
    }

    /// Full inverse weight `1 / (pi_A pi_RA prod_j pi_RLj)` on fully observed rows.
    pub fn full_weight(&self, i: usize) -> f64 {
        let ra = if self.pi_ra.is_some() {
            self.floor(self.prob_ra[i])
        } else {
            1.0
        };
        self.block_weight(self.blocks.len(), i) / (self.floor(self.prob_a[i]) * ra)
    }
}

/// Blocks for the block assumption: one block holding every covariate.
pub fn single_block(q: usize) -> Vec<Vec<usize>> {
    if q == 0 {
        Vec::new()
    } else {
        vec![(0..q).collect()]
    }
}

/// Blocks for the sequential assumption: one covariate per block, in order.
pub fn sequential_blocks(ordering: &CovariateOrder) -> Vec<Vec<usize>> {
    ordering.as_slice().iter().map(|&k| vec![k]).collect()
}

fn observed_predictors(data: &ObservedDataset) -> impl Iterator<Item = Predictor> {
    (0..data.schema().observed.len()).map(Predictor::Observed)
}

/// Fits every nuisance model for the chain defined by `blocks`.
/// `exposure_missingness` controls whether an exposure-observation model is
/// fit; without it the exposure is treated as observed wherever the
/// covariates are.
pub fn fit_nuisances(
    data: &ObservedDataset,
    weights: &[f64],
    specs: &NuisanceSpecs,
    a: f64,
    blocks: &[Vec<usize>],
    exposure_missingness: bool,
    p_floor: f64,
) -> Result<NuisanceSet> {
    let n = data.n();
    if weights.len() != n {
        return Err(Error::DimensionMismatch("weights do not match dataset".into()));
    }
    if a != 0.0 && a != 1.0 {
        return Err(Error::InvalidConfig(format!("exposure level {a} is not binary")));
    }
    let strata = block_strata(data, blocks);
    let k_max = blocks.len();

    let mut pi_rl = Vec::with_capacity(k_max);
    let mut prob_rl = Vec::with_capacity(k_max);
    let mut earlier: Vec<Predictor> = observed_predictors(data).collect();
    for (k, block) in blocks.iter().enumerate() {
        let rows = rows_where(n, |i| strata[k][i]);
        let response: Vec<f64> = rows.iter().map(|&i| if strata[k + 1][i] { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = rows.iter().map(|&i| weights[i]).collect();
        let name = format!("covariate_missingness[{}]", k + 1);
        let model = fit_model(
            data,
            ModelRequest {
                name: &name,
                spec: &specs.covariate_missingness,
                allowed: &earlier,
                forced: &[],
                link: Link::Logit,
                rows: &rows,
                response: &response,
                weights: &w,
                start: None,
            },
        )?;
        let mut prob = vec![f64::NAN; n];
        for (&i, p) in rows.iter().zip(model.predict(data, &rows, None)?) {
            prob[i] = p;
        }
        pi_rl.push(model);
        prob_rl.push(prob);
        earlier.extend(block.iter().map(|&v| Predictor::Partial(v)));
        earlier.sort();
    }
    let all_covariates: Vec<Predictor> = observed_predictors(data)
        .chain((0..data.q()).map(Predictor::Partial))
        .collect();

    let complete = rows_where(n, |i| strata[k_max][i]);
    let (pi_ra, prob_ra) = if exposure_missingness {
        let response: Vec<f64> = complete
            .iter()
            .map(|&i| if data.exposure_observed(i) { 1.0 } else { 0.0 })
            .collect();
        let w: Vec<f64> = complete.iter().map(|&i| weights[i]).collect();
        let model = fit_model(
            data,
            ModelRequest {
                name: "exposure_missingness",
                spec: &specs.exposure_missingness,
                allowed: &all_covariates,
                forced: &[],
                link: Link::Logit,
                rows: &complete,
                response: &response,
                weights: &w,
                start: None,
            },
        )?;
        let mut prob = vec![f64::NAN; n];
        for (&i, p) in complete.iter().zip(model.predict(data, &complete, None)?) {
            prob[i] = p;
        }
        (Some(model), prob)
    } else {
        (None, vec![f64::NAN; n])
    };

    let observed = rows_where(n, |i| strata[k_max][i] && data.exposure_observed(i));
    let w: Vec<f64> = observed.iter().map(|&i| weights[i]).collect();
    let is_a: Vec<f64> = observed
        .iter()
        .map(|&i| if data.exposure_raw()[i] == a { 1.0 } else { 0.0 })
        .collect();
    let pi_a = fit_model(
        data,
        ModelRequest {
            name: "exposure",
            spec: &specs.exposure,
            allowed: &all_covariates,
            forced: &[],
            link: Link::Logit,
            rows: &observed,
            response: &is_a,
            weights: &w,
            start: None,
        },
    )?;
    let mut prob_a = vec![f64::NAN; n];
    for (&i, p) in complete.iter().zip(pi_a.predict(data, &complete, None)?) {
        prob_a[i] = p;
    }

    let y: Vec<f64> = observed.iter().map(|&i| data.outcome()[i]).collect();
    let mut outcome_allowed = all_covariates.clone();
    outcome_allowed.push(Predictor::Exposure);
    outcome_allowed.sort();
    let outcome = fit_model(
        data,
        ModelRequest {
            name: "outcome",
            spec: &specs.outcome,
            allowed: &outcome_allowed,
            forced: &[Predictor::Exposure],
            link: Link::Logit,
            rows: &observed,
            response: &y,
            weights: &w,
            start: None,
        },
    )?;

    Ok(NuisanceSet {
        target_level: a,
        blocks: blocks.to_vec(),
        strata,
        pi_a,
        pi_ra,
        pi_rl,
        outcome,
        p_floor,
        prob_a,
        prob_ra,
        prob_rl,
    })
}

/// Nuisances under the block assumption (one covariate-observation model).
pub fn fit_nuisances_mnar_a(data: &ObservedDataset, specs: &NuisanceSpecs, a: f64) -> Result<NuisanceSet> {
    let w = vec![1.0; data.n()];
    fit_nuisances(data, &w, specs, a, &single_block(data.q()), true, P_FLOOR)
}

/// Nuisances under the sequential assumption, one model per covariate.
pub fn fit_nuisances_mnar_b(
    data: &ObservedDataset,
    specs: &NuisanceSpecs,
    a: f64,
    ordering: &CovariateOrder,
) -> Result<NuisanceSet> {
    if ordering.len() != data.q() {
        return Err(Error::InvalidOrdering(format!(
            "ordering has {} entries but there are {} partially observed variables",
            ordering.len(),
            data.q()
        )));
    }
    let w = vec![1.0; data.n()];
    fit_nuisances(data, &w, specs, a, &sequential_blocks(ordering), true, P_FLOOR)
}

/// Range and flooring summary of one fitted probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilitySummary {
    pub model: String,
    /// Minimum after flooring.
    pub min: f64,
    pub max: f64,
    /// Number of units whose probability was raised to the floor.
    pub floored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    pub p_floor: f64,
    pub models: Vec<ProbabilitySummary>,
    /// Largest full inverse weight among targeted units.
    pub max_weight: f64,
}

impl PositivityReport {
    pub fn floored_total(&self) -> usize {
        self.models.iter().map(|m| m.floored).sum()
    }
}

fn summarize(model: &str, probs: impl Iterator<Item = (f64, f64)>, p_floor: f64) -> ProbabilitySummary {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut floored = 0.0;
    for (p, count) in probs {
        let f = p.max(p_floor);
        if p < p_floor {
            floored += count;
        }
        min = min.min(f);
        max = max.max(f);
    }
    ProbabilitySummary {
        model: model.to_string(),
        min,
        max,
        floored: floored as usize,
    }
}

/// Positivity diagnostics from per-unit probabilities of the units where
/// they enter a weight. Each unit's combined weight is the inverse of the
/// product of its floored probabilities.
pub fn positivity_from_probabilities(pi_a: &[f64], pi_ra: &[f64], pi_rl: &[&[f64]], p_floor: f64) -> PositivityReport {
    let ones = |p: &[f64]| p.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>();
    let mut models = vec![
        summarize("exposure", ones(pi_a).into_iter(), p_floor),
        summarize("exposure_missingness", ones(pi_ra).into_iter(), p_floor),
    ];
    for (k, p) in pi_rl.iter().enumerate() {
        models.push(summarize(
            &format!("covariate_missingness[{}]", k + 1),
            ones(p).into_iter(),
            p_floor,
        ));
    }
    let max_weight = (0..pi_a.len())
        .map(|i| {
            let mut prod = pi_a[i].max(p_floor) * pi_ra[i].max(p_floor);
            for p in pi_rl {
                prod *= p[i].max(p_floor);
            }
            1.0 / prod
        })
        .fold(0.0, f64::max);
    PositivityReport {
        p_floor,
        models,
        max_weight,
    }
}

/// Positivity diagnostics of a fitted set. `weights` are row multiplicities.
pub fn check_positivity(ns: &NuisanceSet, data: &ObservedDataset, weights: &[f64]) -> PositivityReport {
    let n = data.n();
    let targeted: Vec<usize> = rows_where(n, |i| weights[i] > 0.0 && ns.targeted(data, i));
    let mut models = vec![summarize(
        ns.pi_a.name(),
        targeted.iter().map(|&i| (ns.prob_a[i], weights[i])),
        ns.p_floor,
    )];
    if let Some(m) = &ns.pi_ra {
        models.push(summarize(
            m.name(),
            targeted.iter().map(|&i| (ns.prob_ra[i], weights[i])),
            ns.p_floor,
        ));
    }
    for (k, m) in ns.pi_rl.iter().enumerate() {
        let rows = rows_where(n, |i| weights[i] > 0.0 && ns.strata[k + 1][i]);
        models.push(summarize(
            m.name(),
            rows.iter().map(|&i| (ns.prob_rl[k][i], weights[i])),
            ns.p_floor,
        ));
    }
    let max_weight = targeted.iter().map(|&i| ns.full_weight(i)).fold(0.0, f64::max);
    PositivityReport {
        p_floor: ns.p_floor,
        models,
        max_weight,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flooring_is_counted() {
        let r = positivity_from_probabilities(&[0.004, 0.5], &[1.0, 1.0], &[], 0.01);
        assert_eq!(r.models[0].floored, 1);
        assert_eq!(r.models[0].min, 0.01);
        assert!((r.max_weight - 100.0).abs() < 1e-12);
    }

    #[test]
    fn combined_weight_by_hand() {
        let pa = [0.5, 0.25, 0.8];
        let pra = [0.9, 0.5, 0.5];
        let prl = [0.8, 0.5, 0.25];
        let r = positivity_from_probabilities(&pa, &pra, &[&prl], 0.01);
        // smallest product: 0.8 * 0.5 * 0.25 = 0.1 vs 0.25 * 0.5 * 0.5 = 0.0625
        assert!((r.max_weight - 16.0).abs() < 1e-12);
        assert_eq!(r.floored_total(), 0);
    }
}
