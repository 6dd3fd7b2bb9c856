//! Multiple imputation by chained equations, followed by the complete-data
//! TMLE on each completed dataset.
//!
//! Imputation runs on distinct rows with integer multiplicities. Draws for a
//! row with multiplicity `c` are made for all `c` units at once (a binomial
//! split for a binary cell), so identical units stay merged and the cost
//! scales with the number of distinct rows rather than with `n`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ObservedDataset, Schema};
use crate::error::{Error, Result};
use crate::glm::Link;
use crate::nuisance::{fit_model, FittedModel, ModelRequest, ModelSpec, Predictor};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputationMethod {
    /// Bernoulli draws from a logistic fit (binary variables).
    Logistic,
    /// Normal draws around a linear fit with the residual standard deviation.
    Normal,
    /// Sequential logistic fits over the indicator columns of a categorical.
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationConfig {
    pub m: usize,
    pub max_sweeps: usize,
    pub seed: u64,
    /// Per-variable overrides; other variables get a method from their values.
    pub methods: BTreeMap<String, ImputationMethod>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 20,
            max_sweeps: 10,
            seed: 0,
            methods: BTreeMap::new(),
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig("imputation needs m >= 2".into()));
        }
        if self.max_sweeps < 1 {
            return Err(Error::InvalidConfig("imputation needs max_sweeps >= 1".into()));
        }
        Ok(())
    }
}

/// One completed dataset on distinct rows.
#[derive(Clone, Debug)]
pub struct ImputedRows {
    pub data: ObservedDataset,
    pub counts: Vec<f64>,
    /// Source row of each completed row.
    pub origin: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Exposure,
    Variable(usize),
}

struct State {
    schema: Arc<Schema>,
    y: Vec<f64>,
    a: Vec<f64>,
    l_o: Vec<Vec<f64>>,
    l_m: Vec<Vec<f64>>,
    counts: Vec<u64>,
    origin: Vec<usize>,
}

impl State {
    fn from_source(source: &ObservedDataset, counts: &[u64]) -> Self {
        State {
            schema: source.schema_arc(),
            y: source.outcome().to_vec(),
            a: source.exposure_raw().to_vec(),
            l_o: source.observed_columns().to_vec(),
            l_m: (0..source.schema().partial_column_count())
                .map(|c| source.partial_column(c).to_vec())
                .collect(),
            counts: counts.to_vec(),
            origin: (0..source.n()).collect(),
        }
    }

    fn len(&self) -> usize {
        self.y.len()
    }

    fn dataset(&self) -> ObservedDataset {
        ObservedDataset::from_raw(
            self.schema.clone(),
            self.y.clone(),
            self.a.clone(),
            self.l_o.clone(),
            self.l_m.clone(),
        )
    }

    /// Columns holding the target, for a given source layout.
    fn columns(data: &ObservedDataset, t: Target) -> Vec<usize> {
        match t {
            Target::Exposure => vec![usize::MAX],
            Target::Variable(k) => data.variable_columns(k).collect(),
        }
    }

    fn get(&self, col: usize, e: usize) -> f64 {
        if col == usize::MAX {
            self.a[e]
        } else {
            self.l_m[col][e]
        }
    }

    fn set(&mut self, col: usize, e: usize, v: f64) {
        if col == usize::MAX {
            self.a[e] = v;
        } else {
            self.l_m[col][e] = v;
        }
    }

    /// Appends a copy of entry `e` with multiplicity `count`.
    fn split(&mut self, e: usize, count: u64) -> usize {
        self.y.push(self.y[e]);
        self.a.push(self.a[e]);
        for c in &mut self.l_o {
            c.push(c[e]);
        }
        for c in &mut self.l_m {
            c.push(c[e]);
        }
        self.counts.push(count);
        self.origin.push(self.origin[e]);
        self.counts[e] -= count;
        self.len() - 1
    }

    /// Merges entries with the same origin and values, keeping first order.
    fn merge(&mut self) {
        const NONE: usize = usize::MAX;
        let origins = self.origin.iter().max().map_or(0, |m| m + 1);
        // latest kept entry of each origin, and the one kept before it
        let mut head = vec![NONE; origins];
        let mut prev: Vec<usize> = Vec::with_capacity(self.len());
        let mut kept = 0;
        for e in 0..self.len() {
            if self.counts[e] == 0 {
                continue;
            }
            let o = self.origin[e];
            let mut j = head[o];
            while j != NONE {
                let same = self.a[j].to_bits() == self.a[e].to_bits()
                    && self.l_m.iter().all(|c| c[j].to_bits() == c[e].to_bits());
                if same {
                    break;
                }
                j = prev[j];
            }
            if j != NONE {
                self.counts[j] += self.counts[e];
                continue;
            }
            // compact in place; `kept <= e` so nothing unread is overwritten
            self.y[kept] = self.y[e];
            self.a[kept] = self.a[e];
            for c in self.l_o.iter_mut().chain(self.l_m.iter_mut()) {
                c[kept] = c[e];
            }
            self.counts[kept] = self.counts[e];
            self.origin[kept] = o;
            prev.push(head[o]);
            head[o] = kept;
            kept += 1;
        }
        self.y.truncate(kept);
        self.a.truncate(kept);
        for c in self.l_o.iter_mut().chain(self.l_m.iter_mut()) {
            c.truncate(kept);
        }
        self.counts.truncate(kept);
        self.origin.truncate(kept);
    }
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Splits entry `e` across the levels of an indicator-coded variable.
/// `probs[j]` is the probability of level `j` given no earlier level; units
/// left after the last column take the reference level (all zeros).
fn draw_levels(state: &mut State, e: usize, cols: &[usize], probs: &[f64], rng: &mut ChaCha8Rng) {
    for &c in cols {
        state.set(c, e, 0.0);
    }
    for (j, &c) in cols.iter().enumerate() {
        let x = binomial(rng, state.counts[e], probs[j]);
        if x == 0 {
            continue;
        }
        let h = if x == state.counts[e] { e } else { state.split(e, x) };
        state.set(c, h, 1.0);
        if h == e {
            break;
        }
    }
}

fn choose_method(cfg: &ImputationConfig, data: &ObservedDataset, t: Target) -> Result<ImputationMethod> {
    let (name, cols) = match t {
        Target::Exposure => return Ok(ImputationMethod::Logistic),
        Target::Variable(k) => (data.schema().partial[k].name.clone(), data.variable_columns(k)),
    };
    if let Some(m) = cfg.methods.get(&name) {
        return Ok(*m);
    }
    if cols.len() > 1 {
        return Ok(ImputationMethod::Categorical);
    }
    let binary = data
        .partial_column(cols.start)
        .iter()
        .all(|v| v.is_nan() || *v == 0.0 || *v == 1.0);
    Ok(if binary {
        ImputationMethod::Logistic
    } else {
        ImputationMethod::Normal
    })
}

/// Draws from observed-value marginals for every missing cell.
fn initialise(
    state: &mut State,
    source: &ObservedDataset,
    counts: &[u64],
    targets: &[(Target, ImputationMethod)],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for &(t, method) in targets {
        let cols = State::columns(source, t);
        let observed_in = |r: usize| match t {
            Target::Exposure => source.exposure_observed(r),
            Target::Variable(k) => source.variable_observed(k, r),
        };
        let donors: Vec<usize> = (0..source.n()).filter(|&r| counts[r] > 0 && observed_in(r)).collect();
        if donors.is_empty() {
            let name = match t {
                Target::Exposure => source.schema().exposure.clone(),
                Target::Variable(k) => source.schema().partial[k].name.clone(),
            };
            return Err(Error::AllMissingVariable(name));
        }
        let value = |r: usize, c: usize| {
            if c == usize::MAX {
                source.exposure_raw()[r]
            } else {
                source.partial_column(c)[r]
            }
        };
        let mut marginal = Vec::with_capacity(cols.len());
        let mut pool = donors.clone();
        for &c in &cols {
            let total: f64 = pool.iter().map(|&r| counts[r] as f64).sum();
            let ones: f64 = pool
                .iter()
                .filter(|&&r| value(r, c) == 1.0)
                .map(|&r| counts[r] as f64)
                .sum();
            marginal.push(if total > 0.0 { ones / total } else { 0.0 });
            pool.retain(|&r| value(r, c) == 0.0);
        }
        let entries = state.len();
        for e in 0..entries {
            if observed_in(state.origin[e]) {
                continue;
            }
            match method {
                ImputationMethod::Logistic | ImputationMethod::Categorical => {
                    draw_levels(state, e, &cols, &marginal, rng);
                }
                ImputationMethod::Normal => {
                    let c = cols[0];
                    let weights: Vec<f64> = donors.iter().map(|&r| counts[r] as f64).collect();
                    let pick = rand_distr::weighted::WeightedIndex::new(&weights).expect("positive donor weights");
                    while state.counts[e] > 1 {
                        let h = state.split(e, 1);
                        state.set(c, h, value(donors[pick.sample(rng)], c));
                    }
                    state.set(c, e, value(donors[pick.sample(rng)], c));
                }
            }
        }
    }
    Ok(())
}

fn other_predictors(data: &ObservedDataset, t: Target) -> Vec<Predictor> {
    let mut p = vec![Predictor::Outcome];
    if t != Target::Exposure {
        p.push(Predictor::Exposure);
    }
    p.extend((0..data.schema().observed.len()).map(Predictor::Observed));
    p.extend(
        (0..data.q())
            .filter(|&k| t != Target::Variable(k))
            .map(Predictor::Partial),
    );
    p.sort();
    p
}

type Warm = HashMap<(usize, usize), Vec<f64>>;

#[allow(clippy::too_many_arguments)]
fn fit_column(
    current: &ObservedDataset,
    state: &State,
    rows: &[usize],
    response: &[f64],
    predictors: &[Predictor],
    link: Link,
    warm: &mut Warm,
    key: (usize, usize),
) -> Result<FittedModel> {
    let w: Vec<f64> = rows.iter().map(|&e| state.counts[e] as f64).collect();
    let spec = ModelSpec::default();
    let model = fit_model(
        current,
        ModelRequest {
            name: "imputation",
            spec: &spec,
            allowed: predictors,
            forced: &[],
            link,
            rows,
            response,
            weights: &w,
            start: warm.get(&key).map(Vec::as_slice),
        },
    )?;
    if let Some(c) = model.coefficients() {
        warm.insert(key, c.to_vec());
    }
    Ok(model)
}

/// One logistic model per indicator column of a target; level `j` is fit
/// among entries not at an earlier level (`None` when no entry remains).
fn fit_levels(
    current: &ObservedDataset,
    state: &State,
    fit_rows: &[usize],
    cols: &[usize],
    predictors: &[Predictor],
    warm: &mut Warm,
    ti: usize,
) -> Result<Vec<Option<FittedModel>>> {
    let mut pool = fit_rows.to_vec();
    let mut out = Vec::with_capacity(cols.len());
    for (j, &c) in cols.iter().enumerate() {
        if pool.is_empty() {
            out.push(None);
            continue;
        }
        let response: Vec<f64> = pool.iter().map(|&e| state.get(c, e)).collect();
        out.push(Some(fit_column(
            current,
            state,
            &pool,
            &response,
            predictors,
            Link::Logit,
            warm,
            (ti, j),
        )?));
        pool.retain(|&e| state.get(c, e) == 0.0);
    }
    Ok(out)
}

fn impute_one(
    source: &ObservedDataset,
    counts: &[u64],
    targets: &[(Target, ImputationMethod)],
    fixed: &[Option<Vec<Option<FittedModel>>>],
    max_sweeps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ImputedRows> {
    let mut state = State::from_source(source, counts);
    initialise(&mut state, source, counts, targets, rng)?;
    state.merge();

    let mut warm: Warm = HashMap::new();
    for _ in 0..max_sweeps {
        for (ti, &(t, method)) in targets.iter().enumerate() {
            let observed_in = |r: usize| match t {
                Target::Exposure => source.exposure_observed(r),
                Target::Variable(k) => source.variable_observed(k, r),
            };
            let current = state.dataset();
            let predictors = other_predictors(source, t);
            let cols = State::columns(source, t);
            let fit_rows: Vec<usize> = (0..state.len()).filter(|&e| observed_in(state.origin[e])).collect();
            let draw_rows: Vec<usize> = (0..state.len()).filter(|&e| !observed_in(state.origin[e])).collect();
            match method {
                ImputationMethod::Logistic | ImputationMethod::Categorical => {
                    let fitted;
                    let models = match &fixed[ti] {
                        Some(m) => m,
                        None => {
                            fitted = fit_levels(&current, &state, &fit_rows, &cols, &predictors, &mut warm, ti)?;
                            &fitted
                        }
                    };
                    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
                    for model in models {
                        probs.push(match model {
                            Some(m) => m.predict(&current, &draw_rows, None)?,
                            None => vec![0.0; draw_rows.len()],
                        });
                    }
                    for (d, &e) in draw_rows.iter().enumerate() {
                        let p: Vec<f64> = probs.iter().map(|v| v[d]).collect();
                        draw_levels(&mut state, e, &cols, &p, rng);
                    }
                }
                ImputationMethod::Normal => {
                    let c = cols[0];
                    let response: Vec<f64> = fit_rows.iter().map(|&e| state.get(c, e)).collect();
                    let model = fit_column(
                        &current,
                        &state,
                        &fit_rows,
                        &response,
                        &predictors,
                        Link::Identity,
                        &mut warm,
                        (ti, 0),
                    )?;
                    let fitted = model.predict(&current, &fit_rows, None)?;
                    let (mut rss, mut wsum) = (0.0, 0.0);
                    for ((&e, y), f) in fit_rows.iter().zip(&response).zip(&fitted) {
                        rss += state.counts[e] as f64 * (y - f).powi(2);
                        wsum += state.counts[e] as f64;
                    }
                    let p = model.coefficients().map_or(1, <[f64]>::len) as f64;
                    let sd = (rss / (wsum - p).max(1.0)).sqrt();
                    let mean = model.predict(&current, &draw_rows, None)?;
                    let noise = Normal::new(0.0, sd.max(0.0)).expect("finite sd");
                    for (&e, mu) in draw_rows.iter().zip(mean) {
                        while state.counts[e] > 1 {
                            let h = state.split(e, 1);
                            state.set(c, h, mu + noise.sample(rng));
                        }
                        state.set(c, e, mu + noise.sample(rng));
                    }
                }
            }
            state.merge();
        }
    }
    let data = state.dataset();
    Ok(ImputedRows {
        data,
        counts: state.counts.iter().map(|&c| c as f64).collect(),
        origin: state.origin,
    })
}

fn sweep_targets(data: &ObservedDataset, cfg: &ImputationConfig) -> Result<Vec<(Target, ImputationMethod)>> {
    let mut targets = Vec::new();
    for k in 0..data.q() {
        if (0..data.n()).any(|i| !data.variable_observed(k, i)) {
            let t = Target::Variable(k);
            targets.push((t, choose_method(cfg, data, t)?));
        }
    }
    if (0..data.n()).any(|i| !data.exposure_observed(i)) {
        targets.push((Target::Exposure, ImputationMethod::Logistic));
    }
    Ok(targets)
}

fn observed_target(data: &ObservedDataset, t: Target, r: usize) -> bool {
    match t {
        Target::Exposure => data.exposure_observed(r),
        Target::Variable(k) => data.variable_observed(k, r),
    }
}

/// Binary and categorical targets whose fitting rows are fully observed
/// never see imputed predictors, so their models are fit once up front.
fn fixed_models(
    source: &ObservedDataset,
    counts: &[u64],
    targets: &[(Target, ImputationMethod)],
) -> Result<Vec<Option<Vec<Option<FittedModel>>>>> {
    let state = State::from_source(source, counts);
    let mut warm = Warm::new();
    targets
        .iter()
        .enumerate()
        .map(|(ti, &(t, method))| {
            let fit_rows: Vec<usize> = (0..source.n()).filter(|&r| observed_target(source, t, r)).collect();
            let complete = fit_rows
                .iter()
                .all(|&r| targets.iter().all(|&(u, _)| observed_target(source, u, r)));
            if method == ImputationMethod::Normal || !complete {
                return Ok(None);
            }
            let cols = State::columns(source, t);
            let predictors = other_predictors(source, t);
            fit_levels(source, &state, &fit_rows, &cols, &predictors, &mut warm, ti).map(Some)
        })
        .collect()
}

/// Imputes distinct rows with integer multiplicities. Returns `cfg.m`
/// completed datasets; imputation `j` draws from stream `(seed, j)`.
pub fn impute_rows(
    data: &ObservedDataset,
    counts: &[f64],
    cfg: &ImputationConfig,
    seed: u64,
) -> Result<Vec<ImputedRows>> {
    cfg.validate()?;
    let int_counts: Vec<u64> = counts
        .iter()
        .map(|&c| {
            if c >= 0.0 && c.fract() == 0.0 {
                Ok(c as u64)
            } else {
                Err(Error::InvalidConfig(format!(
                    "imputation needs integer multiplicities, got {c}"
                )))
            }
        })
        .collect::<Result<_>>()?;
    // restrict to rows that are present
    let present: Vec<usize> = (0..data.n()).filter(|&r| int_counts[r] > 0).collect();
    let source = data.select(&present);
    let source_counts: Vec<u64> = present.iter().map(|&r| int_counts[r]).collect();
    let targets = sweep_targets(&source, cfg)?;
    let fixed = fixed_models(&source, &source_counts, &targets)?;
    (0..cfg.m)
        .map(|j| {
            let mut rng = rng::stream(seed, j as u64);
            let mut out = if targets.is_empty() {
                ImputedRows {
                    data: source.clone(),
                    counts: source_counts.iter().map(|&c| c as f64).collect(),
                    origin: (0..source.n()).collect(),
                }
            } else {
                impute_one(&source, &source_counts, &targets, &fixed, cfg.max_sweeps, &mut rng)?
            };
            for o in &mut out.origin {
                *o = present[*o];
            }
            Ok(out)
        })
        .collect()
}

/// Imputes a unit-level dataset, returning `cfg.m` completed copies with
/// units in their original order and every observed cell unchanged.
pub fn impute(data: &ObservedDataset, cfg: &ImputationConfig) -> Result<Vec<ObservedDataset>> {
    let compressed = data.compress();
    let sets = impute_rows(&compressed.data, &compressed.counts, cfg, cfg.seed)?;
    let mut units_of_row: Vec<Vec<usize>> = vec![Vec::new(); compressed.data.n()];
    for (i, &r) in compressed.unit_rows.iter().enumerate() {
        units_of_row[r].push(i);
    }
    Ok(sets
        .into_iter()
        .map(|set| {
            let mut source_of_unit = vec![0; data.n()];
            let mut next = vec![0usize; compressed.data.n()];
            for (e, (&o, &c)) in set.origin.iter().zip(&set.counts).enumerate() {
                for _ in 0..c as usize {
                    source_of_unit[units_of_row[o][next[o]]] = e;
                    next[o] += 1;
                }
            }
            set.data.select(&source_of_unit)
        })
        .collect())
}
