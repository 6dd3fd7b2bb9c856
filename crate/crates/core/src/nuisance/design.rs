//! Design matrices built from dataset columns.

use std::collections::BTreeMap;

use crate::data::ObservedDataset;
use crate::glm::Matrix;

/// A model input: a whole variable, possibly spanning several columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predictor {
    Outcome,
    Exposure,
    Observed(usize),
    Partial(usize),
}

impl Predictor {
    fn push(self, data: &ObservedDataset, i: usize, exposure: Option<f64>, out: &mut Vec<f64>) {
        match self {
            Predictor::Outcome => out.push(data.outcome()[i]),
            Predictor::Exposure => out.push(exposure.unwrap_or(data.exposure_raw()[i])),
            Predictor::Observed(j) => out.push(data.observed_column(j)[i]),
            Predictor::Partial(k) => out.extend(data.variable_columns(k).map(|c| data.partial_column(c)[i])),
        }
    }

    pub fn name(self, data: &ObservedDataset) -> String {
        let s = data.schema();
        match self {
            Predictor::Outcome => s.outcome.clone(),
            Predictor::Exposure => s.exposure.clone(),
            Predictor::Observed(j) => s.observed[j].clone(),
            Predictor::Partial(k) => s.partial[k].name.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Layout {
    MainEffects {
        interactions: bool,
    },
    /// One indicator per distinct value combination seen at fit time.
    Saturated {
        cells: BTreeMap<Vec<u64>, usize>,
    },
}

/// Recipe turning dataset rows into design rows. Saturated templates
/// freeze their cell list when built, so later predictions reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignTemplate {
    predictors: Vec<Predictor>,
    layout: Layout,
}

fn raw_values(predictors: &[Predictor], data: &ObservedDataset, i: usize, exposure: Option<f64>, buf: &mut Vec<f64>) {
    buf.clear();
    for p in predictors {
        p.push(data, i, exposure, buf);
    }
}

fn cell_key(values: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same cell
    values.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl DesignTemplate {
    pub fn main_effects(predictors: Vec<Predictor>, interactions: bool) -> Self {
        Self {
            predictors,
            layout: Layout::MainEffects { interactions },
        }
    }

    /// Saturated template over the cells present in `rows`.
    pub fn saturated(predictors: Vec<Predictor>, data: &ObservedDataset, rows: &[usize]) -> Self {
        let mut keys = std::collections::BTreeSet::new();
        let mut buf = Vec::new();
        for &i in rows {
            raw_values(&predictors, data, i, None, &mut buf);
            keys.insert(cell_key(&buf));
        }
        let cells = keys.into_iter().enumerate().map(|(c, k)| (k, c)).collect();
        Self {
            predictors,
            layout: Layout::Saturated { cells },
        }
    }

    pub fn predictors(&self) -> &[Predictor] {
        &self.predictors
    }

    pub fn is_saturated(&self) -> bool {
        matches!(self.layout, Layout::Saturated { .. })
    }

    /// Design rows for `rows`; `exposure` replaces the exposure value when set.
    pub fn build(&self, data: &ObservedDataset, rows: &[usize], exposure: Option<f64>) -> Matrix {
        let mut buf = Vec::new();
        let mut out = Vec::new();
        let mut cols = 0;
        for &i in rows {
            raw_values(&self.predictors, data, i, exposure, &mut buf);
            let start = out.len();
            match &self.layout {
                Layout::MainEffects { interactions } => {
                    out.push(1.0);
                    out.extend_from_slice(&buf);
                    if *interactions {
                        let mut offsets = Vec::with_capacity(self.predictors.len() + 1);
                        offsets.push(0);
                        let mut tmp = Vec::new();
                        for p in &self.predictors {
                            tmp.clear();
                            p.push(data, i, exposure, &mut tmp);
                            offsets.push(offsets.last().unwrap() + tmp.len());
                        }
                        for a in 0..self.predictors.len() {
                            for b in a + 1..self.predictors.len() {
                                for x in offsets[a]..offsets[a + 1] {
                                    for y in offsets[b]..offsets[b + 1] {
                                        out.push(buf[x] * buf[y]);
                                    }
                                }
                            }
                        }
                    }
                }
                Layout::Saturated { cells } => {
                    let base = out.len();
                    out.resize(base + cells.len(), 0.0);
                    if let Some(&c) = cells.get(&cell_key(&buf)) {
                        out[base + c] = 1.0;
                    }
                }
            }
            cols = out.len() - start;
        }
        if rows.is_empty() {
            cols = self.width(data);
        }
        Matrix::new(rows.len(), cols, out).expect("design rows have equal width")
    }

    /// Cell index of each row under a saturated template (`None` for unseen
    /// cells); `None` overall for main-effects templates.
    pub fn cells_of(&self, data: &ObservedDataset, rows: &[usize]) -> Option<Vec<Option<usize>>> {
        let Layout::Saturated { cells } = &self.layout else {
            return None;
        };
        let mut buf = Vec::new();
        Some(
            rows.iter()
                .map(|&i| {
                    raw_values(&self.predictors, data, i, None, &mut buf);
                    cells.get(&cell_key(&buf)).copied()
                })
                .collect(),
        )
    }

    pub fn width(&self, data: &ObservedDataset) -> usize {
        match &self.layout {
            Layout::Saturated { cells } => cells.len(),
            Layout::MainEffects { interactions } => {
                let widths: Vec<usize> = self
                    .predictors
                    .iter()
                    .map(|p| match p {
                        Predictor::Partial(k) => data.variable_columns(*k).len(),
                        _ => 1,
                    })
                    .collect();
                let mut w = 1 + widths.iter().sum::<usize>();
                if *interactions {
                    for a in 0..widths.len() {
                        for b in a + 1..widths.len() {
                            w += widths[a] * widths[b];
                        }
                    }
                }
                w
            }
        }
    }
}
