//! Observed-data representation, missingness transformations and CSV I/O.
//!
//! A unit carries a fully observed binary outcome, a possibly missing binary
//! exposure, fully observed covariates `L_O` and `q` partially observed
//! covariate variables `L_M`. A partially observed variable may span several
//! indicator columns (a pre-encoded categorical); all of its columns share a
//! single observation flag.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partially observed covariate, possibly spanning several indicator columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialVariable {
    pub name: String,
    pub columns: Vec<String>,
}

impl PartialVariable {
    pub fn single(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            columns: vec![name.clone()],
            name,
        }
    }
}

/// Column roles of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: String,
    pub exposure: String,
    pub observed: Vec<String>,
    pub partial: Vec<PartialVariable>,
}

/// Where a name resolves to inside a [`Schema`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnRef {
    Outcome,
    Exposure,
    Observed(usize),
    /// A whole partially observed variable.
    Variable(usize),
    /// One column of a partially observed variable (flattened index).
    PartialColumn(usize),
}

impl Schema {
    pub fn q(&self) -> usize {
        self.partial.len()
    }

    pub fn partial_column_count(&self) -> usize {
        self.partial.iter().map(|v| v.columns.len()).sum()
    }

    /// Flattened column ranges of each partially observed variable.
    pub fn partial_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.partial
            .iter()
            .map(|v| {
                let r = start..start + v.columns.len();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn partial_column_names(&self) -> impl Iterator<Item = &str> {
        self.partial.iter().flat_map(|v| v.columns.iter().map(String::as_str))
    }

    /// Resolves a column or variable name. Variable names win over column
    /// names when a single-column variable shares its name with its column.
    pub fn lookup(&self, name: &str) -> Option<ColumnRef> {
        if name == self.outcome {
            return Some(ColumnRef::Outcome);
        }
        if name == self.exposure {
            return Some(ColumnRef::Exposure);
        }
        if let Some(j) = self.observed.iter().position(|c| c == name) {
            return Some(ColumnRef::Observed(j));
        }
        if let Some(k) = self.partial.iter().position(|v| v.name == name) {
            return Some(ColumnRef::Variable(k));
        }
        self.partial_column_names()
            .position(|c| c == name)
            .map(ColumnRef::PartialColumn)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        let all = [self.outcome.as_str(), self.exposure.as_str()]
            .into_iter()
            .chain(self.observed.iter().map(String::as_str))
            .chain(self.partial_column_names());
        for name in all {
            if !seen.insert(name) {
                return Err(Error::InvalidDataset(format!(
                    "column `{name}` is assigned more than one role"
                )));
            }
        }
        if let Some(v) = self.partial.iter().find(|v| v.columns.is_empty()) {
            return Err(Error::InvalidDataset(format!(
                "partially observed variable `{}` has no columns",
                v.name
            )));
        }
        Ok(())
    }
}

/// A permutation of the `q` partially observed variables (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CovariateOrder(Vec<usize>);

impl CovariateOrder {
    pub fn identity(q: usize) -> Self {
        Self((0..q).collect())
    }

    pub fn new(order: Vec<usize>, q: usize) -> Result<Self> {
        let order = Self::try_from(order).map_err(Error::InvalidOrdering)?;
        if order.len() != q {
            return Err(Error::InvalidOrdering(format!(
                "ordering has {} entries but there are {q} partially observed variables",
                order.len()
            )));
        }
        Ok(order)
    }

    /// Builds an ordering from variable names.
    pub fn from_names<S: AsRef<str>>(names: &[S], schema: &Schema) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                schema
                    .partial
                    .iter()
                    .position(|v| v.name == n)
                    .ok_or_else(|| Error::UnknownColumn(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx, schema.q())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<usize>> for CovariateOrder {
    type Error = String;

    fn try_from(order: Vec<usize>) -> std::result::Result<Self, String> {
        let mut seen = vec![false; order.len()];
        for &k in &order {
            if k >= order.len() || seen[k] {
                return Err(format!("{order:?} is not a permutation of 0..{}", order.len()));
            }
            seen[k] = true;
        }
        Ok(Self(order))
    }
}

impl From<CovariateOrder> for Vec<usize> {
    fn from(o: CovariateOrder) -> Self {
        o.0
    }
}

/// How missingness indicators are grouped before estimation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MissingnessScheme {
    /// One indicator governs the exposure and every partial covariate.
    SimultaneousBlock,
    /// Exposure indicator separate from a single covariate block indicator.
    SeparateBlock,
    /// Exposure indicator plus one indicator per covariate, in the given order.
    SequentialCovariates { ordering: CovariateOrder },
}

impl MissingnessScheme {
    pub fn apply(&self, data: &ObservedDataset) -> Result<ObservedDataset> {
        match self {
            MissingnessScheme::SimultaneousBlock => Ok(data.collapse_block()),
            MissingnessScheme::SeparateBlock => Ok(data.collapse_covariate_block()),
            MissingnessScheme::SequentialCovariates { ordering } => data.coarsen_monotone(ordering),
        }
    }
}

/// Units of an observed dataset. Missing values are stored as `NaN` and only
/// reachable through accessors returning `Option`.
#[derive(Clone, Debug)]
pub struct ObservedDataset {
    schema: Arc<Schema>,
    ranges: Arc<Vec<Range<usize>>>,
    y: Vec<f64>,
    a: Vec<f64>,
    l_o: Vec<Vec<f64>>,
    l_m: Vec<Vec<f64>>,
}

impl PartialEq for ObservedDataset {
    fn eq(&self, other: &Self) -> bool {
        fn same(x: &[f64], y: &[f64]) -> bool {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits() || a == b)
        }
        self.schema == other.schema
            && same(&self.y, &other.y)
            && same(&self.a, &other.a)
            && self.l_o.len() == other.l_o.len()
            && self.l_o.iter().zip(&other.l_o).all(|(x, y)| same(x, y))
            && self.l_m.len() == other.l_m.len()
            && self.l_m.iter().zip(&other.l_m).all(|(x, y)| same(x, y))
    }
}

fn check_binary(column: &str, unit: usize, v: f64) -> Result<()> {
    if v == 0.0 || v == 1.0 {
        Ok(())
    } else {
        Err(Error::NonBinary {
            column: column.to_string(),
            unit,
            value: v.to_string(),
        })
    }
}

impl ObservedDataset {
    /// Builds a dataset from columns. `l_o` and `l_m` are column-major; `l_m`
    /// columns follow the flattened order of `schema.partial`.
    pub fn new(
        schema: Schema,
        y: Vec<f64>,
        a: Vec<Option<f64>>,
        l_o: Vec<Vec<f64>>,
        l_m: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        schema.validate()?;
        let n = y.len();
        if a.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "exposure has {} entries, outcome has {n}",
                a.len()
            )));
        }
        if l_o.len() != schema.observed.len() || l_m.len() != schema.partial_column_count() {
            return Err(Error::DimensionMismatch(
                "covariate column count disagrees with schema".into(),
            ));
        }
        if l_o.iter().any(|c| c.len() != n) || l_m.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "covariate column length disagrees with outcome".into(),
            ));
        }
        for (i, &v) in y.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::MissingOutcome { unit: i });
            }
            check_binary(&schema.outcome, i, v)?;
        }
        for (i, v) in a.iter().enumerate() {
            if let Some(v) = v {
                check_binary(&schema.exposure, i, *v)?;
            }
        }
        for (j, col) in l_o.iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "fully observed column `{}` has a missing or non-finite value at unit {i}",
                    schema.observed[j]
                )));
            }
        }
        let ranges = schema.partial_ranges();
        for (k, range) in ranges.iter().enumerate() {
            for i in 0..n {
                let present = l_m[range.clone()].iter().filter(|c| c[i].is_some()).count();
                if present != 0 && present != range.len() {
                    return Err(Error::InconsistentMissingness {
                        variable: schema.partial[k].name.clone(),
                        unit: i,
                    });
                }
            }
        }
        let a = a.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let l_m = l_m
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            .collect();
        Ok(Self {
            schema: Arc::new(schema),
            ranges: Arc::new(ranges),
            y,
            a,
            l_o,
            l_m,
        })
    }

    /// Number of units.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of partially observed variables.
    pub fn q(&self) -> usize {
        self.schema.q()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn exposure(&self, i: usize) -> Option<f64> {
        let v = self.a[i];
        (!v.is_nan()).then_some(v)
    }

    /// Raw exposure column; missing entries are `NaN`.
    pub fn exposure_raw(&self) -> &[f64] {
        &self.a
    }

    pub fn exposure_observed(&self, i: usize) -> bool {
        !self.a[i].is_nan()
    }

    pub fn observed_column(&self, j: usize) -> &[f64] {
        &self.l_o[j]
    }

    pub fn observed_columns(&self) -> &[Vec<f64>] {
        &self.l_o
    }

    /// Raw partial column (flattened index); missing entries are `NaN`.
    pub fn partial_column(&self, c: usize) -> &[f64] {
        &self.l_m[c]
    }

    pub fn partial_value(&self, c: usize, i: usize) -> Option<f64> {
        let v = self.l_m[c][i];
        (!v.is_nan()).then_some(v)
    }

    pub fn variable_columns(&self, k: usize) -> Range<usize> {
        self.ranges[k].clone()
    }

    pub fn variable_observed(&self, k: usize, i: usize) -> bool {
        !self.l_m[self.ranges[k].start][i].is_nan()
    }

    /// Product of all covariate observation indicators.
    pub fn covariates_observed(&self, i: usize) -> bool {
        (0..self.q()).all(|k| self.variable_observed(k, i))
    }

    /// True when the exposure and every covariate are observed.
    pub fn unit_complete(&self, i: usize) -> bool {
        self.exposure_observed(i) && self.covariates_observed(i)
    }

    pub fn is_complete(&self) -> bool {
        (0..self.n()).all(|i| self.unit_complete(i))
    }

    /// Subset (or resample) of units, in the given order.
    pub fn select(&self, units: &[usize]) -> Self {
        let pick = |col: &[f64]| units.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Self {
            schema: self.schema.clone(),
            ranges: self.ranges.clone(),
            y: pick(&self.y),
            a: pick(&self.a),
            l_o: self.l_o.iter().map(|c| pick(c)).collect(),
            l_m: self.l_m.iter().map(|c| pick(c)).collect(),
        }
    }

    fn drop_variable(&mut self, k: usize, i: usize) {
        for c in self.ranges[k].clone() {
            self.l_m[c][i] = f64::NAN;
        }
    }

    /// Treats each covariate as missing whenever a covariate earlier in
    /// `ordering` is missing.
    pub fn coarsen_monotone(&self, ordering: &CovariateOrder) -> Result<Self> {
        if ordering.len() != self.q() {
            return Err(Error::InvalidOrdering(format!(
                "ordering has {} entries but there are {} partially observed variables",
                ordering.len(),
                self.q()
            )));
        }
        let mut out = self.clone();
        for i in 0..self.n() {
            let mut lost = false;
            for &k in ordering.as_slice() {
                if lost {
                    out.drop_variable(k, i);
                } else if !self.variable_observed(k, i) {
                    lost = true;
                }
            }
        }
        Ok(out)
    }

    /// Single indicator `R = R_A * prod_k R_Lk` governing the exposure and all
    /// partial covariates.
    pub fn collapse_block(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n() {
            if !self.unit_complete(i) {
                out.a[i] = f64::NAN;
                for k in 0..self.q() {
                    out.drop_variable(k, i);
                }
            }
        }
        out
    }

    /// Single indicator `R_L = prod_k R_Lk` for all partial covariates; the
    /// exposure keeps its own indicator.
    pub fn collapse_covariate_block(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n() {
            if !self.covariates_observed(i) {
                for k in 0..self.q() {
                    out.drop_variable(k, i);
                }
            }
        }
        out
    }

    /// Merges identical units into distinct rows with multiplicities.
    pub fn compress(&self) -> Compressed {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut representatives = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut unit_rows = Vec::with_capacity(self.n());
        let mut key = Vec::new();
        for i in 0..self.n() {
            key.clear();
            key.push(self.y[i].to_bits());
            key.push(self.a[i].to_bits());
            key.extend(self.l_o.iter().map(|c| c[i].to_bits()));
            key.extend(self.l_m.iter().map(|c| c[i].to_bits()));
            let row = match index.get(&key) {
                Some(&r) => r,
                None => {
                    let r = representatives.len();
                    index.insert(key.clone(), r);
                    representatives.push(i);
                    counts.push(0.0);
                    r
                }
            };
            counts[row] += 1.0;
            unit_rows.push(row);
        }
        Compressed {
            data: self.select(&representatives),
            counts,
            unit_rows,
        }
    }

    pub(crate) fn from_raw(
        schema: Arc<Schema>,
        y: Vec<f64>,
        a: Vec<f64>,
        l_o: Vec<Vec<f64>>,
        l_m: Vec<Vec<f64>>,
    ) -> Self {
        let ranges = Arc::new(schema.partial_ranges());
        Self {
            schema,
            ranges,
            y,
            a,
            l_o,
            l_m,
        }
    }

    pub(crate) fn schema_arc(&self) -> Arc<Schema> {
        self.schema.clone()
    }
}

/// Distinct rows of a dataset with their multiplicities.
#[derive(Clone, Debug)]
pub struct Compressed {
    pub data: ObservedDataset,
    pub counts: Vec<f64>,
    /// Row of `data` holding each original unit.
    pub unit_rows: Vec<usize>,
}

impl Compressed {
    /// Per-unit values from per-row values.
    pub fn expand(&self, per_row: &[f64]) -> Vec<f64> {
        self.unit_rows.iter().map(|&r| per_row[r]).collect()
    }
}

/// A partially observed variable in a CSV column-role mapping: either a single
/// column or a named group of indicator columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartialSpec {
    Column(String),
    Group { name: String, columns: Vec<String> },
}

impl From<&PartialSpec> for PartialVariable {
    fn from(spec: &PartialSpec) -> Self {
        match spec {
            PartialSpec::Column(c) => PartialVariable::single(c.clone()),
            PartialSpec::Group { name, columns } => PartialVariable {
                name: name.clone(),
                columns: columns.clone(),
            },
        }
    }
}

/// Column-role mapping for CSV ingestion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    pub outcome: String,
    pub exposure: String,
    #[serde(default)]
    pub observed: Vec<String>,
    #[serde(default)]
    pub partial: Vec<PartialSpec>,
    /// Token marking a missing cell in addition to the empty string.
    #[serde(default)]
    pub missing_token: String,
}

impl CsvConfig {
    pub fn schema(&self) -> Schema {
        Schema {
            outcome: self.outcome.clone(),
            exposure: self.exposure.clone(),
            observed: self.observed.clone(),
            partial: self.partial.iter().map(PartialVariable::from).collect(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, config: &CsvConfig) -> Result<ObservedDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(file, config).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Reads a dataset from any CSV source with a header row.
pub fn read_csv<R: Read>(reader: R, config: &CsvConfig) -> Result<ObservedDataset> {
    let schema = config.schema();
    let csv_err = |source| Error::Csv {
        path: "<reader>".into(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let y_idx = find(&schema.outcome)?;
    let a_idx = find(&schema.exposure)?;
    let lo_idx = schema.observed.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let lm_names: Vec<String> = schema.partial_column_names().map(str::to_string).collect();
    let lm_idx = lm_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let is_missing = |cell: &str| cell.is_empty() || cell == config.missing_token;
    let parse = |column: &str, unit: usize, cell: &str| -> Result<Option<f64>> {
        if is_missing(cell) {
            return Ok(None);
        }
        cell.trim().parse::<f64>().map(Some).map_err(|_| Error::NonNumeric {
            column: column.to_string(),
            unit,
            value: cell.to_string(),
        })
    };

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut l_o = vec![Vec::new(); lo_idx.len()];
    let mut l_m = vec![Vec::new(); lm_idx.len()];
    for (unit, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let cell = |j: usize| record.get(j).unwrap_or("");
        match parse(&schema.outcome, unit, cell(y_idx))? {
            Some(v) => y.push(v),
            None => return Err(Error::MissingOutcome { unit }),
        }
        a.push(parse(&schema.exposure, unit, cell(a_idx))?);
        for (col, (&j, name)) in l_o.iter_mut().zip(lo_idx.iter().zip(&schema.observed)) {
            match parse(name, unit, cell(j))? {
                Some(v) => col.push(v),
                None => {
                    return Err(Error::InvalidDataset(format!(
                        "fully observed column `{name}` is missing at unit {unit}"
                    )))
                }
            }
        }
        for (col, (&j, name)) in l_m.iter_mut().zip(lm_idx.iter().zip(&lm_names)) {
            col.push(parse(name, unit, cell(j))?);
        }
    }
    ObservedDataset::new(schema, y, a, l_o, l_m)
}

/// Writes the dataset as CSV (outcome, exposure, observed, partial columns).
pub fn write_csv<W: Write>(data: &ObservedDataset, writer: W, missing_token: &str) -> Result<()> {
    let schema = data.schema();
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |source| Error::Csv {
        path: "<writer>".into(),
        source,
    };
    let header: Vec<&str> = [schema.outcome.as_str(), schema.exposure.as_str()]
        .into_iter()
        .chain(schema.observed.iter().map(String::as_str))
        .chain(schema.partial_column_names())
        .collect();
    wtr.write_record(&header).map_err(csv_err)?;
    let fmt = |v: f64| {
        if v.is_nan() {
            missing_token.to_string()
        } else {
            v.to_string()
        }
    };
    for i in 0..data.n() {
        let row: Vec<String> = [data.y[i], data.a[i]]
            .into_iter()
            .chain(data.l_o.iter().map(|c| c[i]))
            .chain(data.l_m.iter().map(|c| c[i]))
            .map(fmt)
            .collect();
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(q: usize) -> Schema {
        Schema {
            outcome: "y".into(),
            exposure: "a".into(),
            observed: vec!["lo".into()],
            partial: (1..=q).map(|k| PartialVariable::single(format!("m{k}"))).collect(),
        }
    }

    fn dataset(r_l: &[&[bool]]) -> ObservedDataset {
        let n = r_l.len();
        let q = r_l[0].len();
        let l_m = (0..q)
            .map(|k| (0..n).map(|i| r_l[i][k].then_some(1.0)).collect())
            .collect();
        ObservedDataset::new(schema(q), vec![0.0; n], vec![Some(1.0); n], vec![vec![0.0; n]], l_m).unwrap()
    }

    fn flags(d: &ObservedDataset, i: usize) -> Vec<bool> {
        (0..d.q()).map(|k| d.variable_observed(k, i)).collect()
    }

    #[test]
    fn coarsen_drops_after_first_gap() {
        let d = dataset(&[&[true, false, true], &[true, true, true]]);
        let c = d.coarsen_monotone(&CovariateOrder::identity(3)).unwrap();
        assert_eq!(flags(&c, 0), vec![true, false, false]);
        assert_eq!(flags(&c, 1), vec![true, true, true]);
        // source untouched
        assert_eq!(flags(&d, 0), vec![true, false, true]);
    }

    #[test]
    fn coarsen_respects_permuted_order() {
        // ordering (2,3,1) in 1-based terms
        let d = dataset(&[&[false, true, true]]);
        let order = CovariateOrder::new(vec![1, 2, 0], 3).unwrap();
        let c = d.coarsen_monotone(&order).unwrap();
        assert_eq!(flags(&c, 0), vec![false, true, true]);
    }

    #[test]
    fn collapse_block_drops_everything() {
        let d = dataset(&[&[true, true], &[true, false]]);
        let c = d.collapse_block();
        assert!(c.unit_complete(0));
        assert!(!c.exposure_observed(1));
        assert_eq!(flags(&c, 1), vec![false, false]);
    }

    #[test]
    fn collapse_block_counts_complete_units() {
        let mut rows: Vec<&[bool]> = vec![&[true, true]; 7];
        rows.extend([&[false, true][..], &[true, false], &[false, false]]);
        let c = dataset(&rows).collapse_block();
        assert_eq!((0..c.n()).filter(|&i| c.unit_complete(i)).count(), 7);
    }

    #[test]
    fn ordering_must_be_permutation() {
        assert!(CovariateOrder::new(vec![0, 0], 2).is_err());
        assert!(CovariateOrder::new(vec![0, 2], 2).is_err());
        assert!(CovariateOrder::new(vec![1, 0], 3).is_err());
    }

    #[test]
    fn partially_present_group_is_rejected() {
        let s = Schema {
            outcome: "y".into(),
            exposure: "a".into(),
            observed: vec![],
            partial: vec![PartialVariable {
                name: "edu".into(),
                columns: vec!["hs".into(), "college".into()],
            }],
        };
        let err =
            ObservedDataset::new(s, vec![1.0], vec![Some(0.0)], vec![], vec![vec![Some(1.0)], vec![None]]).unwrap_err();
        assert!(matches!(err, Error::InconsistentMissingness { .. }));
    }

    #[test]
    fn compress_merges_duplicates() {
        let d = dataset(&[&[true], &[false], &[true]]);
        let c = d.compress();
        assert_eq!(c.data.n(), 2);
        assert_eq!(c.counts, vec![2.0, 1.0]);
        assert_eq!(c.unit_rows, vec![0, 1, 0]);
    }
}
