//! Influence-function standard errors and the nonparametric bootstrap.

use rand::Rng;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::ObservedDataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_rows, EstimateResult, EstimatorConfig};
use crate::rng;

/// Normal quantile used for influence-function intervals.
pub const Z_975: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    IfVariance,
    BootstrapPercentile,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceResult {
    pub method: InferenceMethod,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Requested resamples (bootstrap only).
    pub b: Option<usize>,
    pub seed: Option<u64>,
    /// Resamples dropped because the estimator failed on them.
    pub failed: usize,
}

/// Standard error from influence values: `sqrt(mean(IF^2) / n)`.
pub fn if_se(influence: &[f64]) -> Result<f64> {
    if influence.is_empty() {
        return Err(Error::NoInfluenceValues);
    }
    let n = influence.len() as f64;
    Ok((influence.iter().map(|v| v * v).sum::<f64>() / n / n).sqrt())
}

/// Same as [`if_se`] for per-row influence values with multiplicities.
pub fn if_se_rows(influence: &[f64], weights: &[f64]) -> Result<f64> {
    if influence.is_empty() {
        return Err(Error::NoInfluenceValues);
    }
    let n: f64 = weights.iter().sum();
    let ss: f64 = influence.iter().zip(weights).map(|(v, w)| w * v * v).sum();
    Ok((ss / n / n).sqrt())
}

pub fn if_variance(result: &EstimateResult) -> Result<InferenceResult> {
    let se = if_se(&result.influence_values)?;
    Ok(InferenceResult {
        method: InferenceMethod::IfVariance,
        se,
        ci_low: result.psi_hat - Z_975 * se,
        ci_high: result.psi_hat + Z_975 * se,
        b: None,
        seed: None,
        failed: 0,
    })
}

/// Quantile of sorted values by linear interpolation between order
/// statistics (`(n - 1) p` positioning).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Arithmetic mean, accumulated around the first value so a constant sample
/// returns that constant exactly.
pub fn mean(values: &[f64]) -> f64 {
    match values.first() {
        None => f64::NAN,
        Some(&v0) => v0 + values.iter().map(|v| v - v0).sum::<f64>() / values.len() as f64,
    }
}

/// Sample standard deviation with divisor `n - 1` (0 for fewer than 2 values).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = mean(values);
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Replicates of one statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct Replicates {
    /// Successful replicate values in resample order.
    pub values: Vec<f64>,
    pub failed: usize,
    pub requested: usize,
}

impl Replicates {
    pub fn percentile_interval(&self, seed: u64) -> Result<InferenceResult> {
        if self.failed * 10 > self.requested || self.values.is_empty() {
            return Err(Error::TooManyFailedResamples {
                failed: self.failed,
                requested: self.requested,
            });
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(InferenceResult {
            method: InferenceMethod::BootstrapPercentile,
            se: sample_sd(&self.values),
            ci_low: quantile_sorted(&sorted, 0.025),
            ci_high: quantile_sorted(&sorted, 0.975),
            b: Some(self.requested),
            seed: Some(seed),
            failed: self.failed,
        })
    }
}

/// Multiplicities of one resample of units, by row.
fn resample_counts(unit_rows: &[usize], n_rows: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = unit_rows.len();
    let mut counts = vec![0.0; n_rows];
    for _ in 0..n {
        counts[unit_rows[rng.random_range(0..n)]] += 1.0;
    }
    counts
}

/// Runs `b` unit-level resamples in parallel. Each resample `j` draws its
/// units and a statistic seed from stream `(seed, j)`, so results do not
/// depend on the thread count. `stat` maps row multiplicities and a seed to
/// one value per statistic (`None` marks a failure).
pub fn bootstrap_rows_multi<F>(
    unit_rows: &[usize],
    n_rows: usize,
    b: usize,
    seed: u64,
    k: usize,
    stat: F,
) -> Vec<Replicates>
where
    F: Fn(&[f64], u64) -> Vec<Option<f64>> + Sync,
{
    let draws: Vec<Vec<Option<f64>>> = (0..b)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(seed, j as u64);
            let counts = resample_counts(unit_rows, n_rows, &mut rng);
            let stat_seed = rng.next_u64();
            stat(&counts, stat_seed)
        })
        .collect();
    (0..k)
        .map(|s| {
            let values: Vec<f64> = draws.iter().filter_map(|d| d[s]).collect();
            Replicates {
                failed: b - values.len(),
                values,
                requested: b,
            }
        })
        .collect()
}

/// Percentile bootstrap of an arbitrary statistic of a dataset. The statistic
/// receives the distinct rows, their resampled multiplicities and a seed.
pub fn bootstrap_statistic<F>(data: &ObservedDataset, b: usize, seed: u64, stat: F) -> Result<InferenceResult>
where
    F: Fn(&ObservedDataset, &[f64], u64) -> Result<f64> + Sync,
{
    if b < 100 {
        return Err(Error::InvalidConfig(format!("bootstrap needs b >= 100, got {b}")));
    }
    let c = data.compress();
    let reps = bootstrap_rows_multi(&c.unit_rows, c.data.n(), b, seed, 1, |w, s| {
        vec![stat(&c.data, w, s).ok()]
    });
    reps[0].percentile_interval(seed)
}

/// Percentile bootstrap of an estimator, refitting every nuisance model (and
/// redoing the imputations) on each resample.
pub fn bootstrap(data: &ObservedDataset, cfg: &EstimatorConfig, b: usize, seed: u64) -> Result<InferenceResult> {
    bootstrap_statistic(data, b, seed, |rows, w, s| {
        estimate_rows(rows, w, cfg, s).map(|e| e.psi)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn if_se_by_hand() {
        assert_eq!(if_se(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((if_se(&[1.0, -1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(if_se(&[]), Err(Error::NoInfluenceValues)));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn sd_of_three() {
        assert!((sample_sd(&[0.30, 0.28, 0.29]) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn failures_beyond_a_tenth_are_fatal() {
        let r = Replicates {
            values: vec![0.0; 89],
            failed: 11,
            requested: 100,
        };
        assert!(matches!(
            r.percentile_interval(0),
            Err(Error::TooManyFailedResamples {
                failed: 11,
                requested: 100
            })
        ));
        let ok = Replicates {
            values: vec![0.5; 90],
            failed: 10,
            requested: 100,
        };
        let ci = ok.percentile_interval(0).unwrap();
        assert_eq!((ci.ci_low, ci.ci_high, ci.se), (0.5, 0.5, 0.0));
    }
}
