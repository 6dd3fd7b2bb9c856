//! Weighted GLM fitting with offsets (logit and identity links) and the
//! one-parameter logistic fluctuation used by every targeting step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Linear predictors are kept inside `[-ETA_MAX, ETA_MAX]` on the logit scale.
pub const ETA_MAX: f64 = 30.0;
/// Bound on fluctuation parameters.
pub const EPSILON_MAX: f64 = 10.0;

const TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 100;
const RIDGE: f64 = 1e-8;
const RCOND_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    Logit,
    Identity,
}

/// Dense row-major design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// A single column of ones.
    pub fn intercept(rows: usize) -> Self {
        Self {
            rows,
            cols: 1,
            data: vec![1.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn mul(&self, beta: &[f64], offset: Option<&[f64]>) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                let dot: f64 = self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
                dot + offset.map_or(0.0, |o| o[i])
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlmFit {
    pub link: Link,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// A ridge term was needed to solve at least one step.
    pub ridged: bool,
    /// Some linear predictors reached the `ETA_MAX` bound.
    pub separated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluctuationFit {
    pub epsilon: f64,
    pub converged: bool,
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn clamp_eta(eta: f64) -> f64 {
    eta.clamp(-ETA_MAX, ETA_MAX)
}

/// Logit of a probability, bounded to the linear-predictor range.
pub fn bounded_logit(p: f64) -> f64 {
    clamp_eta(logit(p))
}

fn check_inputs(design: &Matrix, response: &[f64], weights: &[f64], offset: Option<&[f64]>) -> Result<()> {
    let n = design.rows();
    if response.len() != n || weights.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response/weights/offset lengths differ"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(Error::NoPositiveWeight);
    }
    Ok(())
}

fn logit_deviance(response: &[f64], weights: &[f64], eta: &[f64]) -> f64 {
    let mut dev = 0.0;
    for ((&y, &w), &e) in response.iter().zip(weights).zip(eta) {
        if w == 0.0 {
            continue;
        }
        let e = clamp_eta(e);
        // log(1 + exp(e)) computed stably
        let softplus = if e > 0.0 {
            e + (-e).exp().ln_1p()
        } else {
            e.exp().ln_1p()
        };
        dev += w * (softplus - y * e);
    }
    2.0 * dev
}

/// Solves `h * x = g` for the active columns; inactive coordinates stay 0.
/// The system is equilibrated to unit diagonal before factorising, so the
/// conditioning check and the ridge do not depend on column or weight scale.
/// Returns the solution and whether a ridge was needed.
fn solve_active(h: &[f64], g: &[f64], p: usize, active: &[usize]) -> Result<(Vec<f64>, bool)> {
    let k = active.len();
    let mut x = vec![0.0; p];
    if k == 0 {
        return Ok((x, false));
    }
    let scale: Vec<f64> = active.iter().map(|&j| h[j * p + j].sqrt()).collect();
    let sub = DMatrix::from_fn(k, k, |r, c| h[active[r] * p + active[c]] / (scale[r] * scale[c]));
    let rhs = DVector::from_iterator(k, active.iter().zip(&scale).map(|(&j, s)| g[j] / s));
    let well_conditioned = |ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let d = ch.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
        hi > 0.0 && (lo * lo) / (hi * hi) >= RCOND_MIN
    };
    let mut ridged = false;
    let sol = match sub.clone().cholesky().filter(|ch| well_conditioned(ch)) {
        Some(ch) => ch.solve(&rhs),
        None => {
            ridged = true;
            let ch = (sub + DMatrix::identity(k, k) * RIDGE)
                .cholesky()
                .ok_or(Error::SingularDesign)?;
            ch.solve(&rhs)
        }
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign);
    }
    for (r, &j) in active.iter().enumerate() {
        x[j] = sol[r] / scale[r];
    }
    Ok((x, ridged))
}

/// Weighted normal equations restricted to rows with positive working weight.
fn normal_equations(design: &Matrix, work: &[f64], resid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = design.cols();
    let mut h = vec![0.0; p * p];
    let mut g = vec![0.0; p];
    for i in 0..design.rows() {
        let w = work[i];
        if w == 0.0 {
            continue;
        }
        let x = design.row(i);
        for a in 0..p {
            if x[a] == 0.0 {
                continue;
            }
            let wa = w * x[a];
            g[a] += wa * resid[i];
            for b in a..p {
                h[a * p + b] += wa * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[a * p + b] = h[b * p + a];
        }
    }
    (h, g)
}

fn active_columns(h: &[f64], p: usize) -> Vec<usize> {
    (0..p).filter(|&j| h[j * p + j] > 0.0).collect()
}

/// Fits a weighted GLM by IRLS. Logit fits accept fractional responses in
/// `[0, 1]`; the score equations are those of the Bernoulli likelihood.
pub fn fit_glm(
    design: &Matrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    link: Link,
) -> Result<GlmFit> {
    fit_glm_from(design, response, weights, offset, link, None)
}

/// As [`fit_glm`], starting the iterations at `start` when given.
pub fn fit_glm_from(
    design: &Matrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    link: Link,
    start: Option<&[f64]>,
) -> Result<GlmFit> {
    check_inputs(design, response, weights, offset)?;
    if link == Link::Logit && response.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::InvalidConfig("logit-link responses must lie in [0, 1]".into()));
    }
    match link {
        Link::Identity => fit_identity(design, response, weights, offset),
        Link::Logit => fit_logit(design, response, weights, offset, start),
    }
}

fn fit_identity(design: &Matrix, response: &[f64], weights: &[f64], offset: Option<&[f64]>) -> Result<GlmFit> {
    let p = design.cols();
    let resid: Vec<f64> = response
        .iter()
        .enumerate()
        .map(|(i, y)| y - offset.map_or(0.0, |o| o[i]))
        .collect();
    let (h, g) = normal_equations(design, weights, &resid);
    let active = active_columns(&h, p);
    let (beta, ridged) = solve_active(&h, &g, p, &active)?;
    let fitted = design.mul(&beta, offset);
    let deviance = response
        .iter()
        .zip(&fitted)
        .zip(weights)
        .map(|((y, f), w)| w * (y - f).powi(2))
        .sum();
    Ok(GlmFit {
        link: Link::Identity,
        coefficients: beta,
        converged: true,
        iterations: 1,
        deviance,
        ridged,
        separated: false,
    })
}

fn fit_logit(
    design: &Matrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    start: Option<&[f64]>,
) -> Result<GlmFit> {
    let p = design.cols();
    let n = design.rows();
    let mut beta = match start {
        Some(s) if s.len() == p && s.iter().all(|v| v.is_finite()) => s.to_vec(),
        _ => vec![0.0; p],
    };
    let mut eta = design.mul(&beta, offset);
    let mut deviance = logit_deviance(response, weights, &eta);
    let mut ridged = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut work = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut separated = false;

    while iterations < MAX_ITER {
        iterations += 1;
        separated = false;
        for i in 0..n {
            let e = eta[i];
            if weights[i] == 0.0 {
                work[i] = 0.0;
                continue;
            }
            if e.abs() >= ETA_MAX {
                // frozen at the bound
                let y = response[i];
                if (e > 0.0 && y < 1.0) || (e < 0.0 && y > 0.0) {
                    // the likelihood pulls back inside: keep the row
                } else {
                    separated = true;
                    work[i] = 0.0;
                    continue;
                }
            }
            let mu = expit(clamp_eta(e));
            work[i] = weights[i] * mu * (1.0 - mu);
            resid[i] = (response[i] - mu) / (mu * (1.0 - mu));
        }
        let (h, g) = normal_equations(design, &work, &resid);
        let active = active_columns(&h, p);
        let (step, r) = solve_active(&h, &g, p, &active)?;
        ridged |= r;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let trial_eta = design.mul(&trial, offset);
            let trial_dev = logit_deviance(response, weights, &trial_eta);
            if trial_dev.is_finite() && trial_dev <= deviance * (1.0 + 1e-12) + 1e-300 {
                accepted = Some((trial, trial_eta, trial_dev));
                break;
            }
            scale *= 0.5;
        }
        let change = step.iter().fold(0.0f64, |m, s| m.max((scale * s).abs()));
        match accepted {
            Some((b, e, d)) => {
                beta = b;
                eta = e;
                deviance = d;
            }
            None => {
                // no descent possible: already at the optimum to machine precision
                converged = true;
                break;
            }
        }
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    if eta.iter().zip(weights).any(|(e, w)| *w > 0.0 && e.abs() >= ETA_MAX) {
        separated = true;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SingularDesign);
    }
    Ok(GlmFit {
        link: Link::Logit,
        coefficients: beta,
        converged: converged && !separated,
        iterations,
        deviance,
        ridged,
        separated,
    })
}

/// Inverse-link predictions; logit predictions lie strictly inside (0, 1).
pub fn predict(fit: &GlmFit, design: &Matrix, offset: Option<&[f64]>) -> Result<Vec<f64>> {
    if design.cols() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, fit has {} coefficients",
            design.cols(),
            fit.coefficients.len()
        )));
    }
    if offset.is_some_and(|o| o.len() != design.rows()) {
        return Err(Error::DimensionMismatch("offset length".into()));
    }
    let eta = design.mul(&fit.coefficients, offset);
    Ok(match fit.link {
        Link::Logit => eta.into_iter().map(|e| expit(clamp_eta(e))).collect(),
        Link::Identity => eta,
    })
}

/// Linear predictor `X beta + offset`, bounded for logit fits.
pub fn linear_predictor(fit: &GlmFit, design: &Matrix, offset: Option<&[f64]>) -> Result<Vec<f64>> {
    if design.cols() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, fit has {} coefficients",
            design.cols(),
            fit.coefficients.len()
        )));
    }
    let eta = design.mul(&fit.coefficients, offset);
    Ok(match fit.link {
        Link::Logit => eta.into_iter().map(clamp_eta).collect(),
        Link::Identity => eta,
    })
}

/// Solves `sum_i w_i (y_i - expit(o_i + eps)) = 0` for `eps`.
///
/// When no root exists inside `[-EPSILON_MAX, EPSILON_MAX]` the parameter is
/// clamped to the nearest bound and `converged` is false.
pub fn fluctuate(response: &[f64], offset_logits: &[f64], weights: &[f64]) -> Result<FluctuationFit> {
    if response.len() != weights.len() || offset_logits.len() != weights.len() {
        return Err(Error::DimensionMismatch("fluctuation inputs differ in length".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::NoPositiveWeight);
    }
    let score = |eps: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut d = 0.0;
        for ((&y, &o), &w) in response.iter().zip(offset_logits).zip(weights) {
            if w == 0.0 {
                continue;
            }
            let mu = expit(o + eps);
            s += w * (y - mu);
            d += w * mu * (1.0 - mu);
        }
        (s / total, d / total)
    };

    let (s_lo, _) = score(-EPSILON_MAX);
    if s_lo <= 0.0 {
        return Ok(FluctuationFit {
            epsilon: -EPSILON_MAX,
            converged: s_lo.abs() < 1e-12,
        });
    }
    let (s_hi, _) = score(EPSILON_MAX);
    if s_hi >= 0.0 {
        return Ok(FluctuationFit {
            epsilon: EPSILON_MAX,
            converged: s_hi.abs() < 1e-12,
        });
    }

    // score is decreasing in eps: keep a bracket with s(lo) > 0 > s(hi)
    let (mut lo, mut hi) = (-EPSILON_MAX, EPSILON_MAX);
    let mut eps = 0.0;
    for _ in 0..200 {
        let (s, d) = score(eps);
        if s == 0.0 {
            return Ok(FluctuationFit {
                epsilon: eps,
                converged: true,
            });
        }
        if s > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let newton = if d > 0.0 { eps + s / d } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let moved = (next - eps).abs();
        eps = next;
        if moved < 1e-15 || (s.abs() < 1e-14 && moved < 1e-12) || hi - lo < 1e-15 {
            break;
        }
    }
    let (s, _) = score(eps);
    Ok(FluctuationFit {
        epsilon: eps,
        converged: s.abs() < 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_intercept_is_mean() {
        let x = Matrix::intercept(4);
        let fit = fit_glm(&x, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4], None, Link::Identity).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.5, epsilon = 1e-12);
        let pred = predict(&fit, &x, None).unwrap();
        assert!(pred.iter().all(|p| (p - 2.5).abs() < 1e-12));
    }

    #[test]
    fn logit_intercept_balanced() {
        let x = Matrix::intercept(4);
        let fit = fit_glm(&x, &[0.0, 1.0, 0.0, 1.0], &[1.0; 4], None, Link::Logit).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_coefficients_predict_half() {
        let fit = GlmFit {
            link: Link::Logit,
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            deviance: 0.0,
            ridged: false,
            separated: false,
        };
        let x = Matrix::from_rows(&[vec![1.0, 3.0], vec![1.0, -2.0]]).unwrap();
        assert_eq!(predict(&fit, &x, None).unwrap(), vec![0.5, 0.5]);
        let bad = Matrix::intercept(2);
        assert!(matches!(predict(&fit, &bad, None), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn separated_cell_is_bounded() {
        // second cell has only zeros
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let fit = fit_glm(&x, &[1.0, 0.0, 0.0, 0.0], &[1.0; 4], None, Link::Logit).unwrap();
        assert!(fit.separated);
        assert!(!fit.converged);
        let p = predict(&fit, &x, None).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-10);
        assert!(p[2] > 0.0 && p[2] < 1e-12);
    }

    #[test]
    fn fluctuation_zero_when_score_vanishes() {
        let f = fluctuate(&[0.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(f.converged);
        assert_eq!(f.epsilon, 0.0);
    }

    #[test]
    fn fluctuation_clamps_without_root() {
        let f = fluctuate(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(f.epsilon, EPSILON_MAX);
        assert!(!f.converged);
        let f = fluctuate(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(f.epsilon, -EPSILON_MAX);
    }

    #[test]
    fn no_positive_weight() {
        let x = Matrix::intercept(2);
        assert!(matches!(
            fit_glm(&x, &[0.0, 1.0], &[0.0, 0.0], None, Link::Logit),
            Err(Error::NoPositiveWeight)
        ));
    }
}
