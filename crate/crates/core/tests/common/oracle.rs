//! Direct summation over discrete covariate cells.

use super::cond_mean;
use tmle_mnar::data::ObservedDataset;

pub fn cells(q: usize) -> Vec<Vec<f64>> {
    (0..1usize << q)
        .map(|b| (0..q).map(|k| ((b >> k) & 1) as f64).collect())
        .collect()
}

pub fn m(d: &ObservedDataset, k: usize, i: usize) -> Option<f64> {
    d.partial_value(k, i)
}

/// Sum over cells of the block formula: outcome mean among fully observed
/// units, averaged over the covariate law among units with all covariates
/// observed, then over L_O.
pub fn oracle_block(d: &ObservedDataset, a: f64) -> f64 {
    let n = d.n();
    let q = d.q();
    let lo = d.observed_column(0);
    let mut psi = 0.0;
    for l0 in [0.0, 1.0] {
        let (p_lo, _) = cond_mean(n, |_| true, |i| f64::from(lo[i] == l0));
        let all_obs = |i: usize| (0..q).all(|k| m(d, k, i).is_some());
        let in_cell = |i: usize, cell: &[f64]| (0..q).all(|k| m(d, k, i) == Some(cell[k]));
        let mut inner = 0.0;
        for cell in cells(q) {
            let (p_cell, _) = cond_mean(n, |i| lo[i] == l0 && all_obs(i), |i| f64::from(in_cell(i, &cell)));
            if p_cell == 0.0 {
                continue;
            }
            let (t1, c) = cond_mean(
                n,
                |i| lo[i] == l0 && in_cell(i, &cell) && d.exposure(i) == Some(a),
                |i| d.outcome()[i],
            );
            assert!(c > 0);
            inner += p_cell * t1;
        }
        psi += p_lo * inner;
    }
    psi
}

/// Sum over cells of the sequential formula under the identity ordering.
pub fn oracle_sequential(d: &ObservedDataset, a: f64) -> f64 {
    let n = d.n();
    let lo = d.observed_column(0);
    // value of T_k at a prefix cell
    fn t(d: &ObservedDataset, a: f64, l0: f64, prefix: &mut Vec<f64>) -> f64 {
        let n = d.n();
        let q = d.q();
        let lo = d.observed_column(0);
        let k = prefix.len();
        let matches =
            |i: usize, upto: usize, p: &[f64]| lo[i] == l0 && (0..upto).all(|j| d.partial_value(j, i) == Some(p[j]));
        if k == q {
            let (v, c) = cond_mean(
                n,
                |i| matches(i, q, prefix) && d.exposure(i) == Some(a),
                |i| d.outcome()[i],
            );
            assert!(c > 0);
            return v;
        }
        let mut total = 0.0;
        for v in [0.0, 1.0] {
            let (p, _) = cond_mean(
                n,
                |i| matches(i, k, prefix) && d.partial_value(k, i).is_some(),
                |i| f64::from(d.partial_value(k, i) == Some(v)),
            );
            if p == 0.0 {
                continue;
            }
            prefix.push(v);
            total += p * t(d, a, l0, prefix);
            prefix.pop();
        }
        total
    }
    let mut psi = 0.0;
    for l0 in [0.0, 1.0] {
        let (p_lo, _) = cond_mean(n, |_| true, |i| f64::from(lo[i] == l0));
        psi += p_lo * t(d, a, l0, &mut Vec::new());
    }
    psi
}

/// Plug-in standardisation on complete data.
pub fn g_formula(d: &ObservedDataset, a: f64) -> f64 {
    let n = d.n();
    let q = d.q();
    let lo = d.observed_column(0);
    let mut psi = 0.0;
    for l0 in [0.0, 1.0] {
        for cell in cells(q) {
            let in_cell = |i: usize| lo[i] == l0 && (0..q).all(|k| m(d, k, i) == Some(cell[k]));
            let (p, _) = cond_mean(n, |_| true, |i| f64::from(in_cell(i)));
            if p == 0.0 {
                continue;
            }
            let (t, _) = cond_mean(n, |i| in_cell(i) && d.exposure(i) == Some(a), |i| d.outcome()[i]);
            psi += p * t;
        }
    }
    psi
}
