#![allow(dead_code)]

pub mod oracle;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tmle_mnar::data::{ObservedDataset, PartialVariable, Schema};

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn schema(q: usize) -> Schema {
    Schema {
        outcome: "y".into(),
        exposure: "a".into(),
        observed: vec!["lo".into()],
        partial: (1..=q).map(|k| PartialVariable::single(format!("m{k}"))).collect(),
    }
}

/// Discrete data with binary L_O, q binary partial covariates, exposure
/// missingness depending on covariates and exposure, and sequential
/// covariate missingness.
pub fn discrete(n: usize, q: usize, seed: u64, missing: bool) -> ObservedDataset {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut lo = Vec::new();
    let mut lm: Vec<Vec<Option<f64>>> = vec![Vec::new(); q];
    for _ in 0..n {
        let l0 = f64::from(rng.random_bool(0.45));
        let mut ms = Vec::new();
        for k in 0..q {
            let lin = -0.3 + 0.9 * l0 + 0.6 * ms.iter().sum::<f64>() - 0.2 * k as f64;
            ms.push(f64::from(rng.random_bool(expit(lin))));
        }
        let la = -0.4 + 0.7 * l0 + 0.8 * ms.iter().sum::<f64>();
        let av = f64::from(rng.random_bool(expit(la)));
        let ly = -1.0 + 1.1 * av + 0.6 * l0 + 0.5 * ms.iter().sum::<f64>();
        let yv = f64::from(rng.random_bool(expit(ly)));
        let mut flags = Vec::new();
        for k in 0..q {
            let prev = if k > 0 { ms[k - 1] } else { 0.0 };
            let p = expit(1.2 - 0.8 * l0 + 0.5 * prev);
            let r = !missing || rng.random_bool(p);
            flags.push(r);
        }
        let ra = !missing || rng.random_bool(expit(1.5 - 0.5 * l0 + 0.4 * ms.iter().sum::<f64>() - 0.8 * av));
        y.push(yv);
        a.push(ra.then_some(av));
        lo.push(l0);
        for k in 0..q {
            lm[k].push(flags[k].then_some(ms[k]));
        }
    }
    ObservedDataset::new(schema(q), y, a, vec![lo], lm).unwrap()
}

/// Empirical conditional mean of `f` over units satisfying `cond`.
pub fn cond_mean(n: usize, cond: impl Fn(usize) -> bool, f: impl Fn(usize) -> f64) -> (f64, usize) {
    let mut s = 0.0;
    let mut c = 0;
    for i in 0..n {
        if cond(i) {
            s += f(i);
            c += 1;
        }
    }
    (if c > 0 { s / c as f64 } else { 0.0 }, c)
}
