//! Monte Carlo value of `E(Y^a)` under a scenario.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::scenario::{Sampler, ScenarioSpec, Var, CHUNK, VARS};
use crate::error::Result;
use crate::rng;

/// Draws used by [`true_psi`].
pub const TRUTH_DRAWS: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Truth {
    pub psi: f64,
    /// Monte Carlo standard error.
    pub se: f64,
}

fn cache() -> &'static Mutex<HashMap<[u8; 32], Truth>> {
    static CACHE: OnceLock<Mutex<HashMap<[u8; 32], Truth>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn key(spec: &ScenarioSpec, a: f64, draws: usize, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    // the outcome law depends on the structural equations only
    for (name, eq) in &spec.structural {
        h.update(name.as_bytes());
        for (term, c) in eq {
            h.update(term.as_bytes());
            h.update(c.to_le_bytes());
        }
        h.update([0xff]);
    }
    h.update(a.to_le_bytes());
    h.update((draws as u64).to_le_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

/// `E(Y^a)` from `draws` simulated covariate vectors with the exposure set
/// to `a`, averaging the outcome probability of each draw. Cached by a hash
/// of the structural equations, `a`, `draws` and `seed`.
pub fn true_psi_with(spec: &ScenarioSpec, a: f64, draws: usize, seed: u64) -> Result<Truth> {
    let k = key(spec, a, draws, seed);
    if let Some(t) = cache().lock().expect("truth cache poisoned").get(&k) {
        return Ok(*t);
    }
    let sampler = Sampler::new(spec)?;
    let chunks = draws.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, c as u64);
            let mut v = [0.0; VARS];
            let (mut s, mut ss) = (0.0, 0.0);
            for _ in 0..CHUNK.min(draws - c * CHUNK) {
                sampler.covariates(&mut rng, &mut v);
                v[Var::A as usize] = a;
                let p = sampler.outcome_prob(&v);
                s += p;
                ss += p * p;
            }
            (s, ss)
        })
        .collect();
    let n = draws as f64;
    let s: f64 = sums.iter().map(|x| x.0).sum();
    let ss: f64 = sums.iter().map(|x| x.1).sum();
    let psi = s / n;
    let var = if draws > 1 {
        (ss - n * psi * psi).max(0.0) / (n - 1.0)
    } else {
        0.0
    };
    let t = Truth {
        psi,
        se: (var / n).sqrt(),
    };
    cache().lock().expect("truth cache poisoned").insert(k, t);
    Ok(t)
}

/// Truth for `spec.a` from ten million draws seeded by the spec.
pub fn true_psi(spec: &ScenarioSpec) -> Result<Truth> {
    true_psi_with(spec, spec.a, TRUTH_DRAWS, spec.seed)
}
