//! Sequential regression engine shared by the TMLE, ICE and IPW estimators.
//!
//! The chain is described by covariate blocks observed in order. Block
//! observation is cumulative, so a block counts as missing whenever an
//! earlier one is. One block holding every covariate gives the block
//! assumption, one block per covariate the sequential assumption, and no
//! blocks the complete-data problem.

use crate::data::ObservedDataset;
use crate::error::{Error, Result};
use crate::glm::{self, Link};
use crate::nuisance::{check_positivity, fit_model, rows_where, ModelRequest, NuisanceSet, NuisanceSpecs, Predictor};

use super::{Diagnostics, StratumCount};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Tmle,
    Ice,
    Ipw,
}

/// Estimate on weighted rows.
#[derive(Clone, Debug)]
pub struct RowEstimate {
    pub psi: f64,
    /// Per-row influence values; empty when not available.
    pub influence: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub diagnostics: Diagnostics,
}

pub(crate) fn run(
    ns: &NuisanceSet,
    data: &ObservedDataset,
    w: &[f64],
    specs: &NuisanceSpecs,
    mode: Mode,
) -> Result<RowEstimate> {
    let n = data.n();
    let total: f64 = w.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::NoPositiveWeight);
    }
    let k_max = ns.blocks.len();
    let a = ns.target_level;
    let targeted = rows_where(n, |i| w[i] > 0.0 && ns.targeted(data, i));
    let targeted_count: f64 = targeted.iter().map(|&i| w[i]).sum();
    if targeted.is_empty() {
        return Err(Error::EmptyStratum("targeted units".into()));
    }

    let mut diagnostics = Diagnostics {
        positivity: Some(check_positivity(ns, data, w)),
        ..Diagnostics::default()
    };
    for (k, stratum) in ns.strata.iter().enumerate() {
        diagnostics.strata.push(StratumCount {
            name: format!("covariate_blocks_observed[{k}]"),
            count: (0..n).filter(|&i| stratum[i]).map(|i| w[i]).sum::<f64>() as usize,
        });
    }
    diagnostics.strata.push(StratumCount {
        name: "targeted".into(),
        count: targeted_count as usize,
    });
    if targeted_count < 5.0 {
        diagnostics
            .warnings
            .push(format!("targeting stratum has only {targeted_count} units"));
    }
    for m in ns.pi_rl.iter().chain(ns.pi_ra.iter()).chain([&ns.pi_a, &ns.outcome]) {
        if !m.converged() {
            diagnostics.warnings.push(format!("{} fit did not converge", m.name()));
        }
    }
    let floored = diagnostics.positivity.as_ref().map_or(0, |p| p.floored_total());
    if floored > 0 {
        diagnostics
            .warnings
            .push(format!("{floored} probabilities raised to the floor"));
    }

    let full_w: Vec<f64> = targeted.iter().map(|&i| ns.full_weight(i)).collect();
    if mode == Mode::Ipw {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&i, fw) in targeted.iter().zip(&full_w) {
            num += w[i] * fw * data.outcome()[i];
            den += w[i] * fw;
        }
        if den.is_nan() || den <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        return Ok(RowEstimate {
            psi: num / den,
            influence: Vec::new(),
            epsilons: Vec::new(),
            diagnostics,
        });
    }

    // top of the chain: outcome regression at the target level
    let top_rows = rows_where(n, |i| w[i] > 0.0 && ns.strata[k_max][i]);
    let top_eta = ns.outcome.linear_predictor(data, &top_rows, Some(a))?;
    let mut eta_full = vec![f64::NAN; n];
    for (&i, e) in top_rows.iter().zip(&top_eta) {
        eta_full[i] = *e;
    }
    let mut epsilons = Vec::new();
    let mut score_terms = Vec::new();
    let top_eps = if mode == Mode::Tmle {
        let y: Vec<f64> = targeted.iter().map(|&i| data.outcome()[i]).collect();
        let off: Vec<f64> = targeted.iter().map(|&i| eta_full[i]).collect();
        let fw: Vec<f64> = targeted.iter().zip(&full_w).map(|(&i, f)| w[i] * f).collect();
        let fl = glm::fluctuate(&y, &off, &fw)?;
        if !fl.converged {
            diagnostics.converged = false;
        }
        epsilons.push(fl.epsilon);
        fl.epsilon
    } else {
        0.0
    };
    let mut current = vec![f64::NAN; n];
    for &i in &top_rows {
        current[i] = glm::expit(eta_full[i] + top_eps);
    }

    let mut influence = vec![0.0; n];
    if mode == Mode::Tmle {
        let mut s = 0.0;
        for (&i, fw) in targeted.iter().zip(&full_w) {
            let term = fw * (data.outcome()[i] - current[i]);
            influence[i] += term;
            s += w[i] * term;
        }
        score_terms.push(s / total);
    }

    let observed: Vec<Predictor> = (0..data.schema().observed.len()).map(Predictor::Observed).collect();
    for k in (1..=k_max).rev() {
        let mut allowed = observed.clone();
        for block in &ns.blocks[..k - 1] {
            allowed.extend(block.iter().map(|&v| Predictor::Partial(v)));
        }
        allowed.sort();
        let fit_rows = rows_where(n, |i| w[i] > 0.0 && ns.strata[k][i]);
        let response: Vec<f64> = fit_rows.iter().map(|&i| current[i]).collect();
        let fit_w: Vec<f64> = fit_rows.iter().map(|&i| w[i]).collect();
        let name = format!("outcome_chain[{}]", k - 1);
        let model = fit_model(
            data,
            ModelRequest {
                name: &name,
                spec: &specs.outcome_chain,
                allowed: &allowed,
                forced: &[],
                link: Link::Logit,
                rows: &fit_rows,
                response: &response,
                weights: &fit_w,
                start: None,
            },
        )?;
        if !model.converged() {
            diagnostics.warnings.push(format!("{name} fit did not converge"));
        }
        let next_rows = rows_where(n, |i| w[i] > 0.0 && ns.strata[k - 1][i]);
        let eta = model.linear_predictor(data, &next_rows, None)?;
        let mut eta_next = vec![f64::NAN; n];
        for (&i, e) in next_rows.iter().zip(&eta) {
            eta_next[i] = *e;
        }
        let eps = if mode == Mode::Tmle {
            let off: Vec<f64> = fit_rows.iter().map(|&i| eta_next[i]).collect();
            let bw: Vec<f64> = fit_rows.iter().map(|&i| w[i] * ns.block_weight(k, i)).collect();
            let fl = glm::fluctuate(&response, &off, &bw)?;
            if !fl.converged {
                diagnostics.converged = false;
            }
            epsilons.push(fl.epsilon);
            fl.epsilon
        } else {
            0.0
        };
        let mut next = vec![f64::NAN; n];
        for &i in &next_rows {
            next[i] = glm::expit(eta_next[i] + eps);
        }
        if mode == Mode::Tmle {
            let mut s = 0.0;
            for &i in &fit_rows {
                let term = ns.block_weight(k, i) * (current[i] - next[i]);
                influence[i] += term;
                s += w[i] * term;
            }
            score_terms.push(s / total);
        }
        current = next;
    }

    let psi = (0..n).filter(|&i| w[i] > 0.0).map(|i| w[i] * current[i]).sum::<f64>() / total;
    let influence = if mode == Mode::Tmle {
        for i in 0..n {
            if w[i] > 0.0 {
                influence[i] += current[i] - psi;
            }
        }
        influence
    } else {
        Vec::new()
    };
    diagnostics.score_terms = score_terms;
    Ok(RowEstimate {
        psi,
        influence,
        epsilons,
        diagnostics,
    })
}
