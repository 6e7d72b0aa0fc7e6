use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{sample_categorical_from_logits, PreparedLowRank};
use crate::model::MixtureState;

/// Log weight plus marginal log density of each observation under each
/// component; `y` is p x T.
pub fn allocation_logits(state: &MixtureState, y: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let prepared: Vec<PreparedLowRank> = state
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| c.low_rank().prepare().map_err(|e| e.context(format!("component {k}"))))
        .collect::<Result<_>>()?;
    let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
    let logits = (0..y.ncols())
        .into_par_iter()
        .map(|t| {
            let col = y.column(t);
            let obs = col.as_slice();
            prepared.iter().zip(&log_w).map(|(g, lw)| lw + g.log_density(obs)).collect()
        })
        .collect();
    Ok(logits)
}

/// Block 1: redraw every allocation, then move filled components to the front.
pub fn update_allocations<R: Rng + ?Sized>(state: &mut MixtureState, y: &DMatrix<f64>, rng: &mut R) -> Result<()> {
    let logits = allocation_logits(state, y)?;
    for (t, l) in logits.iter().enumerate() {
        if l.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical(format!("allocation log-probabilities of observation {t} contain NaN")));
        }
        state.alloc[t] = sample_categorical_from_logits(l, rng)
            .map_err(|_| Error::Numerical(format!("observation {t} has zero probability under every component")))?;
    }
    state.counts = state.recount();
    relabel_filled_first(state);
    Ok(())
}

/// Stable reordering: filled components first, empty ones after, each group
/// in its previous relative order. Factor scores are reset to the new
/// cluster sizes since they are redrawn before use.
pub fn relabel_filled_first(state: &mut MixtureState) {
    let k = state.k();
    let order: Vec<usize> = (0..k).filter(|&j| state.counts[j] > 0).chain((0..k).filter(|&j| state.counts[j] == 0)).collect();
    let mut new_of_old = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        new_of_old[old] = new;
    }
    state.clusters = order.iter().map(|&j| state.clusters[j].clone()).collect();
    state.weights = order.iter().map(|&j| state.weights[j]).collect();
    state.counts = order.iter().map(|&j| state.counts[j]).collect();
    for a in state.alloc.iter_mut() {
        *a = new_of_old[*a];
    }
    state.k_plus = state.counts.iter().filter(|c| **c > 0).count();
    for (c, &n) in state.clusters.iter_mut().zip(&state.counts) {
        let h = c.n_columns();
        if c.factors.nrows() != n {
            c.factors = DMatrix::zeros(n, h);
        }
    }
}
