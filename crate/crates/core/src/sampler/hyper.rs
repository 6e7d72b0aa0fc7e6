//! Hyperparameters shared across filled clusters.

use rand::Rng;

use crate::error::Result;
use crate::kernel::{draw_gamma, draw_standard_normal, log_gamma_density};
use crate::model::{Hyperparams, MixtureState};
use crate::sampler::config::{AlphaBUpdate, MhDiagnostics};

/// Gamma (shape, rate) of `b_ξi` given the filled clusters' precisions.
pub fn b_xi_posterior(a_g: f64, a_xi: f64, k_plus: usize, b_g_i: f64, sum_inv_xi2_i: f64) -> (f64, f64) {
    (a_g + k_plus as f64 * a_xi, b_g_i + sum_inv_xi2_i)
}

/// Gamma (shape, rate) of the spike scale `b_0`.
pub fn b0_spike_posterior(a1: f64, a0: f64, h_inactive: usize, b1: f64, sum_inv_theta_spike: f64) -> (f64, f64) {
    (a1 + h_inactive as f64 * a0, b1 + sum_inv_theta_spike)
}

/// Gamma (shape, rate) of the slab scale `b_θ`.
pub fn b_theta_posterior(a2: f64, a_theta: f64, h_active: usize, b2: f64, sum_inv_theta_slab: f64) -> (f64, f64) {
    (a2 + h_active as f64 * a_theta, b2 + sum_inv_theta_slab)
}

/// Unnormalized log posterior of `alpha_B` with the slab probabilities
/// integrated out.
pub fn alpha_b_log_target(alpha: f64, h_active: usize, h_inactive: usize, h: usize, a_alpha: f64, b_alpha: f64) -> Result<f64> {
    let hf = h as f64;
    Ok(h_active as f64 * (alpha / (alpha + hf)).ln()
        + h_inactive as f64 * (hf / (alpha + hf)).ln()
        + log_gamma_density(alpha, a_alpha, b_alpha)?)
}

/// Gamma (shape, rate) of `alpha_B` given every slab probability.
pub fn alpha_b_conditional_posterior(a_alpha: f64, b_alpha: f64, h: usize, k_plus: usize, sum_ln_tau: f64) -> (f64, f64) {
    (a_alpha + (h * k_plus) as f64, b_alpha - sum_ln_tau / h as f64)
}

/// Log acceptance ratio of a log-scale random walk move, Jacobian included.
pub fn log_scale_acceptance(log_target_current: f64, log_target_proposal: f64, current: f64, proposal: f64) -> f64 {
    log_target_proposal - log_target_current + proposal.ln() - current.ln()
}

/// One log-normal random walk step. Returns the new value and whether the
/// proposal was accepted.
pub fn log_scale_mh_step<R, F>(current: f64, scale: f64, log_target: F, rng: &mut R) -> Result<(f64, bool)>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> Result<f64>,
{
    let proposal = current * (scale * draw_standard_normal(rng)).exp();
    let u: f64 = rng.random();
    if !(proposal > 0.0 && proposal.is_finite()) {
        return Ok((current, false));
    }
    let log_r = log_scale_acceptance(log_target(current)?, log_target(proposal)?, current, proposal);
    if u.ln() < log_r {
        Ok((proposal, true))
    } else {
        Ok((current, false))
    }
}

/// Active and inactive column totals over the filled clusters.
pub fn column_totals(state: &MixtureState) -> (usize, usize) {
    let filled = &state.clusters[..state.k_plus];
    let h_active: usize = filled.iter().map(|c| c.active_count()).sum();
    let total: usize = filled.iter().map(|c| c.n_columns()).sum();
    (h_active, total - h_active)
}

/// Gamma (shape, rate) conditionals of the shared scales given the filled
/// clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedPosteriors {
    pub b_xi: Vec<(f64, f64)>,
    pub b0_spike: (f64, f64),
    pub b_theta: (f64, f64),
    pub h_active: usize,
    pub h_inactive: usize,
}

pub fn shared_posteriors(state: &MixtureState, hyper: &Hyperparams) -> SharedPosteriors {
    let kp = state.k_plus;
    let b_xi = (0..state.b_xi.len())
        .map(|i| {
            let s: f64 = state.clusters[..kp].iter().map(|c| 1.0 / c.xi2[i]).sum();
            b_xi_posterior(hyper.a_g, hyper.a_xi, kp, hyper.b_g[i], s)
        })
        .collect();
    let (h_active, h_inactive) = column_totals(state);
    let mut inv_spike = 0.0;
    let mut inv_slab = 0.0;
    for c in &state.clusters[..kp] {
        for (th, &on) in c.theta.iter().zip(&c.indicator) {
            if on {
                inv_slab += 1.0 / th;
            } else {
                inv_spike += 1.0 / th;
            }
        }
    }
    SharedPosteriors {
        b_xi,
        b0_spike: b0_spike_posterior(hyper.a1, hyper.a0, h_inactive, hyper.b1, inv_spike),
        b_theta: b_theta_posterior(hyper.a2, hyper.a_theta, h_active, hyper.b2, inv_slab),
        h_active,
        h_inactive,
    }
}

/// Updates `b_ξ`, `b_0`, `b_θ` and `alpha_B` in that order.
pub fn update_shared_hyperparams<R: Rng + ?Sized>(
    state: &mut MixtureState,
    hyper: &Hyperparams,
    mode: AlphaBUpdate,
    rng: &mut R,
) -> Result<MhDiagnostics> {
    let kp = state.k_plus;
    let post = shared_posteriors(state, hyper);
    for (i, &(shape, rate)) in post.b_xi.iter().enumerate() {
        state.b_xi[i] = draw_gamma(shape, rate, rng)?;
    }
    state.b0_spike = draw_gamma(post.b0_spike.0, post.b0_spike.1, rng)?;
    state.b_theta = draw_gamma(post.b_theta.0, post.b_theta.1, rng)?;
    let (h_active, h_inactive) = (post.h_active, post.h_inactive);

    let mut diag = MhDiagnostics::default();
    match mode {
        AlphaBUpdate::MarginalMh => {
            let step = hyper.alpha_b_step();
            let target = |a: f64| alpha_b_log_target(a, h_active, h_inactive, hyper.h, hyper.a_alpha, hyper.b_alpha);
            let (next, accepted) = log_scale_mh_step(state.alpha_b, step, target, rng)?;
            state.alpha_b = next;
            diag.proposals_alpha_b = 1;
            diag.accept_count_alpha_b = accepted as u64;
            diag.applied_step_alpha_b = step;
        }
        AlphaBUpdate::ConditionalGibbs => {
            let sum_ln_tau: f64 = state.clusters[..kp].iter().flat_map(|c| c.tau.iter()).map(|t| t.ln()).sum();
            let (shape, rate) = alpha_b_conditional_posterior(hyper.a_alpha, hyper.b_alpha, hyper.h, kp, sum_ln_tau);
            state.alpha_b = draw_gamma(shape, rate, rng)?;
        }
    }
    Ok(diag)
}
