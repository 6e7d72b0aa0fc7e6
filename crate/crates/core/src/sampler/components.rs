//! Number of components, the Dirichlet concentration, refilling of empty
//! components and the weights.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::{
    draw_bernoulli, draw_beta, draw_dirichlet, draw_inverse_gamma, draw_standard_normal, log_bnb_pmf, log_f_density,
    sample_categorical_from_logits, BnbParams,
};
use crate::model::{ClusterParams, Hyperparams, MixtureState};
use crate::sampler::hyper::log_scale_mh_step;

/// Weight ratio to the running maximum below which the support of K is cut.
pub const K_TAIL_RATIO: f64 = 1e-12;

/// Unnormalized log posterior weight of `k` components given the filled
/// cluster sizes, dropping factors constant in `k`.
pub fn k_log_weight(k: usize, counts: &[usize], alpha: f64, bnb: &BnbParams) -> Result<f64> {
    let kp = counts.len();
    debug_assert!(k >= kp && kp >= 1);
    let kf = k as f64;
    let a = alpha / kf;
    let mut lw = log_bnb_pmf(k, bnb)? + kp as f64 * alpha.ln() + ln_gamma(kf + 1.0)
        - kp as f64 * kf.ln()
        - ln_gamma((k - kp) as f64 + 1.0);
    let lg1 = ln_gamma(1.0 + a);
    for &n in counts {
        lw += ln_gamma(n as f64 + a) - lg1;
    }
    Ok(lw)
}

/// Log weights for `K = K_+, K_+ + 1, ...`, cut once a term (times `K`, a
/// bound on the polynomial tail) falls below [`K_TAIL_RATIO`] of the
/// running maximum, or at `cap`.
pub fn k_log_weights(counts: &[usize], alpha: f64, bnb: &BnbParams, cap: usize) -> Result<Vec<f64>> {
    let kp = counts.len();
    if kp == 0 {
        return Err(Error::Domain("no filled components".into()));
    }
    if cap < kp {
        return Err(Error::Config(format!("K cap {cap} is below K_plus {kp}")));
    }
    let cut = K_TAIL_RATIO.ln();
    let mut out = Vec::new();
    let mut max = f64::NEG_INFINITY;
    for k in kp..=cap {
        let lw = k_log_weight(k, counts, alpha, bnb)?;
        max = max.max(lw);
        out.push(lw);
        if lw + (k as f64).ln() < max + cut {
            break;
        }
    }
    Ok(out)
}

/// Draws `K >= K_+` from its conditional posterior.
pub fn sample_k<R: Rng + ?Sized>(counts: &[usize], alpha: f64, bnb: &BnbParams, cap: usize, rng: &mut R) -> Result<usize> {
    let w = k_log_weights(counts, alpha, bnb, cap)?;
    Ok(counts.len() + sample_categorical_from_logits(&w, rng)?)
}

/// Unnormalized log posterior of `alpha_M` given the partition and `K`.
pub fn alpha_m_log_target(alpha: f64, counts: &[usize], k: usize, nu_l: f64, nu_r: f64) -> Result<f64> {
    let n: usize = counts.iter().sum();
    let a = alpha / k as f64;
    let lg1 = ln_gamma(1.0 + a);
    let mut lt = log_f_density(alpha, nu_l, nu_r)? + counts.len() as f64 * alpha.ln() + ln_gamma(alpha)
        - ln_gamma(n as f64 + alpha);
    for &c in counts {
        lt += ln_gamma(c as f64 + a) - lg1;
    }
    Ok(lt)
}

/// One random walk step on `log alpha_M` given `k` components; returns
/// whether it moved.
pub fn update_alpha_m<R: Rng + ?Sized>(state: &mut MixtureState, k: usize, hyper: &Hyperparams, rng: &mut R) -> Result<bool> {
    let counts = &state.counts[..state.k_plus];
    let target = |a: f64| alpha_m_log_target(a, counts, k, hyper.nu_l, hyper.nu_r);
    let (next, accepted) = log_scale_mh_step(state.alpha_m, hyper.mh_scale_alpha_m, target, rng)?;
    state.alpha_m = next;
    Ok(accepted)
}

/// A component with every parameter drawn from its prior given the current
/// shared hyperparameters.
pub fn component_from_prior<R: Rng + ?Sized>(state: &MixtureState, hyper: &Hyperparams, rng: &mut R) -> Result<ClusterParams> {
    let p = hyper.dim();
    let h = hyper.h;
    let mu = DVector::from_fn(p, |i, _| hyper.b0_mean[i] + hyper.b0_cov_diag[i].sqrt() * draw_standard_normal(rng));
    let mut xi2 = DVector::zeros(p);
    for i in 0..p {
        xi2[i] = draw_inverse_gamma(hyper.a_xi, state.b_xi[i], rng)?;
    }
    let mut tau = DVector::zeros(h);
    let mut indicator = vec![false; h];
    let mut theta = DVector::zeros(h);
    for j in 0..h {
        tau[j] = draw_beta(state.alpha_b / h as f64, 1.0, rng)?;
        indicator[j] = draw_bernoulli(tau[j], rng);
        theta[j] = if indicator[j] {
            draw_inverse_gamma(hyper.a_theta, state.b_theta, rng)?
        } else {
            draw_inverse_gamma(hyper.a0, state.b0_spike, rng)?
        };
    }
    let mut lambda = DMatrix::zeros(p, h);
    for j in 0..h {
        let sd = theta[j].sqrt();
        for i in 0..p {
            lambda[(i, j)] = sd * draw_standard_normal(rng);
        }
    }
    Ok(ClusterParams { mu, lambda, xi2, theta, tau, indicator, factors: DMatrix::zeros(0, h) })
}

/// Keeps the filled components and appends `k_new - K_+` fresh empty ones.
pub fn add_empty_components<R: Rng + ?Sized>(
    state: &mut MixtureState,
    k_new: usize,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let kp = state.k_plus;
    if k_new < kp {
        return Err(Error::Domain(format!("cannot shrink to {k_new} components with {kp} filled")));
    }
    state.clusters.truncate(kp);
    state.counts.truncate(kp);
    state.weights.truncate(kp);
    for _ in kp..k_new {
        let c = component_from_prior(state, hyper, rng)?;
        state.clusters.push(c);
        state.counts.push(0);
        state.weights.push(0.0);
    }
    Ok(())
}

/// Dirichlet parameters of the weights.
pub fn weight_posterior(counts: &[usize], alpha: f64, k: usize) -> Vec<f64> {
    let a = alpha / k as f64;
    (0..k).map(|j| a + counts.get(j).copied().unwrap_or(0) as f64).collect()
}

pub fn sample_weights<R: Rng + ?Sized>(counts: &[usize], alpha: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    draw_dirichlet(&weight_posterior(counts, alpha, k), rng)
}
