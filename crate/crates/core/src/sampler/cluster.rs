//! Within-cluster factor-analytic updates.
//!
//! Each conditional comes as a pure function returning the posterior
//! parameters, plus a draw that consumes them. The draws run in a fixed
//! order: factors, loading rows, idiosyncratic precisions, mean,
//! indicators, slab probabilities, column variances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::kernel::linalg::{backward_solve_t_mut, chol_solve, forward_solve_mut};
use crate::kernel::{
    cholesky_spd, draw_bernoulli, draw_beta, draw_inverse_gamma, draw_standard_normal,
    log_mv_t_isotropic,
};
use crate::model::{ClusterParams, Hyperparams};

/// Shared quantities a cluster update reads but does not modify.
#[derive(Clone, Debug)]
pub struct SharedScalars {
    pub alpha_b: f64,
    pub b_xi: DVector<f64>,
    pub b_theta: f64,
    pub b0_spike: f64,
}

/// `I + Λ^T Ξ^{-1} Λ`, the precision of every factor score in the cluster.
pub fn factor_precision(lambda: &DMatrix<f64>, xi2: &DVector<f64>) -> DMatrix<f64> {
    let h = lambda.ncols();
    let mut w = lambda.clone();
    for i in 0..lambda.nrows() {
        w.row_mut(i).scale_mut(1.0 / xi2[i]);
    }
    let mut prec = lambda.transpose() * w;
    for j in 0..h {
        prec[(j, j)] += 1.0;
    }
    prec
}

/// Posterior means of the factor scores, one row per column of `y`.
///
/// `y` holds the cluster's observations as columns (p x n).
pub fn factor_means(
    lambda: &DMatrix<f64>,
    xi2: &DVector<f64>,
    mu: &DVector<f64>,
    y: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (chol, _) = cholesky_spd(&factor_precision(lambda, xi2))?;
    let mut out = DMatrix::zeros(y.ncols(), lambda.ncols());
    for (t, col) in y.column_iter().enumerate() {
        let r = DVector::from_fn(mu.len(), |i, _| (col[i] - mu[i]) / xi2[i]);
        let m = chol_solve(&chol, &(lambda.transpose() * r));
        out.set_row(t, &m.transpose());
    }
    Ok(out)
}

/// Precision and mean of loading row `i`.
///
/// `resid` holds `y_it - mu_i` over the cluster's observations.
pub fn loading_row_posterior(
    theta: &DVector<f64>,
    factors: &DMatrix<f64>,
    xi2_i: f64,
    resid: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let ftf = factors.transpose() * factors;
    let (prec, _, mean) = loading_row_parts(theta, &ftf, factors, xi2_i, resid)?;
    Ok((prec, mean))
}

fn loading_row_parts(
    theta: &DVector<f64>,
    ftf: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    xi2_i: f64,
    resid: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let h = theta.len();
    let mut prec = ftf / xi2_i;
    for j in 0..h {
        prec[(j, j)] += 1.0 / theta[j];
    }
    let rhs = factors.transpose() * resid / xi2_i;
    let (chol, _) = cholesky_spd(&prec)?;
    let mean = chol_solve(&chol, &rhs);
    Ok((prec, chol, mean))
}

/// Per-variable residual sums of squares `Σ_t (y_it - mu_i - λ_i f_t)²`.
pub fn residual_ss(
    y: &DMatrix<f64>,
    mu: &DVector<f64>,
    lambda: &DMatrix<f64>,
    factors: &DMatrix<f64>,
) -> DVector<f64> {
    let fitted = lambda * factors.transpose();
    let mut ss = DVector::zeros(mu.len());
    for t in 0..y.ncols() {
        for i in 0..mu.len() {
            let r = y[(i, t)] - mu[i] - fitted[(i, t)];
            ss[i] += r * r;
        }
    }
    ss
}

/// Shape and rate of the gamma posterior of `1 / ξ²_i`.
pub fn idio_precision_posterior(a_xi: f64, b_xi_i: f64, n: usize, ss_i: f64) -> (f64, f64) {
    (a_xi + 0.5 * n as f64, b_xi_i + 0.5 * ss_i)
}

/// Elementwise normal posterior of the cluster mean.
///
/// `resid_sum` is `Σ_t (y_t - Λ f_t)`. Returns (mean, variance).
pub fn mean_posterior(
    b0_mean: &[f64],
    b0_cov_diag: &[f64],
    xi2: &DVector<f64>,
    n: usize,
    resid_sum: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let p = xi2.len();
    let var = DVector::from_fn(p, |i, _| 1.0 / (1.0 / b0_cov_diag[i] + n as f64 / xi2[i]));
    let mean = DVector::from_fn(p, |i, _| var[i] * (b0_mean[i] / b0_cov_diag[i] + resid_sum[i] / xi2[i]));
    (mean, var)
}

/// Log odds of a slab (active) column against the spike.
#[allow(clippy::too_many_arguments)]
pub fn indicator_log_odds(
    column: &[f64],
    alpha_b: f64,
    h: usize,
    a_theta: f64,
    b_theta: f64,
    a0: f64,
    b0_spike: f64,
) -> Result<f64> {
    let hf = h as f64;
    let slab = (alpha_b / (alpha_b + hf)).ln() + log_mv_t_isotropic(column, 2.0 * a_theta, b_theta / a_theta)?;
    let spike = (hf / (alpha_b + hf)).ln() + log_mv_t_isotropic(column, 2.0 * a0, b0_spike / a0)?;
    Ok(slab - spike)
}

/// Beta parameters of the slab probability given its indicator.
pub fn slab_prob_posterior(alpha_b: f64, h: usize, active: bool) -> (f64, f64) {
    let i = active as u8 as f64;
    (alpha_b / h as f64 + i, 2.0 - i)
}

/// Inverse-gamma (shape, scale) of a column variance given its indicator.
#[allow(clippy::too_many_arguments)]
pub fn theta_posterior(
    active: bool,
    p: usize,
    col_ss: f64,
    a_theta: f64,
    b_theta: f64,
    a0: f64,
    b0_spike: f64,
) -> (f64, f64) {
    let (a, b) = if active { (a_theta, b_theta) } else { (a0, b0_spike) };
    (a + 0.5 * p as f64, b + 0.5 * col_ss)
}

/// `mean + L^{-T} z`: a normal draw with precision `L L^T`.
fn draw_with_precision_factor<R: Rng + ?Sized>(chol: &DMatrix<f64>, mean: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let mut z = DVector::from_fn(mean.len(), |_, _| draw_standard_normal(rng));
    backward_solve_t_mut(chol, &mut z);
    mean + z
}

/// Step 1: fresh factor scores for every observation in the cluster.
pub fn sample_factors<R: Rng + ?Sized>(c: &mut ClusterParams, y: &DMatrix<f64>, rng: &mut R) -> Result<()> {
    let h = c.n_columns();
    let (chol, _) = cholesky_spd(&factor_precision(&c.lambda, &c.xi2))?;
    let mut f = DMatrix::zeros(y.ncols(), h);
    for (t, col) in y.column_iter().enumerate() {
        let r = DVector::from_fn(c.dim(), |i, _| (col[i] - c.mu[i]) / c.xi2[i]);
        let mut m = c.lambda.transpose() * r;
        forward_solve_mut(&chol, &mut m);
        for v in m.iter_mut() {
            *v += draw_standard_normal(rng);
        }
        backward_solve_t_mut(&chol, &mut m);
        f.set_row(t, &m.transpose());
    }
    c.factors = f;
    Ok(())
}

/// Step 2: every row of the loading matrix, all H columns.
pub fn sample_loading_rows<R: Rng + ?Sized>(c: &mut ClusterParams, y: &DMatrix<f64>, rng: &mut R) -> Result<()> {
    let ftf = c.factors.transpose() * &c.factors;
    for i in 0..c.dim() {
        let resid = DVector::from_fn(y.ncols(), |t, _| y[(i, t)] - c.mu[i]);
        let (_, chol, mean) = loading_row_parts(&c.theta, &ftf, &c.factors, c.xi2[i], &resid)?;
        let row = draw_with_precision_factor(&chol, &mean, rng);
        c.lambda.set_row(i, &row.transpose());
    }
    Ok(())
}

/// Step 3.
pub fn sample_idio_precisions<R: Rng + ?Sized>(
    c: &mut ClusterParams,
    y: &DMatrix<f64>,
    a_xi: f64,
    b_xi: &DVector<f64>,
    rng: &mut R,
) -> Result<()> {
    let ss = residual_ss(y, &c.mu, &c.lambda, &c.factors);
    for i in 0..c.dim() {
        let (shape, rate) = idio_precision_posterior(a_xi, b_xi[i], y.ncols(), ss[i]);
        c.xi2[i] = draw_inverse_gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// Step 4.
pub fn sample_cluster_mean<R: Rng + ?Sized>(
    c: &mut ClusterParams,
    y: &DMatrix<f64>,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let fitted = &c.lambda * c.factors.transpose();
    let resid_sum = DVector::from_fn(c.dim(), |i, _| (0..y.ncols()).map(|t| y[(i, t)] - fitted[(i, t)]).sum());
    let (mean, var) = mean_posterior(&hyper.b0_mean, &hyper.b0_cov_diag, &c.xi2, y.ncols(), &resid_sum);
    for i in 0..c.dim() {
        c.mu[i] = mean[i] + var[i].sqrt() * draw_standard_normal(rng);
    }
    Ok(())
}

/// Step 5.
pub fn sample_indicators<R: Rng + ?Sized>(
    c: &mut ClusterParams,
    hyper: &Hyperparams,
    shared: &SharedScalars,
    rng: &mut R,
) -> Result<()> {
    let h = c.n_columns();
    for j in 0..h {
        let col: Vec<f64> = c.lambda.column(j).iter().copied().collect();
        let lo = indicator_log_odds(&col, shared.alpha_b, h, hyper.a_theta, shared.b_theta, hyper.a0, shared.b0_spike)?;
        let prob = 1.0 / (1.0 + (-lo).exp());
        c.indicator[j] = draw_bernoulli(prob, rng);
    }
    Ok(())
}

/// Step 6.
pub fn sample_slab_probs<R: Rng + ?Sized>(c: &mut ClusterParams, alpha_b: f64, rng: &mut R) -> Result<()> {
    let h = c.n_columns();
    for j in 0..h {
        let (a, b) = slab_prob_posterior(alpha_b, h, c.indicator[j]);
        c.tau[j] = draw_beta(a, b, rng)?;
    }
    Ok(())
}

/// Step 7.
pub fn sample_thetas<R: Rng + ?Sized>(
    c: &mut ClusterParams,
    hyper: &Hyperparams,
    shared: &SharedScalars,
    rng: &mut R,
) -> Result<()> {
    for j in 0..c.n_columns() {
        let ss = c.lambda.column(j).norm_squared();
        let (shape, scale) =
            theta_posterior(c.indicator[j], c.dim(), ss, hyper.a_theta, shared.b_theta, hyper.a0, shared.b0_spike);
        c.theta[j] = draw_inverse_gamma(shape, scale, rng)?;
    }
    Ok(())
}

/// All seven within-cluster steps for one filled cluster.
pub fn update_cluster<R: Rng + ?Sized>(
    c: &mut ClusterParams,
    y: &DMatrix<f64>,
    hyper: &Hyperparams,
    shared: &SharedScalars,
    rng: &mut R,
) -> Result<()> {
    sample_factors(c, y, rng)?;
    sample_loading_rows(c, y, rng)?;
    sample_idio_precisions(c, y, hyper.a_xi, &shared.b_xi, rng)?;
    sample_cluster_mean(c, y, hyper, rng)?;
    sample_indicators(c, hyper, shared, rng)?;
    sample_slab_probs(c, shared.alpha_b, rng)?;
    sample_thetas(c, hyper, shared, rng)?;
    Ok(())
}
