//! Starting values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::linalg::sorted_symmetric_eigen;
use crate::kernel::{block, draw_bernoulli, draw_beta, draw_dirichlet, RngStream};
use crate::kmeans::kmeans;
use crate::model::{ClusterParams, Dataset, Hyperparams, MixtureState};
use crate::sampler::config::ChainConfig;

/// Prior degrees of freedom and scale of the starting covariance estimate.
pub const INIT_V0: f64 = 3.0;
/// Floor on the starting idiosyncratic variances.
pub const INIT_XI_FLOOR: f64 = 1e-4;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_ATTEMPTS: usize = 5;

/// `(v0 + T/2)^{-1} (v0 I + 0.5 Σ_t y_t y_t^T)`.
pub fn initial_covariance(data: &Dataset) -> DMatrix<f64> {
    let t = data.n_obs() as f64;
    let p = data.dim();
    let y = &data.values;
    let mut s = y.transpose() * y * 0.5;
    for i in 0..p {
        s[(i, i)] += INIT_V0;
    }
    s / (INIT_V0 + 0.5 * t)
}

/// Loadings from the top `h` eigenpairs and the matching idiosyncratic
/// variances.
///
/// The discarded eigenvalues' mean (or the floor, when nothing is
/// discarded) is removed from the kept ones, so `Λ Λ^T + Ξ` reproduces
/// `omega` exactly when `h = p`.
pub fn factorize_covariance(omega: &DMatrix<f64>, h: usize) -> (DMatrix<f64>, DVector<f64>) {
    let p = omega.nrows();
    let (values, vectors) = sorted_symmetric_eigen(omega);
    let kept = h.min(p);
    let sigma2 = if kept < p {
        (values[kept..].iter().sum::<f64>() / (p - kept) as f64).max(INIT_XI_FLOOR)
    } else {
        INIT_XI_FLOOR
    };
    let mut lambda = DMatrix::zeros(p, h);
    for j in 0..kept {
        let s = (values[j] - sigma2).max(0.0).sqrt();
        lambda.set_column(j, &(vectors.column(j) * s));
    }
    let llt = &lambda * lambda.transpose();
    let xi2 = DVector::from_fn(p, |i, _| (omega[(i, i)] - llt[(i, i)]).max(INIT_XI_FLOOR));
    (lambda, xi2)
}

/// Initial state: k-means partition, shared starting covariance, column
/// hyperparameters and variances at their prior means, the rest drawn from
/// the priors.
pub fn init_state(data: &Dataset, cfg: &ChainConfig) -> Result<MixtureState> {
    let hyper: &Hyperparams = &cfg.hyper;
    let p = data.dim();
    let t = data.n_obs();
    let k = hyper.k_init;
    let h = hyper.h;
    if hyper.dim() != p {
        return Err(Error::Config(format!("hyperparameters are for {} variables, data has {p}", hyper.dim())));
    }
    if k > t {
        return Err(Error::Config(format!("K_init {k} exceeds the {t} observations")));
    }
    if !data.standardized {
        log::warn!("initial covariance assumes standardized data");
    }
    let points: Vec<Vec<f64>> = (0..t).map(|i| data.row(i)).collect();
    let mut km = None;
    for attempt in 0..KMEANS_ATTEMPTS {
        let mut rng = RngStream::for_cell(cfg.seed, 0, attempt, block::INIT);
        let run = kmeans(&points, k, KMEANS_RESTARTS, &mut rng)?;
        if run.sizes().iter().all(|s| *s > 0) {
            km = Some(run);
            break;
        }
        log::debug!("k-means attempt {attempt} left an empty cluster");
    }
    let km = km.ok_or_else(|| Error::Numerical(format!("k-means left an empty cluster in {KMEANS_ATTEMPTS} attempts")))?;

    let mut rng = RngStream::for_cell(cfg.seed, 0, KMEANS_ATTEMPTS, block::INIT);
    let omega = initial_covariance(data);
    let (lambda, xi2) = factorize_covariance(&omega, h);
    let alpha_b = hyper.a_alpha / hyper.b_alpha;
    let b_theta = hyper.a2 / hyper.b2;
    let b0_spike = hyper.a1 / hyper.b1;
    let b_xi = DVector::from_fn(p, |i, _| hyper.a_g / hyper.b_g[i]);
    let sizes = km.sizes();
    let mut clusters = Vec::with_capacity(k);
    for j in 0..k {
        let mut tau = DVector::zeros(h);
        let mut indicator = vec![false; h];
        let mut theta = DVector::zeros(h);
        for c in 0..h {
            tau[c] = draw_beta(alpha_b / h as f64, 1.0, &mut rng)?;
            indicator[c] = draw_bernoulli(tau[c], &mut rng);
            theta[c] = if indicator[c] {
                b_theta / (hyper.a_theta - 1.0)
            } else {
                b0_spike / (hyper.a0 - 1.0)
            };
        }
        clusters.push(ClusterParams {
            mu: DVector::from_column_slice(&km.centers[j]),
            lambda: lambda.clone(),
            xi2: xi2.clone(),
            theta,
            tau,
            indicator,
            factors: DMatrix::zeros(sizes[j], h),
        });
    }
    let weights = draw_dirichlet(&vec![1.0 / k as f64; k], &mut rng)?;
    Ok(MixtureState {
        k_plus: k,
        weights,
        alloc: km.labels.clone(),
        counts: sizes,
        clusters,
        alpha_m: hyper.alpha_m_prior_mean(),
        alpha_b,
        b_xi,
        b_theta,
        b0_spike,
    })
}
