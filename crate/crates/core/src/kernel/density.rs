//! Log densities and mass functions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::kernel::linalg::cholesky_spd;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Translated beta-negative-binomial prior on the number of components:
/// `K - 1 ~ BNB(alpha_lambda, a_pi, b_pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbParams {
    pub alpha_lambda: f64,
    pub a_pi: f64,
    pub b_pi: f64,
}

impl Default for BnbParams {
    fn default() -> Self {
        Self { alpha_lambda: 1.0, a_pi: 4.0, b_pi: 3.0 }
    }
}

impl BnbParams {
    /// Prior mean of K, defined for `a_pi > 1`.
    pub fn mean(&self) -> Option<f64> {
        (self.a_pi > 1.0).then(|| 1.0 + self.alpha_lambda * self.b_pi / (self.a_pi - 1.0))
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("alpha_lambda", self.alpha_lambda), ("a_pi", self.a_pi), ("b_pi", self.b_pi)] {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("BNB parameter {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// `log p(K = k)` under the translated BNB prior.
pub fn log_bnb_pmf(k: usize, params: &BnbParams) -> Result<f64> {
    params.check()?;
    if k < 1 {
        return domain("BNB support starts at K = 1");
    }
    let BnbParams { alpha_lambda: al, a_pi: a, b_pi: b } = *params;
    let km1 = (k - 1) as f64;
    Ok(ln_gamma(al + km1) + ln_beta(al + a, km1 + b)
        - ln_gamma(al)
        - ln_gamma(k as f64)
        - ln_beta(a, b))
}

/// Gaussian with covariance `loadings * loadings^T + diag(idio_var)`.
#[derive(Clone, Debug)]
pub struct LowRankGaussian {
    pub mean: DVector<f64>,
    pub loadings: DMatrix<f64>,
    pub idio_var: DVector<f64>,
}

/// Cached Woodbury quantities for repeated evaluation of a [`LowRankGaussian`].
///
/// With `M = I + Λ^T Ξ^{-1} Λ = L L^T`:
/// `Ω^{-1} = Ξ^{-1} - Ξ^{-1} Λ M^{-1} Λ^T Ξ^{-1}` and
/// `log|Ω| = log|M| + Σ log ξ²_i`.
#[derive(Clone, Debug)]
pub struct PreparedLowRank {
    mean: DVector<f64>,
    inv_idio: DVector<f64>,
    /// `Λ^T Ξ^{-1}`, H x p.
    weighted_t: DMatrix<f64>,
    chol_m: DMatrix<f64>,
    log_norm: f64,
}

impl LowRankGaussian {
    pub fn new(mean: DVector<f64>, loadings: DMatrix<f64>, idio_var: DVector<f64>) -> Result<Self> {
        let g = Self { mean, loadings, idio_var };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        let p = self.mean.len();
        if self.loadings.nrows() != p || self.idio_var.len() != p {
            return domain(format!(
                "dimension mismatch: mean {p}, loadings {}x{}, idio_var {}",
                self.loadings.nrows(),
                self.loadings.ncols(),
                self.idio_var.len()
            ));
        }
        if self.idio_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return domain("idiosyncratic variances must be positive and finite");
        }
        if self.mean.iter().chain(self.loadings.iter()).any(|v| !v.is_finite()) {
            return domain("non-finite mean or loadings");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Dense covariance; for reporting and tests only.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut c = &self.loadings * self.loadings.transpose();
        for i in 0..self.dim() {
            c[(i, i)] += self.idio_var[i];
        }
        c
    }

    pub fn prepare(&self) -> Result<PreparedLowRank> {
        self.check()?;
        let p = self.dim();
        let h = self.loadings.ncols();
        let inv_idio = self.idio_var.map(|v| 1.0 / v);
        let mut weighted_t = self.loadings.transpose();
        for i in 0..p {
            weighted_t.column_mut(i).scale_mut(inv_idio[i]);
        }
        let mut m = &weighted_t * &self.loadings;
        for j in 0..h {
            m[(j, j)] += 1.0;
        }
        let (chol, _) = cholesky_spd(&m)?;
        let log_det_m: f64 = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_det_xi: f64 = self.idio_var.iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * (p as f64 * LN_2PI + log_det_m + log_det_xi);
        Ok(PreparedLowRank { mean: self.mean.clone(), inv_idio, weighted_t, chol_m: chol, log_norm })
    }
}

impl PreparedLowRank {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density at `y`, O(pH + H²).
    pub fn log_density(&self, y: &[f64]) -> f64 {
        let p = self.dim();
        let h = self.chol_m.nrows();
        let mut quad = 0.0;
        let mut w = vec![0.0; h];
        for i in 0..p {
            let r = y[i] - self.mean[i];
            quad += r * r * self.inv_idio[i];
            let col = self.weighted_t.column(i);
            for j in 0..h {
                w[j] += col[j] * r;
            }
        }
        // forward substitution: L z = w
        for j in 0..h {
            let mut s = w[j];
            for l in 0..j {
                s -= self.chol_m[(j, l)] * w[l];
            }
            w[j] = s / self.chol_m[(j, j)];
        }
        let corr: f64 = w.iter().map(|z| z * z).sum();
        self.log_norm - 0.5 * (quad - corr)
    }
}

/// Log density of `y` under `g`, never forming the p x p covariance.
pub fn log_mvn_lowrank(y: &[f64], g: &LowRankGaussian) -> Result<f64> {
    if y.len() != g.dim() {
        return domain(format!("observation has length {}, expected {}", y.len(), g.dim()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return domain("non-finite observation");
    }
    Ok(g.prepare()?.log_density(y))
}

/// Central multivariate Student-t with scale matrix `scale * I_p`.
pub fn log_mv_t_isotropic(x: &[f64], dof: f64, scale: f64) -> Result<f64> {
    if !(dof > 0.0 && dof.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return domain(format!("t density needs positive dof and scale, got dof={dof}, scale={scale}"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return domain("non-finite argument to t density");
    }
    let p = x.len() as f64;
    let ss: f64 = x.iter().map(|v| v * v).sum();
    Ok(ln_gamma(0.5 * (dof + p)) - ln_gamma(0.5 * dof)
        - 0.5 * p * (dof * PI).ln()
        - 0.5 * p * scale.ln()
        - 0.5 * (dof + p) * (ss / (dof * scale)).ln_1p())
}

/// F-distribution log density with `nu_l` numerator and `nu_r` denominator
/// degrees of freedom.
pub fn log_f_density(x: f64, nu_l: f64, nu_r: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("F density needs x > 0, got {x}"));
    }
    if !(nu_l > 0.0 && nu_r > 0.0) {
        return domain("F density needs positive degrees of freedom");
    }
    Ok(0.5 * (nu_l * nu_l.ln() + nu_r * nu_r.ln()) + (0.5 * nu_l - 1.0) * x.ln()
        - 0.5 * (nu_l + nu_r) * (nu_r + nu_l * x).ln()
        - ln_beta(0.5 * nu_l, 0.5 * nu_r))
}

/// Gamma log density, shape/rate parameterization.
pub fn log_gamma_density(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(x > 0.0) || !(shape > 0.0) || !(rate > 0.0) {
        return domain(format!("gamma density: x={x}, shape={shape}, rate={rate}"));
    }
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
