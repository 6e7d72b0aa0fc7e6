use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::BnbParams;
use crate::model::Dataset;

/// Fixed constants of the model plus sampler controls.
///
/// Field names double as keys of the `key=value` config format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Prior mean of the cluster means.
    pub b0_mean: Vec<f64>,
    /// Diagonal prior covariance of the cluster means.
    #[serde(rename = "B0_diag")]
    pub b0_cov_diag: Vec<f64>,
    pub bnb: BnbParams,
    pub nu_l: f64,
    pub nu_r: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_xi: f64,
    pub a_g: f64,
    pub b_g: Vec<f64>,
    pub a_theta: f64,
    pub a2: f64,
    pub b2: f64,
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "K_init")]
    pub k_init: usize,
    pub iters: u64,
    pub burnin: u64,
    pub thin: u64,
    #[serde(rename = "mh_scale_alpha_M")]
    pub mh_scale_alpha_m: f64,
    pub alpha1_step: f64,
    pub alpha2_step: f64,
}

/// Number of loading columns: `floor((p - 1) / 2)`, or `p` for small `p`.
pub fn default_h(p: usize, small_p_threshold: usize) -> usize {
    if p <= small_p_threshold {
        p
    } else {
        ((p - 1) / 2).max(1)
    }
}

/// Initial number of components: three times the expected cluster count, else 10.
pub fn default_k_init(expected_clusters: Option<usize>) -> usize {
    expected_clusters.map(|k| 3 * k.max(1)).unwrap_or(10)
}

pub const DEFAULT_SMALL_P: usize = 10;

impl Hyperparams {
    /// Default constants with data-dependent mean and variance scales:
    /// `b0 = median(y)`, `B0 = diag(R_i²)`, `b_gi = 100 / R_i²`.
    pub fn from_data(data: &Dataset) -> Result<Self> {
        let p = data.dim();
        let mut b0_mean = Vec::with_capacity(p);
        let mut b0_cov = Vec::with_capacity(p);
        let mut b_g = Vec::with_capacity(p);
        for j in 0..p {
            let r = data.column_range(j);
            if !(r > 0.0) {
                return Err(Error::Data(format!("column {} is constant", data.column_names[j])));
            }
            b0_mean.push(data.column_median(j));
            b0_cov.push(r * r);
            b_g.push(100.0 / (r * r));
        }
        Ok(Self::with_scales(b0_mean, b0_cov, b_g))
    }

    /// Default constants with explicitly supplied vector hyperparameters.
    pub fn with_scales(b0_mean: Vec<f64>, b0_cov_diag: Vec<f64>, b_g: Vec<f64>) -> Self {
        let p = b0_mean.len();
        Self {
            b0_mean,
            b0_cov_diag,
            bnb: BnbParams::default(),
            nu_l: 6.0,
            nu_r: 3.0,
            a_alpha: 6.0,
            b_alpha: 2.0,
            a_xi: 1.0,
            a_g: 3.0,
            b_g,
            a_theta: 3.0,
            a2: 2.0,
            b2: 1.0,
            a0: 21.0,
            a1: 1.0,
            b1: 1.0,
            h: default_h(p, DEFAULT_SMALL_P),
            k_init: default_k_init(None),
            iters: 50_000,
            burnin: 10_000,
            thin: 1,
            mh_scale_alpha_m: 0.75,
            alpha1_step: 2.0,
            alpha2_step: 0.11,
        }
    }

    pub fn dim(&self) -> usize {
        self.b0_mean.len()
    }

    /// Proposal standard deviation of the log-scale walk on `alpha_B`.
    pub fn alpha_b_step(&self) -> f64 {
        1.0 + self.alpha1_step * (1.0 - self.alpha2_step).powi(self.h as i32)
    }

    /// Starting value of `alpha_M`: mean of its F prior (1 when undefined).
    pub fn alpha_m_prior_mean(&self) -> f64 {
        if self.nu_r > 2.0 {
            self.nu_r / (self.nu_r - 2.0)
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        let cfg = |m: String| Err(Error::Config(m));
        if p == 0 {
            return cfg("b0_mean is empty".into());
        }
        if self.b0_cov_diag.len() != p || self.b_g.len() != p {
            return cfg(format!(
                "vector hyperparameters disagree in length: b0_mean {p}, B0_diag {}, b_g {}",
                self.b0_cov_diag.len(),
                self.b_g.len()
            ));
        }
        let positives = [
            ("alpha_lambda", self.bnb.alpha_lambda),
            ("a_pi", self.bnb.a_pi),
            ("b_pi", self.bnb.b_pi),
            ("nu_l", self.nu_l),
            ("nu_r", self.nu_r),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("a_xi", self.a_xi),
            ("a_g", self.a_g),
            ("a_theta", self.a_theta),
            ("a2", self.a2),
            ("b2", self.b2),
            ("a0", self.a0),
            ("a1", self.a1),
            ("b1", self.b1),
            ("mh_scale_alpha_M", self.mh_scale_alpha_m),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return cfg(format!("{name} must be positive, got {v}"));
            }
        }
        if self.b0_cov_diag.iter().chain(self.b_g.iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return cfg("B0_diag and b_g entries must be positive".into());
        }
        if self.b0_mean.iter().any(|v| !v.is_finite()) {
            return cfg("b0_mean must be finite".into());
        }
        if self.a0 <= self.a_theta {
            return cfg(format!(
                "spike shape a0 ({}) must exceed slab shape a_theta ({})",
                self.a0, self.a_theta
            ));
        }
        if self.h == 0 {
            return cfg("H must be at least 1".into());
        }
        if self.k_init == 0 {
            return cfg("K_init must be at least 1".into());
        }
        if self.thin == 0 {
            return cfg("thin must be at least 1".into());
        }
        if self.burnin > self.iters {
            return cfg(format!("burnin {} exceeds iters {}", self.burnin, self.iters));
        }
        if self.bnb.a_pi <= 1.0 {
            log::warn!("a_pi <= 1: the prior mean of K does not exist");
        }
        Ok(())
    }
}
