use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::kernel::LowRankGaussian;
use crate::model::Dataset;

/// Parameters of one mixture component.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterParams {
    pub mu: DVector<f64>,
    /// p x H loadings; all H columns are always present.
    pub lambda: DMatrix<f64>,
    /// Idiosyncratic variances, the diagonal of Ξ.
    pub xi2: DVector<f64>,
    /// Column variances of the loadings.
    pub theta: DVector<f64>,
    /// Slab probabilities.
    pub tau: DVector<f64>,
    /// `true` marks an active (slab) column.
    pub indicator: Vec<bool>,
    /// Factor scores of the currently assigned observations, |T_k| x H,
    /// rows in increasing observation order.
    pub factors: DMatrix<f64>,
}

impl ClusterParams {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn n_columns(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn active_count(&self) -> usize {
        self.indicator.iter().filter(|b| **b).count()
    }

    pub fn low_rank(&self) -> LowRankGaussian {
        LowRankGaussian { mean: self.mu.clone(), loadings: self.lambda.clone(), idio_var: self.xi2.clone() }
    }

    /// `Λ Λ^T + Ξ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.low_rank().covariance()
    }
}

/// Full state of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    pub k_plus: usize,
    pub weights: Vec<f64>,
    /// Zero-based component index per observation.
    pub alloc: Vec<usize>,
    pub counts: Vec<usize>,
    pub clusters: Vec<ClusterParams>,
    pub alpha_m: f64,
    pub alpha_b: f64,
    pub b_xi: DVector<f64>,
    pub b_theta: f64,
    pub b0_spike: f64,
}

impl MixtureState {
    /// Number of components K.
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    /// Observation indices per component, each sorted ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (t, &k) in self.alloc.iter().enumerate() {
            m[k].push(t);
        }
        m
    }

    pub fn recount(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &k in &self.alloc {
            if k < c.len() {
                c[k] += 1;
            }
        }
        c
    }
}

/// A broken structural invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    KPlusExceedsK { k_plus: usize, k: usize },
    LengthMismatch(String),
    AllocOutOfRange { t: usize, label: usize },
    CountsMismatch,
    CountsTotal { total: usize, expected: usize },
    EmptyBeforeFilled { position: usize },
    FilledCount { k_plus: usize, filled: usize },
    Simplex { sum: f64 },
    NonPositive(String),
    NonFinite(String),
    Shape(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::KPlusExceedsK { k_plus, k } => write!(f, "K_plus {k_plus} exceeds K {k}"),
            Violation::LengthMismatch(s) => write!(f, "length mismatch: {s}"),
            Violation::AllocOutOfRange { t, label } => write!(f, "allocation of observation {t} is {label}, out of range"),
            Violation::CountsMismatch => write!(f, "counts disagree with allocations"),
            Violation::CountsTotal { total, expected } => write!(f, "counts sum to {total}, expected {expected}"),
            Violation::EmptyBeforeFilled { position } => {
                write!(f, "empty component before filled (position {position})")
            }
            Violation::FilledCount { k_plus, filled } => write!(f, "K_plus is {k_plus} but {filled} components are filled"),
            Violation::Simplex { sum } => write!(f, "simplex: weights sum to {sum}"),
            Violation::NonPositive(s) => write!(f, "non-positive {s}"),
            Violation::NonFinite(s) => write!(f, "non-finite {s}"),
            Violation::Shape(s) => write!(f, "shape: {s}"),
        }
    }
}

const SIMPLEX_TOL: f64 = 1e-9;

/// Structural invariants of a state; empty iff everything holds.
pub fn validate(state: &MixtureState, data: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = state.k();
    let t_total = data.n_obs();
    let p = data.dim();

    if state.k_plus > k {
        out.push(Violation::KPlusExceedsK { k_plus: state.k_plus, k });
    }
    if state.weights.len() != k {
        out.push(Violation::LengthMismatch(format!("{} weights for {k} components", state.weights.len())));
    }
    if state.counts.len() != k {
        out.push(Violation::LengthMismatch(format!("{} counts for {k} components", state.counts.len())));
    }
    if state.alloc.len() != t_total {
        out.push(Violation::LengthMismatch(format!("{} allocations for {t_total} observations", state.alloc.len())));
    }
    for (t, &a) in state.alloc.iter().enumerate() {
        if a >= k {
            out.push(Violation::AllocOutOfRange { t, label: a });
            break;
        }
    }
    let total: usize = state.counts.iter().sum();
    if total != t_total {
        out.push(Violation::CountsTotal { total, expected: t_total });
    }
    if state.counts.len() == k && state.recount() != state.counts {
        out.push(Violation::CountsMismatch);
    }
    if let Some(pos) = state.counts.iter().position(|c| *c == 0) {
        if state.counts[pos..].iter().any(|c| *c > 0) {
            out.push(Violation::EmptyBeforeFilled { position: pos });
        }
    }
    let filled = state.counts.iter().filter(|c| **c > 0).count();
    if filled != state.k_plus {
        out.push(Violation::FilledCount { k_plus: state.k_plus, filled });
    }
    let sum: f64 = state.weights.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL || state.weights.iter().any(|w| !(*w >= 0.0)) {
        out.push(Violation::Simplex { sum });
    }
    for (name, v) in [("alpha_M", state.alpha_m), ("alpha_B", state.alpha_b), ("b_theta", state.b_theta), ("b_0", state.b0_spike)] {
        if !(v > 0.0 && v.is_finite()) {
            out.push(Violation::NonPositive(name.into()));
        }
    }
    if state.b_xi.len() != p || state.b_xi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        out.push(Violation::NonPositive("b_xi".into()));
    }
    let h = state.clusters.first().map(|c| c.n_columns()).unwrap_or(0);
    for (j, c) in state.clusters.iter().enumerate() {
        if c.mu.len() != p || c.lambda.nrows() != p || c.xi2.len() != p {
            out.push(Violation::Shape(format!("component {j} has wrong dimension")));
            continue;
        }
        if c.lambda.ncols() != h || c.theta.len() != h || c.tau.len() != h || c.indicator.len() != h {
            out.push(Violation::Shape(format!("component {j} does not have {h} loading columns")));
            continue;
        }
        if c.xi2.iter().chain(c.theta.iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            out.push(Violation::NonPositive(format!("variance in component {j}")));
        }
        if c.tau.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            out.push(Violation::Shape(format!("slab probability outside (0,1) in component {j}")));
        }
        if c.mu.iter().chain(c.lambda.iter()).any(|v| !v.is_finite()) {
            out.push(Violation::NonFinite(format!("mean or loadings in component {j}")));
        }
    }
    out
}
