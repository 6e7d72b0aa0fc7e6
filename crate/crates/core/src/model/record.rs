use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{ClusterParams, MixtureState};

/// One filled component inside a [`DrawRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDraw {
    pub mu: Vec<f64>,
    /// p x H loadings, row-major.
    pub lambda_rowmajor: Vec<f64>,
    pub xi2: Vec<f64>,
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub indicator: Vec<u8>,
}

/// One retained draw, the unit written to trace files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub iter: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K_plus")]
    pub k_plus: usize,
    /// Sizes of the filled components.
    pub counts: Vec<usize>,
    #[serde(rename = "alpha_M")]
    pub alpha_m: f64,
    #[serde(rename = "alpha_B")]
    pub alpha_b: f64,
    pub b_theta: f64,
    #[serde(rename = "b_0")]
    pub b0_spike: f64,
    pub clusters: Vec<ClusterDraw>,
    /// Zero-based allocations, present on iterations selected by the
    /// allocation recording policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alloc: Option<Vec<u32>>,
}

impl ClusterDraw {
    pub fn from_params(c: &ClusterParams) -> Self {
        let (p, h) = c.lambda.shape();
        let mut lambda_rowmajor = Vec::with_capacity(p * h);
        for i in 0..p {
            for j in 0..h {
                lambda_rowmajor.push(c.lambda[(i, j)]);
            }
        }
        Self {
            mu: c.mu.iter().copied().collect(),
            lambda_rowmajor,
            xi2: c.xi2.iter().copied().collect(),
            theta: c.theta.iter().copied().collect(),
            tau: c.tau.iter().copied().collect(),
            indicator: c.indicator.iter().map(|b| *b as u8).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn n_columns(&self) -> usize {
        self.theta.len()
    }

    /// Number of active loading columns.
    pub fn h_active(&self) -> usize {
        self.indicator.iter().filter(|b| **b != 0).count()
    }

    pub fn lambda(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.n_columns(), &self.lambda_rowmajor)
    }

    /// `Λ Λ^T + Ξ` with all H columns.
    pub fn omega(&self) -> DMatrix<f64> {
        let l = self.lambda();
        let mut o = &l * l.transpose();
        for i in 0..self.dim() {
            o[(i, i)] += self.xi2[i];
        }
        o
    }

    pub fn mu_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mu)
    }
}

impl DrawRecord {
    pub fn from_state(iter: u64, state: &MixtureState, with_alloc: bool) -> Self {
        let kp = state.k_plus;
        Self {
            iter,
            k: state.k(),
            k_plus: kp,
            counts: state.counts[..kp].to_vec(),
            alpha_m: state.alpha_m,
            alpha_b: state.alpha_b,
            b_theta: state.b_theta,
            b0_spike: state.b0_spike,
            clusters: state.clusters[..kp].iter().map(ClusterDraw::from_params).collect(),
            alloc: with_alloc.then(|| state.alloc.iter().map(|&a| a as u32).collect()),
        }
    }

    /// Active-column counts per filled component.
    pub fn h_active(&self) -> Vec<usize> {
        self.clusters.iter().map(ClusterDraw::h_active).collect()
    }

    /// Reorders components so that old component `k` becomes `perm[k]`.
    ///
    /// `perm` must be a permutation of `0..k_plus`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.k_plus);
        let mut clusters = self.clusters.clone();
        let mut counts = self.counts.clone();
        for (old, &new) in perm.iter().enumerate() {
            clusters[new] = self.clusters[old].clone();
            counts[new] = self.counts[old];
        }
        Self {
            clusters,
            counts,
            alloc: self.alloc.as_ref().map(|a| a.iter().map(|&s| perm[s as usize] as u32).collect()),
            ..self.clone()
        }
    }
}
