//! Synthetic data from known mixtures of factor analysers, and the
//! standardization transform.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{draw_inverse_gamma, draw_standard_normal, sample_categorical_from_logits, RngStream};
use crate::model::Dataset;

/// Weights of the six-cluster design before normalization.
pub const STUDY2_WEIGHTS: [f64; 6] = [0.25, 0.25, 0.2, 0.15, 0.1, 0.05];
pub const STUDY2_P: usize = 20;
pub const STUDY2_T: usize = 700;

/// Parameters of one generating cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueCluster {
    pub mu: Vec<f64>,
    /// p x H_k, row-major.
    pub lambda_rowmajor: Vec<f64>,
    pub h: usize,
    pub xi2: Vec<f64>,
    /// p x p, row-major.
    pub omega_rowmajor: Vec<f64>,
}

impl TrueCluster {
    fn new(mu: DVector<f64>, lambda: DMatrix<f64>, xi2: DVector<f64>) -> Self {
        let mut omega = &lambda * lambda.transpose();
        for i in 0..mu.len() {
            omega[(i, i)] += xi2[i];
        }
        Self {
            mu: mu.iter().copied().collect(),
            lambda_rowmajor: row_major(&lambda),
            h: lambda.ncols(),
            xi2: xi2.iter().copied().collect(),
            omega_rowmajor: row_major(&omega),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn lambda(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.h, &self.lambda_rowmajor)
    }

    pub fn omega(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.omega_rowmajor)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Ground truth of a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Zero-based generating cluster per observation.
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub clusters: Vec<TrueCluster>,
    /// Free-form provenance, e.g. weight corrections applied.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SimTruth {
    pub fn k_true(&self) -> usize {
        self.clusters.len()
    }

    pub fn h_true(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.h).collect()
    }

    pub fn omegas(&self) -> Vec<DMatrix<f64>> {
        self.clusters.iter().map(TrueCluster::omega).collect()
    }
}

/// Draws a dataset from a mixture of factor analysers with the shared
/// simulation mechanics: standard normal loadings and factors,
/// `ξ² ~ IG(2, 1)`, and means centered at `(2k - K - 1)` in every
/// coordinate with unit-variance noise.
pub fn gen_mixture(p: usize, t: usize, weights: &[f64], h: &[usize], rng: &mut RngStream) -> Result<(Dataset, SimTruth)> {
    let k = weights.len();
    if p == 0 || t == 0 || k == 0 || h.len() != k {
        return Err(Error::Config("simulation needs p, T, and one H per cluster".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("simulation weights must be nonnegative with positive sum".into()));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut clusters = Vec::with_capacity(k);
    for (j, &hj) in h.iter().enumerate() {
        let offset = (2 * (j + 1)) as f64 - k as f64 - 1.0;
        let mu = DVector::from_fn(p, |_, _| offset + draw_standard_normal(rng));
        let lambda = DMatrix::from_fn(p, hj, |_, _| draw_standard_normal(rng));
        let mut xi2 = DVector::zeros(p);
        for i in 0..p {
            xi2[i] = draw_inverse_gamma(2.0, 1.0, rng)?;
        }
        clusters.push(TrueCluster::new(mu, lambda, xi2));
    }
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut labels = Vec::with_capacity(t);
    let mut values = DMatrix::zeros(t, p);
    let lambdas: Vec<DMatrix<f64>> = clusters.iter().map(TrueCluster::lambda).collect();
    for row in 0..t {
        let s = sample_categorical_from_logits(&log_w, rng)?;
        labels.push(s);
        let c = &clusters[s];
        let f = DVector::from_fn(c.h, |_, _| draw_standard_normal(rng));
        let lf = &lambdas[s] * f;
        for i in 0..p {
            values[(row, i)] = c.mu[i] + lf[i] + c.xi2[i].sqrt() * draw_standard_normal(rng);
        }
    }
    let data = Dataset::new(values, Some(labels.clone()))?;
    Ok((data, SimTruth { labels, weights, clusters, notes: Vec::new() }))
}

/// Three equally weighted clusters with four factors each.
pub fn gen_study1(p: usize, t: usize, seed: u64) -> Result<(Dataset, SimTruth)> {
    let mut rng = RngStream::new(seed, 0);
    gen_mixture(p, t, &[1.0 / 3.0; 3], &[4, 4, 4], &mut rng)
}

/// Six clusters of unequal size in 20 dimensions, factor counts drawn
/// uniformly from 1 to 5.
pub fn gen_study2(seed: u64) -> Result<(Dataset, SimTruth)> {
    use rand::Rng;
    let mut rng = RngStream::new(seed, 0);
    let h: Vec<usize> = (0..STUDY2_WEIGHTS.len()).map(|_| rng.random_range(1..=5)).collect();
    let (data, mut truth) = gen_mixture(STUDY2_P, STUDY2_T, &STUDY2_WEIGHTS, &h, &mut rng)?;
    truth.notes.push("last weight set to 0.05 and weights normalized".into());
    Ok((data, truth))
}

/// Centers each column at its sample mean and divides by its sample
/// standard deviation (n - 1 denominator), mapping the truth alongside.
pub fn standardize(data: &Dataset, truth: Option<&SimTruth>) -> Result<(Dataset, Option<SimTruth>)> {
    let (t, p) = data.values.shape();
    if t < 2 {
        return Err(Error::Data("standardization needs at least two observations".into()));
    }
    let mut center = DVector::zeros(p);
    let mut scale = DVector::zeros(p);
    let mut values = data.values.clone();
    for j in 0..p {
        let col = data.values.column(j);
        let m = col.sum() / t as f64;
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (t - 1) as f64;
        let s = v.sqrt();
        if !(s > 0.0) {
            return Err(Error::Data(format!("column {} is constant", data.column_names[j])));
        }
        center[j] = m;
        scale[j] = s;
        for i in 0..t {
            values[(i, j)] = (values[(i, j)] - m) / s;
        }
    }
    let out = Dataset {
        values,
        column_names: data.column_names.clone(),
        truth_labels: data.truth_labels.clone(),
        center: center.clone(),
        scale: scale.clone(),
        standardized: true,
    };
    let truth = truth.map(|tr| {
        let clusters = tr
            .clusters
            .iter()
            .map(|c| {
                let mu = DVector::from_fn(p, |i, _| (c.mu[i] - center[i]) / scale[i]);
                let lambda = DMatrix::from_fn(p, c.h, |i, j| c.lambda()[(i, j)] / scale[i]);
                let xi2 = DVector::from_fn(p, |i, _| c.xi2[i] / (scale[i] * scale[i]));
                TrueCluster::new(mu, lambda, xi2)
            })
            .collect();
        SimTruth { clusters, ..tr.clone() }
    });
    Ok((out, truth))
}
