//! Agreement between estimated and true partitions, and covariance error.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::DrawRecord;

/// Contingency counts with rows indexed by true class and columns by
/// estimated cluster, both in ascending label order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_labels: Vec<usize>,
    pub est_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion_matrix(est: &[usize], truth: &[usize]) -> Result<Confusion> {
    if est.len() != truth.len() {
        return domain(format!("label vectors differ in length: {} vs {}", est.len(), truth.len()));
    }
    let index = |v: &[usize]| -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &l in v {
            m.entry(l).or_insert(0);
        }
        for (i, (_, slot)) in m.iter_mut().enumerate() {
            *slot = i;
        }
        m
    };
    let ti = index(truth);
    let ei = index(est);
    let mut counts = vec![vec![0u64; ei.len()]; ti.len()];
    for (e, t) in est.iter().zip(truth) {
        counts[ti[t]][ei[e]] += 1;
    }
    Ok(Confusion { true_labels: ti.keys().copied().collect(), est_labels: ei.keys().copied().collect(), counts })
}

fn pairs(n: u64) -> i128 {
    let n = n as i128;
    n * (n - 1) / 2
}

/// Hubert-Arabie adjusted Rand index.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return domain(format!("label vectors differ in length: {} vs {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return domain("adjusted Rand index needs at least two observations");
    }
    let c = confusion_matrix(a, b)?;
    let index: i128 = c.counts.iter().flatten().map(|&n| pairs(n)).sum();
    let rows: i128 = c.counts.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: i128 = (0..c.est_labels.len()).map(|j| pairs(c.counts.iter().map(|r| r[j]).sum())).sum();
    let n = pairs(a.len() as u64);
    // (index - rows*cols/n) / ((rows+cols)/2 - rows*cols/n), scaled by 2n
    let num = 2 * (n * index - rows * cols);
    let den = n * (rows + cols) - 2 * rows * cols;
    if den == 0 {
        return Ok(if num == 0 { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

/// Minimum-cost perfect assignment on a square matrix; `result[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // potentials formulation, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Optimal one-to-one matching of estimated clusters to true classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(estimated label, true label)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub correct: u64,
    pub total: u64,
}

impl Matching {
    pub fn error_pct(&self) -> f64 {
        100.0 * (self.total - self.correct) as f64 / self.total as f64
    }

    pub fn true_of(&self, est: usize) -> Option<usize> {
        self.pairs.iter().find(|(e, _)| *e == est).map(|(_, t)| *t)
    }
}

/// Matching maximizing the number of correctly placed observations.
/// Estimated clusters left without a partner count as errors.
pub fn optimal_matching(est: &[usize], truth: &[usize]) -> Result<Matching> {
    let c = confusion_matrix(est, truth)?;
    let n = c.true_labels.len().max(c.est_labels.len());
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|e| {
            (0..n)
                .map(|t| {
                    if e < c.est_labels.len() && t < c.true_labels.len() {
                        -(c.counts[t][e] as f64)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let assign = hungarian(&cost);
    let mut pairs = Vec::new();
    let mut correct = 0;
    for (e, &t) in assign.iter().enumerate() {
        if e < c.est_labels.len() && t < c.true_labels.len() {
            correct += c.counts[t][e];
            pairs.push((c.est_labels[e], c.true_labels[t]));
        }
    }
    Ok(Matching { pairs, correct, total: est.len() as u64 })
}

/// Percentage of observations misplaced under the optimal matching.
pub fn misclassification_rate(est: &[usize], truth: &[usize]) -> Result<f64> {
    if est.is_empty() {
        return domain("no labels to compare");
    }
    Ok(optimal_matching(est, truth)?.error_pct())
}

fn triangle_mse(diff_sq: impl Fn(usize, usize) -> f64, p: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..p {
        for l in i..p {
            s += diff_sq(i, l);
        }
    }
    s / (p * (p + 1) / 2) as f64
}

/// Mean over the upper triangle (with diagonal) of the squared error of
/// each draw's covariance, averaged over draws.
pub fn mse_omega_draws(draws: &[DrawRecord], cluster: usize, truth: &DMatrix<f64>) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Postprocess("no draws for covariance error".into()));
    }
    let p = truth.nrows();
    let mut total = 0.0;
    for d in draws {
        let o = d.clusters[cluster].omega();
        total += triangle_mse(|i, l| (o[(i, l)] - truth[(i, l)]).powi(2), p);
    }
    Ok(total / draws.len() as f64)
}

/// Same as [`mse_omega_draws`] from the posterior first and second moments
/// of each entry.
pub fn mse_omega_moments(mean: &DMatrix<f64>, mean_sq: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let p = truth.nrows();
    triangle_mse(|i, l| mean_sq[(i, l)] - 2.0 * truth[(i, l)] * mean[(i, l)] + truth[(i, l)].powi(2), p).max(0.0)
}

/// Scores of one estimate against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub ari: f64,
    pub error_pct: f64,
    /// `(estimated cluster, matched true cluster, MSE)`.
    pub mse_omega: Vec<(usize, usize, f64)>,
    pub confusion: Confusion,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClusterDraw;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap(), -0.5);
        let a = [0, 0, 1, 1, 1, 2, 2, 0];
        let b = [1, 0, 1, 2, 1, 2, 0, 0];
        let relab: Vec<usize> = a.iter().map(|x| [5, 3, 9][*x]).collect();
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), adjusted_rand_index(&relab, &b).unwrap());
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn misclassification_examples() {
        assert_eq!(misclassification_rate(&[1, 1, 2, 2], &[2, 2, 1, 1]).unwrap(), 0.0);
        let truth: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let mut est = truth.clone();
        est[3] = 1;
        assert_eq!(misclassification_rate(&est, &truth).unwrap(), 1.0);
        assert_eq!(misclassification_rate(&[0; 100], &truth).unwrap(), 50.0);
    }

    #[test]
    fn extra_estimated_clusters_count_as_errors() {
        let truth = [0, 0, 0, 1, 1, 1];
        let est = [0, 0, 2, 1, 1, 3];
        assert_abs_diff_eq!(misclassification_rate(&est, &truth).unwrap(), 200.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn hungarian_finds_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn confusion_properties() {
        let c = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
        assert_eq!(c.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert_eq!(c.total(), 4);
        let c2 = confusion_matrix(&[2, 1, 0, 0], &[0, 1, 2, 2]).unwrap();
        assert_eq!(c2.counts, vec![vec![0, 0, 1], vec![0, 1, 0], vec![2, 0, 0]]);
    }

    fn draw_with(omega_diag: [f64; 2]) -> DrawRecord {
        DrawRecord {
            iter: 1,
            k: 1,
            k_plus: 1,
            counts: vec![1],
            alpha_m: 1.0,
            alpha_b: 1.0,
            b_theta: 1.0,
            b0_spike: 1.0,
            clusters: vec![ClusterDraw {
                mu: vec![0.0, 0.0],
                lambda_rowmajor: vec![0.0, 0.0],
                xi2: omega_diag.to_vec(),
                theta: vec![1.0],
                tau: vec![0.5],
                indicator: vec![0],
            }],
            alloc: None,
        }
    }

    #[test]
    fn mse_examples() {
        let truth = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(mse_omega_draws(&[draw_with([1.0, 2.0])], 0, &truth).unwrap(), 0.0);
        let c = 0.3;
        let m = mse_omega_draws(&[draw_with([1.0 + c, 2.0])], 0, &truth).unwrap();
        assert_abs_diff_eq!(m, c * c / 3.0, epsilon = 1e-15);
        let draws = [draw_with([1.2, 2.0]), draw_with([0.9, 2.5])];
        let om: Vec<_> = draws.iter().map(|d| d.clusters[0].omega()).collect();
        let mean = (&om[0] + &om[1]) / 2.0;
        let sq = (om[0].component_mul(&om[0]) + om[1].component_mul(&om[1])) / 2.0;
        assert_abs_diff_eq!(mse_omega_moments(&mean, &sq, &truth), mse_omega_draws(&draws, 0, &truth).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn mse_uses_one_triangle() {
        let truth = DMatrix::<f64>::identity(2, 2);
        let mut upper = DMatrix::<f64>::identity(2, 2);
        upper[(0, 1)] = 0.5;
        upper[(1, 0)] = 0.5;
        let sq = upper.component_mul(&upper);
        // a symmetric off-diagonal error enters once
        assert_abs_diff_eq!(mse_omega_moments(&upper, &sq, &truth), 0.25 / 3.0, epsilon = 1e-15);
    }
}
