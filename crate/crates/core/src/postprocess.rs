//! Identification of cluster-specific quantities from a raw trace.
//!
//! The pipeline keeps the draws whose number of filled clusters equals its
//! mode, resolves label switching by clustering per-cluster summaries of
//! every kept draw, then keeps the draws whose active-factor counts agree
//! with their per-cluster modes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::linalg::sorted_symmetric_eigen;
use crate::kernel::{log_mvn_lowrank, LowRankGaussian, RngStream};
use crate::kmeans::kmeans;
use crate::model::{Dataset, DrawRecord};

const RELABEL_RESTARTS: usize = 10;

/// Draw counts entering and leaving one filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttritionStage {
    pub stage: String,
    pub draws_in: usize,
    pub retained: usize,
    pub removed: usize,
}

impl AttritionStage {
    fn new(stage: &str, draws_in: usize, retained: usize) -> Self {
        Self { stage: stage.into(), draws_in, retained, removed: draws_in - retained }
    }
}

fn attrition_text(stages: &[AttritionStage]) -> String {
    stages
        .iter()
        .map(|s| format!("{}: {} in, {} kept, {} removed", s.stage, s.draws_in, s.retained, s.removed))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Identified posterior summaries.
#[derive(Clone, Debug)]
pub struct IdentifiedPosterior {
    pub k_hat: usize,
    pub h_hat: Vec<usize>,
    /// Draws with `K_plus = K_hat`.
    pub m_tilde: usize,
    /// Draws surviving every filter.
    pub m_retained: usize,
    /// Final draws, relabeled.
    pub draws: Vec<DrawRecord>,
    /// Position in the input trace of each final draw.
    pub draw_index: Vec<usize>,
    pub attrition: Vec<AttritionStage>,
    pub mu_mean: Vec<DVector<f64>>,
    pub omega_mean: Vec<DMatrix<f64>>,
    /// Entrywise posterior mean of `Ω²`, for error moments.
    pub omega_sq_mean: Vec<DMatrix<f64>>,
    /// Active-column counts per cluster over the relabeled draws, before
    /// the mode filter: `h_counts[k][h]`.
    pub h_counts: Vec<Vec<usize>>,
}

fn mode_smallest(values: impl Iterator<Item = usize>) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    // BTreeMap iterates ascending, so the first maximum is the smallest value
    let mut best: Option<(usize, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

/// Mode of `K_plus` (ties go to the smaller value) and the positions of
/// the draws attaining it.
pub fn select_mode_kplus(trace: &[DrawRecord]) -> Result<(usize, Vec<usize>)> {
    let k_hat = mode_smallest(trace.iter().map(|d| d.k_plus))
        .ok_or_else(|| Error::Postprocess("trace contains no draws".into()))?;
    let keep = trace.iter().enumerate().filter(|(_, d)| d.k_plus == k_hat).map(|(i, _)| i).collect();
    Ok((k_hat, keep))
}

/// `(μ^T, log|Ω|, log tr Ω, log(v_max / v_min))` for each cluster of a draw.
pub fn draw_features(draw: &DrawRecord) -> Vec<Vec<f64>> {
    draw.clusters
        .iter()
        .map(|c| {
            let omega = c.omega();
            let (values, _) = sorted_symmetric_eigen(&omega);
            let vmax = values[0];
            let vmin = values[values.len() - 1];
            let log_det: f64 = values.iter().map(|v| v.ln()).sum();
            let mut f = c.mu.clone();
            f.extend([log_det, omega.trace().ln(), (vmax / vmin).ln()]);
            f
        })
        .collect()
}

/// Outcome of the label-switching step.
#[derive(Clone, Debug)]
pub struct Relabeled {
    pub draws: Vec<DrawRecord>,
    /// Position in the input of each kept draw.
    pub kept: Vec<usize>,
    /// Old cluster index to new one, per kept draw.
    pub perms: Vec<Vec<usize>>,
}

/// Clusters every draw's per-cluster features into `k_hat` groups and keeps
/// the draws whose clusters land in distinct groups, reordered by group.
pub fn relabel_draws(draws: &[DrawRecord], k_hat: usize, seed: u64) -> Result<Relabeled> {
    if draws.iter().any(|d| d.k_plus != k_hat) {
        return Err(Error::Postprocess(format!("relabeling expects every draw to have {k_hat} clusters")));
    }
    if draws.is_empty() {
        return Err(Error::Postprocess("no draws to relabel".into()));
    }
    let feats: Vec<Vec<Vec<f64>>> = draws.par_iter().map(draw_features).collect();
    let mut points: Vec<Vec<f64>> = feats.iter().flatten().cloned().collect();
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Postprocess("non-finite draw features".into()));
    }
    let dim = points[0].len();
    let n = points.len() as f64;
    for j in 0..dim {
        let m = points.iter().map(|x| x[j]).sum::<f64>() / n;
        let sd = (points.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for x in points.iter_mut() {
            x[j] = (x[j] - m) / sd;
        }
    }
    let mut rng = RngStream::new(seed, 0);
    let km = kmeans(&points, k_hat, RELABEL_RESTARTS, &mut rng)?;
    let mut out = Relabeled { draws: Vec::new(), kept: Vec::new(), perms: Vec::new() };
    for (m, d) in draws.iter().enumerate() {
        let perm: Vec<usize> = km.labels[m * k_hat..(m + 1) * k_hat].to_vec();
        let mut seen = vec![false; k_hat];
        for &j in &perm {
            seen[j] = true;
        }
        if seen.iter().all(|s| *s) {
            out.draws.push(d.permuted(&perm));
            out.kept.push(m);
            out.perms.push(perm);
        }
    }
    Ok(out)
}

/// Per-cluster mode of the active-factor count (ties go smaller) and the
/// positions of the draws matching it in every cluster.
pub fn select_mode_h(draws: &[DrawRecord]) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = draws.first().map(|d| d.k_plus).ok_or_else(|| Error::Postprocess("no draws".into()))?;
    let h_hat: Vec<usize> =
        (0..k).map(|j| mode_smallest(draws.iter().map(|d| d.clusters[j].h_active())).unwrap_or(0)).collect();
    let keep = draws.iter().enumerate().filter(|(_, d)| d.h_active() == h_hat).map(|(i, _)| i).collect();
    Ok((h_hat, keep))
}

/// Loadings restricted to the active columns, in their original order.
pub fn extract_active_loadings(draw: &DrawRecord) -> Vec<DMatrix<f64>> {
    draw.clusters
        .iter()
        .map(|c| {
            let l = c.lambda();
            let cols: Vec<usize> = (0..c.n_columns()).filter(|&j| c.indicator[j] != 0).collect();
            l.select_columns(cols.iter())
        })
        .collect()
}

/// Average of `Λ Λ^T + Ξ` (all columns) per cluster.
pub fn posterior_covariance(draws: &[DrawRecord]) -> Result<Vec<DMatrix<f64>>> {
    Ok(posterior_covariance_moments(draws)?.0)
}

/// Entrywise first and second posterior moments of each cluster's `Ω`.
pub fn posterior_covariance_moments(draws: &[DrawRecord]) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let first = draws.first().ok_or_else(|| Error::Postprocess("no draws to average".into()))?;
    let zeros: Vec<DMatrix<f64>> = first.clusters.iter().map(|c| DMatrix::zeros(c.dim(), c.dim())).collect();
    let mut acc = zeros.clone();
    let mut acc_sq = zeros;
    for d in draws {
        for ((a, s), c) in acc.iter_mut().zip(acc_sq.iter_mut()).zip(&d.clusters) {
            let o = c.omega();
            *s += o.component_mul(&o);
            *a += o;
        }
    }
    let m = draws.len() as f64;
    Ok((acc.into_iter().map(|a| a / m).collect(), acc_sq.into_iter().map(|a| a / m).collect()))
}

/// `counts[k][h]`: number of draws in which cluster `k` has `h` active columns.
pub fn h_counts(draws: &[DrawRecord]) -> Vec<Vec<usize>> {
    let Some(first) = draws.first() else { return Vec::new() };
    let mut out: Vec<Vec<usize>> = first.clusters.iter().map(|c| vec![0; c.n_columns() + 1]).collect();
    for d in draws {
        for (row, c) in out.iter_mut().zip(&d.clusters) {
            row[c.h_active()] += 1;
        }
    }
    out
}

pub fn posterior_mean_mu(draws: &[DrawRecord]) -> Result<Vec<DVector<f64>>> {
    let first = draws.first().ok_or_else(|| Error::Postprocess("no draws to average".into()))?;
    let mut acc: Vec<DVector<f64>> = first.clusters.iter().map(|c| DVector::zeros(c.dim())).collect();
    for d in draws {
        for (a, c) in acc.iter_mut().zip(&d.clusters) {
            *a += c.mu_vec();
        }
    }
    let m = draws.len() as f64;
    Ok(acc.into_iter().map(|a| a / m).collect())
}

/// Most frequent label per observation over draws carrying allocations
/// (ties go to the smaller label); `None` when no draw carries them.
pub fn modal_allocation(draws: &[DrawRecord]) -> Option<Vec<usize>> {
    let with: Vec<&Vec<u32>> = draws.iter().filter_map(|d| d.alloc.as_ref()).collect();
    let t = with.first()?.len();
    Some((0..t).map(|i| mode_smallest(with.iter().map(|a| a[i] as usize)).unwrap()).collect())
}

/// `Σ_t log N(y_t; μ_{S_t}, Ω_{S_t})` for a draw with allocations.
pub fn complete_data_loglik(draw: &DrawRecord, data: &Dataset) -> Result<f64> {
    let alloc = draw.alloc.as_ref().ok_or_else(|| Error::Postprocess(format!("draw {} has no allocations", draw.iter)))?;
    let prepared = draw
        .clusters
        .iter()
        .map(|c| LowRankGaussian::new(c.mu_vec(), c.lambda(), DVector::from_column_slice(&c.xi2)))
        .collect::<Result<Vec<_>>>()?;
    let mut ll = 0.0;
    for (t, &s) in alloc.iter().enumerate() {
        ll += log_mvn_lowrank(&data.row(t), &prepared[s as usize])?;
    }
    Ok(ll)
}

/// The full pipeline: mode of `K_plus`, relabeling, mode of `H_k`,
/// posterior means.
pub fn identify(trace: &[DrawRecord], seed: u64) -> Result<IdentifiedPosterior> {
    let mut attrition = Vec::new();
    let (k_hat, keep_k) = select_mode_kplus(trace)?;
    attrition.push(AttritionStage::new("mode of K_plus", trace.len(), keep_k.len()));
    let filtered: Vec<DrawRecord> = keep_k.iter().map(|&i| trace[i].clone()).collect();

    let rel = relabel_draws(&filtered, k_hat, seed)?;
    attrition.push(AttritionStage::new("relabeling", filtered.len(), rel.draws.len()));
    if rel.draws.len() < 2 {
        return Err(Error::Postprocess(format!(
            "fewer than 2 draws left after relabeling ({})",
            attrition_text(&attrition)
        )));
    }

    let counts = h_counts(&rel.draws);
    let (h_hat, keep_h) = select_mode_h(&rel.draws)?;
    attrition.push(AttritionStage::new("mode of H_k", rel.draws.len(), keep_h.len()));
    let draws: Vec<DrawRecord> = keep_h.iter().map(|&i| rel.draws[i].clone()).collect();
    let draw_index: Vec<usize> = keep_h.iter().map(|&i| keep_k[rel.kept[i]]).collect();
    if draws.is_empty() {
        return Err(Error::Postprocess(format!("no draws left ({})", attrition_text(&attrition))));
    }
    let (omega_mean, omega_sq_mean) = posterior_covariance_moments(&draws)?;
    Ok(IdentifiedPosterior {
        k_hat,
        h_hat,
        m_tilde: keep_k.len(),
        m_retained: draws.len(),
        mu_mean: posterior_mean_mu(&draws)?,
        omega_mean,
        omega_sq_mean,
        h_counts: counts,
        draws,
        draw_index,
        attrition,
    })
}
