//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::Rng;

use crate::error::{domain, Result};

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub within_ss: f64,
}

impl KMeans {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centers.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Index of the nearest center to `x`; ties go to the lower index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        nearest(&self.centers, x).0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > u {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        let c = centers.last().unwrap();
        for (i, x) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, c));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let d = points[0].len();
    let k = centers.len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, x) in points.iter().enumerate() {
            let (j, _) = nearest(&centers, x);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut sizes = vec![0usize; k];
        for (x, &l) in points.iter().zip(&labels) {
            sizes[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / sizes[j] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let within_ss = points.iter().zip(&labels).map(|(x, &l)| sq_dist(x, &centers[l])).sum();
    KMeans { centers, labels, within_ss }
}

/// Best of `restarts` k-means runs by within-cluster sum of squares.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, restarts: usize, rng: &mut R) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return domain(format!("k-means with {k} centers on {} points", points.len()));
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let init = seed_plus_plus(points, k, rng);
        let run = lloyd(points, init, 300);
        if best.as_ref().is_none_or(|b| run.within_ss < b.within_ss) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}
