use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter values tried in order by [`cholesky_spd`].
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Lower Cholesky factor of `m + jI`, escalating `j` along [`JITTER_LADDER`].
///
/// Returns the factor together with the jitter that was applied.
pub fn cholesky_spd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !m.is_square() {
        return Err(Error::Domain(format!("cholesky of non-square {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("cholesky input contains non-finite entries".into()));
    }
    let n = m.nrows();
    for &jitter in JITTER_LADDER.iter() {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            let l = c.unpack();
            if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((l, jitter));
            }
        }
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Err(Error::Numerical(format!(
        "cholesky failed at max jitter {:e}: n={n}, eigenvalues in [{lo:e}, {hi:e}], condition {:e}",
        JITTER_LADDER[JITTER_LADDER.len() - 1],
        if lo > 0.0 { hi / lo } else { f64::INFINITY }
    )))
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_solve_mut(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
pub fn backward_solve_t_mut(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[(j, i)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `(L L^T) x = b`.
pub fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    forward_solve_mut(l, &mut x);
    backward_solve_t_mut(l, &mut x);
    x
}

/// Inverse of `L L^T`.
pub fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &chol_solve(l, &e));
    }
    inv
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}
