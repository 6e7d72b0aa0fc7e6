//! Random draws. Gamma is shape/rate throughout (mean `shape / rate`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{domain, Error, Result};

fn check_pos(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {v}"))
    }
}

pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_pos("gamma shape", shape)?;
    check_pos("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    let x: f64 = g.sample(rng);
    Ok(x.max(f64::MIN_POSITIVE))
}

/// `1 / X` with `X ~ Gamma(shape, rate)`; mean `rate / (shape - 1)` for shape > 1.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate_of_inverse: f64, rng: &mut R) -> Result<f64> {
    let x = draw_gamma(shape, rate_of_inverse, rng)?;
    let v = 1.0 / x;
    if v.is_finite() {
        Ok(v)
    } else {
        Ok(f64::MAX)
    }
}

/// Beta draw clamped to the open unit interval.
pub fn draw_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_pos("beta a", a)?;
    check_pos("beta b", b)?;
    let d = Beta::new(a, b).map_err(|e| Error::Domain(e.to_string()))?;
    let x: f64 = d.sample(rng);
    Ok(x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

pub fn draw_bernoulli<R: Rng + ?Sized>(prob: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < prob
}

pub fn draw_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Log of a Gamma(shape, 1) draw, stable for tiny shapes.
fn draw_log_gamma_unit<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if shape >= 1.0 {
        return Ok(draw_gamma(shape, 1.0, rng)?.ln());
    }
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    let g = draw_gamma(shape + 1.0, 1.0, rng)?;
    let u: f64 = 1.0 - rng.random::<f64>();
    Ok(g.ln() + u.ln() / shape)
}

/// Dirichlet draw computed through log-gamma variates so that very small
/// concentrations do not underflow to an all-zero vector.
pub fn draw_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if conc.is_empty() {
        return domain("dirichlet needs at least one concentration");
    }
    let mut logs = Vec::with_capacity(conc.len());
    for &a in conc {
        check_pos("dirichlet concentration", a)?;
        logs.push(draw_log_gamma_unit(a, rng)?);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// `mean + L z` with `z ~ N(0, I)`.
pub fn draw_mvn_chol<R: Rng + ?Sized>(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let n = mean.len();
    if chol.nrows() != n || chol.ncols() != n {
        return domain("covariance factor dimension mismatch");
    }
    if (0..n).any(|i| !(chol[(i, i)] > 0.0)) {
        return domain("covariance factor needs a positive diagonal");
    }
    let z = DVector::from_fn(n, |_, _| draw_standard_normal(rng));
    Ok(mean + chol.lower_triangle() * z)
}

/// Index drawn with probability `softmax(logits)`.
pub fn sample_categorical_from_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<usize> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return domain("categorical logits have no finite entry");
    }
    let mut cum = Vec::with_capacity(logits.len());
    let mut total = 0.0;
    for &l in logits {
        total += (l - max).exp();
        cum.push(total);
    }
    let u = rng.random::<f64>() * total;
    let idx = cum.partition_point(|c| *c <= u);
    Ok(idx.min(logits.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStream;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn gamma_mean() {
        let mut rng = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| draw_gamma(6.0, 2.0, &mut rng).unwrap()).collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 3.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn inverse_gamma_spike_mean() {
        let mut rng = RngStream::new(2, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| draw_inverse_gamma(21.0, 1.0, &mut rng).unwrap()).collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 0.05).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn dirichlet_on_simplex_even_for_tiny_concentrations() {
        let mut rng = RngStream::new(3, 0);
        for conc in [vec![0.01; 12], vec![4.0, 2.0], vec![1e-4, 50.0, 1e-4]] {
            let w = draw_dirichlet(&conc, &mut rng).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn beta_stays_open() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..10_000 {
            let x = draw_beta(0.01, 2.0, &mut rng).unwrap();
            assert!(x > 0.0 && x < 1.0);
        }
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        let mut rng = RngStream::new(5, 0);
        assert!(draw_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(draw_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(draw_beta(1.0, 0.0, &mut rng).is_err());
        assert!(draw_dirichlet(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn categorical_edge_cases() {
        let mut rng = RngStream::new(6, 0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical_from_logits(&[0.0, f64::NEG_INFINITY], &mut rng).unwrap(), 0);
        }
        assert!(sample_categorical_from_logits(&[f64::NEG_INFINITY; 3], &mut rng).is_err());
    }

    #[test]
    fn categorical_symmetry() {
        let mut rng = RngStream::new(7, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample_categorical_from_logits(&[2.5, 2.5], &mut rng).unwrap() == 0).count();
        let se = (0.25 / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn categorical_shift_invariance() {
        let logits = [0.5, -1.25, 2.0, 0.0];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 1000.0).collect();
        let mut a = RngStream::new(8, 1);
        let mut b = RngStream::new(8, 1);
        for _ in 0..10_000 {
            assert_eq!(
                sample_categorical_from_logits(&logits, &mut a).unwrap(),
                sample_categorical_from_logits(&shifted, &mut b).unwrap()
            );
        }
    }
}
