use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observations, one row per observation.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// T x p values.
    pub values: DMatrix<f64>,
    pub column_names: Vec<String>,
    /// Zero-based ground-truth labels, when known.
    pub truth_labels: Option<Vec<usize>>,
    /// Sample mean removed by standardization (zeros otherwise).
    pub center: DVector<f64>,
    /// Scale divided out by standardization (ones otherwise).
    pub scale: DVector<f64>,
    pub standardized: bool,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, truth_labels: Option<Vec<usize>>) -> Result<Self> {
        let (t, p) = values.shape();
        if t == 0 || p == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        if let Some(l) = &truth_labels {
            if l.len() != t {
                return Err(Error::Data(format!("{} labels for {t} observations", l.len())));
            }
        }
        if t <= p {
            log::warn!("only {t} observations for {p} variables; expect unreliable estimates");
        }
        Ok(Self {
            values,
            column_names: (1..=p).map(|i| format!("y{i}")).collect(),
            truth_labels,
            center: DVector::zeros(p),
            scale: DVector::from_element(p, 1.0),
            standardized: false,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    /// Observations as columns (p x T), the layout the sampler works in.
    pub fn by_column(&self) -> DMatrix<f64> {
        self.values.transpose()
    }

    pub fn column_median(&self, j: usize) -> f64 {
        let mut v: Vec<f64> = self.values.column(j).iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn column_range(&self, j: usize) -> f64 {
        let c = self.values.column(j);
        c.max() - c.min()
    }
}
