use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg;

use super::Model;

/// Gaussian target `N(mean, precision^{-1})` split into `shares` equal data
/// terms `f_i = (x - mean)' A (x - mean) / (2 shares)` with no prior term.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    precision: Vec<f64>,
    mean: Vec<f64>,
    shares: usize,
    eig_min: f64,
    eig_max: f64,
}

impl QuadraticModel {
    pub fn new(precision: Vec<f64>, mean: Vec<f64>, shares: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("quadratic model needs dimension >= 1"));
        }
        if shares == 0 {
            return Err(Error::invalid("quadratic model needs at least one share"));
        }
        check_len("precision matrix", precision.len(), d * d)?;
        check_finite("precision matrix", &precision)?;
        check_finite("mean", &mean)?;
        for i in 0..d {
            for j in 0..i {
                if (precision[i * d + j] - precision[j * d + i]).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "precision matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if linalg::cholesky(&precision, d).is_none() {
            return Err(Error::invalid("precision matrix is not positive definite"));
        }
        let ev = linalg::symmetric_eigenvalues(&precision, d);
        Ok(Self {
            precision,
            mean,
            shares,
            eig_min: ev[0],
            eig_max: ev[d - 1],
        })
    }

    /// Diagonal precision with zero mean.
    pub fn diagonal(diag: &[f64], shares: usize) -> Result<Self> {
        let d = diag.len();
        let mut a = vec![0.0; d * d];
        for (i, &v) in diag.iter().enumerate() {
            a[i * d + i] = v;
        }
        Self::new(a, vec![0.0; d], shares)
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Strong convexity constant `m` (smallest eigenvalue of A).
    pub fn strong_convexity(&self) -> f64 {
        self.eig_min
    }

    /// Gradient Lipschitz constant `M` (largest eigenvalue of A).
    pub fn lipschitz(&self) -> f64 {
        self.eig_max
    }

    fn centered_force(&self, x: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = linalg::dot(&self.precision[i * d..(i + 1) * d], &diff);
        }
    }
}

impl Model for QuadraticModel {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn num_terms(&self) -> usize {
        self.shares
    }

    fn prior_potential(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn add_prior_grad(&self, _x: &[f64], _scale: f64, _out: &mut [f64]) {}

    fn term_potential(&self, _i: usize, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d {
            q += diff[i] * linalg::dot(&self.precision[i * d..(i + 1) * d], &diff);
        }
        q / (2.0 * self.shares as f64)
    }

    fn add_term_grads(&self, x: &[f64], indices: &[usize], scale: f64, out: &mut [f64]) {
        if indices.is_empty() {
            return;
        }
        let mut g = vec![0.0; self.mean.len()];
        self.centered_force(x, &mut g);
        let w = scale * indices.len() as f64 / self.shares as f64;
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += w * gi;
        }
    }

    fn total_potential(&self, x: &[f64]) -> f64 {
        self.term_potential(0, x) * self.shares as f64
    }

    fn add_full_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let mut g = vec![0.0; self.mean.len()];
        self.centered_force(x, &mut g);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += scale * gi;
        }
    }

    fn hessian_vector(&self, _x: &[f64], v: &[f64], _eps: f64, out: &mut [f64]) {
        linalg::mat_vec(&self.precision, v, out);
    }
}
