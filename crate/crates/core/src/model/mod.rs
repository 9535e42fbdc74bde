//! Potentials of the form `f(x) = f0(x) + sum_i f_i(x)` with per-datum access.
//!
//! `f0` is the prior term and lives outside the per-datum terms; gradient
//! estimators decide how to fold it in. Indices into the data terms are
//! 0-based throughout.

mod localized;
mod logreg;
mod mlp;
mod quadratic;

use std::sync::Arc;

pub use localized::{localize, LocalizedModel};
pub use logreg::LogRegModel;
pub use mlp::MlpModel;
pub use quadratic::QuadraticModel;

use crate::error::{check_finite, check_len, Error, Result};

/// A differentiable potential split into a prior and `num_terms` data terms.
///
/// The `add_*` methods accumulate into `out` and do not validate their
/// arguments; they are the hot path of every sampler. Use the free functions
/// of this module ([`potential`], [`gradient`], ...) for checked access.
pub trait Model: Send + Sync {
    fn dim(&self) -> usize;

    fn num_terms(&self) -> usize;

    fn prior_potential(&self, x: &[f64]) -> f64;

    /// `out += scale * grad f0(x)`
    fn add_prior_grad(&self, x: &[f64], scale: f64, out: &mut [f64]);

    fn term_potential(&self, i: usize, x: &[f64]) -> f64;

    /// `out += scale * sum_{i in indices} grad f_i(x)`. Repeated indices
    /// contribute repeatedly.
    fn add_term_grads(&self, x: &[f64], indices: &[usize], scale: f64, out: &mut [f64]);

    /// Full potential `f0(x) + sum_i f_i(x)`.
    fn total_potential(&self, x: &[f64]) -> f64 {
        self.prior_potential(x) + (0..self.num_terms()).map(|i| self.term_potential(i, x)).sum::<f64>()
    }

    /// `out += scale * grad f(x)`.
    fn add_full_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.add_prior_grad(x, scale, out);
        let all: Vec<usize> = (0..self.num_terms()).collect();
        self.add_term_grads(x, &all, scale, out);
    }

    /// Writes `grad^2 f(x) v` into `out`. The default is a central finite
    /// difference along the unit direction of `v`, rescaled by `|v|`.
    fn hessian_vector(&self, x: &[f64], v: &[f64], eps: f64, out: &mut [f64]) {
        finite_difference_hvp(self, x, v, eps, out)
    }
}

macro_rules! forward_model {
    ($ty:ty) => {
        impl<M: Model + ?Sized> Model for $ty {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn num_terms(&self) -> usize {
                (**self).num_terms()
            }
            fn prior_potential(&self, x: &[f64]) -> f64 {
                (**self).prior_potential(x)
            }
            fn add_prior_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
                (**self).add_prior_grad(x, scale, out)
            }
            fn term_potential(&self, i: usize, x: &[f64]) -> f64 {
                (**self).term_potential(i, x)
            }
            fn add_term_grads(&self, x: &[f64], indices: &[usize], scale: f64, out: &mut [f64]) {
                (**self).add_term_grads(x, indices, scale, out)
            }
            fn total_potential(&self, x: &[f64]) -> f64 {
                (**self).total_potential(x)
            }
            fn add_full_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
                (**self).add_full_grad(x, scale, out)
            }
            fn hessian_vector(&self, x: &[f64], v: &[f64], eps: f64, out: &mut [f64]) {
                (**self).hessian_vector(x, v, eps, out)
            }
        }
    };
}

forward_model!(&M);
forward_model!(Box<M>);
forward_model!(Arc<M>);

/// Models that map an input row to class probabilities.
pub trait Classifier: Model {
    fn num_classes(&self) -> usize;

    fn num_features(&self) -> usize;

    /// Writes the unnormalised class scores for `input` into `out`.
    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]);
}

impl<C: Classifier + ?Sized> Classifier for Arc<C> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn num_features(&self) -> usize {
        (**self).num_features()
    }
    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]) {
        (**self).logits(x, input, out)
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn num_features(&self) -> usize {
        (**self).num_features()
    }
    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]) {
        (**self).logits(x, input, out)
    }
}

fn check_point<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<()> {
    check_len("parameter vector", x.len(), model.dim())?;
    check_finite("parameter vector", x)
}

/// `f(x) = f0(x) + sum_i f_i(x)`.
pub fn potential<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<f64> {
    check_point(model, x)?;
    Ok(model.total_potential(x))
}

/// `grad f(x) = grad f0(x) + sum_i grad f_i(x)`.
pub fn gradient<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<Vec<f64>> {
    check_point(model, x)?;
    let mut out = vec![0.0; model.dim()];
    model.add_full_grad(x, 1.0, &mut out);
    Ok(out)
}

/// `grad f0(x)` alone.
pub fn prior_gradient<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<Vec<f64>> {
    check_point(model, x)?;
    let mut out = vec![0.0; model.dim()];
    model.add_prior_grad(x, 1.0, &mut out);
    Ok(out)
}

/// `sum_{i in indices} grad f_i(x)`, prior excluded. Indices must be distinct
/// and inside `0..num_terms`.
pub fn term_gradient_sum<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    indices: &[usize],
) -> Result<Vec<f64>> {
    check_point(model, x)?;
    let n = model.num_terms();
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::invalid(format!("term index {i} outside 0..{n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("term index {i} repeated")));
        }
    }
    let mut out = vec![0.0; model.dim()];
    model.add_term_grads(x, indices, 1.0, &mut out);
    Ok(out)
}

/// `grad^2 f(x) v`, analytic where the model provides it.
pub fn hessian_vector_product<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    v: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    check_point(model, x)?;
    check_len("direction", v.len(), model.dim())?;
    check_finite("direction", v)?;
    let mut out = vec![0.0; model.dim()];
    model.hessian_vector(x, v, eps, &mut out);
    Ok(out)
}

/// Class probabilities for each input row (rows of length `num_features`).
pub fn predict_probs<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_point(model, x)?;
    let p = model.num_features();
    let mut rows = Vec::with_capacity(inputs.len());
    for (r, input) in inputs.iter().enumerate() {
        if input.len() != p {
            return Err(Error::invalid(format!(
                "input row {r} has {} features, expected {p}",
                input.len()
            )));
        }
        check_finite("input row", input)?;
        let mut row = vec![0.0; model.num_classes()];
        model.logits(x, input, &mut row);
        softmax_in_place(&mut row);
        rows.push(row);
    }
    Ok(rows)
}

/// Probabilities for the rows of a flat feature buffer, unchecked.
pub(crate) fn predict_flat<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    features: &[f64],
    out: &mut Vec<f64>,
) {
    let p = model.num_features();
    let c = model.num_classes();
    let n = features.len() / p;
    out.resize(n * c, 0.0);
    for r in 0..n {
        let row = &mut out[r * c..(r + 1) * c];
        model.logits(x, &features[r * p..(r + 1) * p], row);
        softmax_in_place(row);
    }
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// `log sum_c exp(s_c)`.
pub(crate) fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub(crate) fn finite_difference_hvp<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    v: &[f64],
    eps: f64,
    out: &mut [f64],
) {
    out.fill(0.0);
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let d = x.len();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for j in 0..d {
        plus[j] = x[j] + eps * v[j] / norm;
        minus[j] = x[j] - eps * v[j] / norm;
    }
    let mut g_plus = vec![0.0; d];
    let mut g_minus = vec![0.0; d];
    model.add_full_grad(&plus, 1.0, &mut g_plus);
    model.add_full_grad(&minus, 1.0, &mut g_minus);
    let k = norm / (2.0 * eps);
    for j in 0..d {
        out[j] = (g_plus[j] - g_minus[j]) * k;
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Central finite-difference gradient of the full potential.
    pub fn fd_gradient<M: Model + ?Sized>(model: &M, x: &[f64], eps: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        (0..x.len())
            .map(|j| {
                y[j] = x[j] + eps;
                let fp = model.total_potential(&y);
                y[j] = x[j] - eps;
                let fm = model.total_potential(&y);
                y[j] = x[j];
                (fp - fm) / (2.0 * eps)
            })
            .collect()
    }

    pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt().max(1e-12);
        num / den
    }
}
