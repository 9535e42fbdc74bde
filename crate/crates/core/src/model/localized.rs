use crate::error::{check_finite, check_len, Error, Result};

use super::{Classifier, Model};

/// Localized posterior around a center `x*`:
/// `f*(x) = f(x) + |x - x*|^2 / (2 rho^2)`, restricted to the hypercube
/// `|x - x*|_inf < rho_max`.
///
/// The localizing quadratic is reported as part of the prior term, so the
/// per-datum terms are exactly those of the inner model.
#[derive(Debug, Clone)]
pub struct LocalizedModel<M> {
    inner: M,
    center: Vec<f64>,
    rho: f64,
    rho_max: f64,
}

impl<M: Model> LocalizedModel<M> {
    pub fn new(inner: M, center: Vec<f64>, rho: f64, rho_max: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        if !(rho_max > 0.0) {
            return Err(Error::invalid(format!("rho_max must be positive, got {rho_max}")));
        }
        check_len("center", center.len(), inner.dim())?;
        check_finite("center", &center)?;
        Ok(Self {
            inner,
            center,
            rho,
            rho_max,
        })
    }

    /// Uses the default box half-width `rho_max = 6 rho`.
    pub fn with_default_box(inner: M, center: Vec<f64>, rho: f64) -> Result<Self> {
        Self::new(inner, center, rho, 6.0 * rho)
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// Whether `x` lies in the open box `|x - x*|_inf < rho_max`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(a, c)| (a - c).abs() < self.rho_max)
    }
}

/// Wrap `inner` into its localized version.
pub fn localize<M: Model>(
    inner: M,
    center: Vec<f64>,
    rho: f64,
    rho_max: f64,
) -> Result<LocalizedModel<M>> {
    LocalizedModel::new(inner, center, rho, rho_max)
}

impl<M: Model> Model for LocalizedModel<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_terms(&self) -> usize {
        self.inner.num_terms()
    }

    fn prior_potential(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum();
        self.inner.prior_potential(x) + sq / (2.0 * self.rho * self.rho)
    }

    fn add_prior_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.add_prior_grad(x, scale, out);
        let k = scale / (self.rho * self.rho);
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o += k * (a - c);
        }
    }

    fn term_potential(&self, i: usize, x: &[f64]) -> f64 {
        self.inner.term_potential(i, x)
    }

    fn add_term_grads(&self, x: &[f64], indices: &[usize], scale: f64, out: &mut [f64]) {
        self.inner.add_term_grads(x, indices, scale, out)
    }

    fn total_potential(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum();
        self.inner.total_potential(x) + sq / (2.0 * self.rho * self.rho)
    }

    fn add_full_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.add_full_grad(x, scale, out);
        let k = scale / (self.rho * self.rho);
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o += k * (a - c);
        }
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64], eps: f64, out: &mut [f64]) {
        self.inner.hessian_vector(x, v, eps, out);
        let k = 1.0 / (self.rho * self.rho);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += k * vi;
        }
    }
}

impl<M: Classifier> Classifier for LocalizedModel<M> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]) {
        self.inner.logits(x, input, out)
    }
}
