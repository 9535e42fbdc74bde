use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::{log_sum_exp, softmax_in_place, Classifier, Model};

/// Bayesian multinomial logistic regression.
///
/// Parameters are laid out class by class: `[w_0 (p), b_0, w_1 (p), b_1, ...]`,
/// so `dim = C (p + 1)`. The prior is isotropic Gaussian on every parameter,
/// `f0(x) = |x|^2 / (2 sigma^2)`, and each data term is the softmax
/// cross-entropy of one row.
#[derive(Debug, Clone)]
pub struct LogRegModel {
    data: Arc<Dataset>,
    prior_variance: f64,
}

impl LogRegModel {
    pub fn new(data: Arc<Dataset>, prior_variance: f64) -> Result<Self> {
        if !(prior_variance > 0.0) || !prior_variance.is_finite() {
            return Err(Error::invalid(format!(
                "prior variance must be positive and finite, got {prior_variance}"
            )));
        }
        Ok(Self {
            data,
            prior_variance,
        })
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    fn stride(&self) -> usize {
        self.data.num_features() + 1
    }

    fn scores(&self, x: &[f64], row: &[f64], out: &mut [f64]) {
        let s = self.stride();
        let p = row.len();
        for (c, o) in out.iter_mut().enumerate() {
            let block = &x[c * s..(c + 1) * s];
            *o = block[..p].iter().zip(row).map(|(w, a)| w * a).sum::<f64>() + block[p];
        }
    }
}

impl Model for LogRegModel {
    fn dim(&self) -> usize {
        self.data.num_classes() * self.stride()
    }

    fn num_terms(&self) -> usize {
        self.data.len()
    }

    fn prior_potential(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.prior_variance)
    }

    fn add_prior_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let k = scale / self.prior_variance;
        for (o, v) in out.iter_mut().zip(x) {
            *o += k * v;
        }
    }

    fn term_potential(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = vec![0.0; self.data.num_classes()];
        self.scores(x, self.data.row(i), &mut s);
        log_sum_exp(&s) - s[self.data.label(i)]
    }

    fn add_term_grads(&self, x: &[f64], indices: &[usize], scale: f64, out: &mut [f64]) {
        let st = self.stride();
        let p = self.data.num_features();
        let mut prob = vec![0.0; self.data.num_classes()];
        for &i in indices {
            let row = self.data.row(i);
            self.scores(x, row, &mut prob);
            softmax_in_place(&mut prob);
            prob[self.data.label(i)] -= 1.0;
            for (c, r) in prob.iter().enumerate() {
                let k = scale * r;
                let block = &mut out[c * st..(c + 1) * st];
                for (o, a) in block[..p].iter_mut().zip(row) {
                    *o += k * a;
                }
                block[p] += k;
            }
        }
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64], _eps: f64, out: &mut [f64]) {
        // sum_i (diag(p) - p p') (x) a a'  +  I / sigma^2, with a = (row, 1)
        let st = self.stride();
        let p = self.data.num_features();
        let c_n = self.data.num_classes();
        let mut prob = vec![0.0; c_n];
        let mut u = vec![0.0; c_n];
        for (o, vi) in out.iter_mut().zip(v) {
            *o = vi / self.prior_variance;
        }
        for i in 0..self.data.len() {
            let row = self.data.row(i);
            self.scores(x, row, &mut prob);
            softmax_in_place(&mut prob);
            for (c, uc) in u.iter_mut().enumerate() {
                let block = &v[c * st..(c + 1) * st];
                *uc = block[..p].iter().zip(row).map(|(w, a)| w * a).sum::<f64>() + block[p];
            }
            let pu: f64 = prob.iter().zip(&u).map(|(a, b)| a * b).sum();
            for c in 0..c_n {
                let r = prob[c] * (u[c] - pu);
                let block = &mut out[c * st..(c + 1) * st];
                for (o, a) in block[..p].iter_mut().zip(row) {
                    *o += r * a;
                }
                block[p] += r;
            }
        }
    }
}

impl Classifier for LogRegModel {
    fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    fn num_features(&self) -> usize {
        self.data.num_features()
    }

    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]) {
        self.scores(x, input, out)
    }
}
