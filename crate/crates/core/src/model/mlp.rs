use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::{log_sum_exp, softmax_in_place, Classifier, Model};

/// One-hidden-layer softplus network `p -> hidden -> C` with a Gaussian
/// prior on the weights (biases unpenalised).
///
/// Parameter layout: `[W1 (hidden x p), b1 (hidden), W2 (C x hidden), b2 (C)]`.
/// Hessian-vector products fall back to central finite differences.
#[derive(Debug, Clone)]
pub struct MlpModel {
    data: Arc<Dataset>,
    hidden: usize,
    prior_variance: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl MlpModel {
    pub fn new(data: Arc<Dataset>, hidden: usize, prior_variance: f64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("hidden layer must have at least one unit"));
        }
        if !(prior_variance > 0.0) || !prior_variance.is_finite() {
            return Err(Error::invalid(format!(
                "prior variance must be positive and finite, got {prior_variance}"
            )));
        }
        Ok(Self {
            data,
            hidden,
            prior_variance,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn offsets(&self) -> Offsets {
        let p = self.data.num_features();
        let h = self.hidden;
        let c = self.data.num_classes();
        let w1 = 0;
        let b1 = w1 + h * p;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            end: b2 + c,
        }
    }

    /// Forward pass; fills pre-activations, activations and logits.
    fn forward(&self, x: &[f64], row: &[f64], pre: &mut [f64], act: &mut [f64], logits: &mut [f64]) {
        let o = self.offsets();
        let p = row.len();
        for j in 0..self.hidden {
            let w = &x[o.w1 + j * p..o.w1 + (j + 1) * p];
            pre[j] = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + x[o.b1 + j];
            act[j] = softplus(pre[j]);
        }
        for (c, l) in logits.iter_mut().enumerate() {
            let w = &x[o.w2 + c * self.hidden..o.w2 + (c + 1) * self.hidden];
            *l = w.iter().zip(act.iter()).map(|(a, b)| a * b).sum::<f64>() + x[o.b2 + c];
        }
    }

    fn is_weight(&self, j: usize) -> bool {
        let o = self.offsets();
        (o.w1..o.b1).contains(&j) || (o.w2..o.b2).contains(&j)
    }
}

impl Model for MlpModel {
    fn dim(&self) -> usize {
        self.offsets().end
    }

    fn num_terms(&self) -> usize {
        self.data.len()
    }

    fn prior_potential(&self, x: &[f64]) -> f64 {
        let o = self.offsets();
        let w1: f64 = x[o.w1..o.b1].iter().map(|v| v * v).sum();
        let w2: f64 = x[o.w2..o.b2].iter().map(|v| v * v).sum();
        (w1 + w2) / (2.0 * self.prior_variance)
    }

    fn add_prior_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let k = scale / self.prior_variance;
        for (j, (o, v)) in out.iter_mut().zip(x).enumerate() {
            if self.is_weight(j) {
                *o += k * v;
            }
        }
    }

    fn term_potential(&self, i: usize, x: &[f64]) -> f64 {
        let mut pre = vec![0.0; self.hidden];
        let mut act = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.data.num_classes()];
        self.forward(x, self.data.row(i), &mut pre, &mut act, &mut logits);
        log_sum_exp(&logits) - logits[self.data.label(i)]
    }

    fn add_term_grads(&self, x: &[f64], indices: &[usize], scale: f64, out: &mut [f64]) {
        let o = self.offsets();
        let p = self.data.num_features();
        let h = self.hidden;
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        let mut delta_out = vec![0.0; self.data.num_classes()];
        let mut delta_hidden = vec![0.0; h];
        for &i in indices {
            let row = self.data.row(i);
            self.forward(x, row, &mut pre, &mut act, &mut delta_out);
            softmax_in_place(&mut delta_out);
            delta_out[self.data.label(i)] -= 1.0;
            delta_hidden.fill(0.0);
            for (c, dc) in delta_out.iter().enumerate() {
                let k = scale * dc;
                let w = &x[o.w2 + c * h..o.w2 + (c + 1) * h];
                for j in 0..h {
                    out[o.w2 + c * h + j] += k * act[j];
                    delta_hidden[j] += dc * w[j];
                }
                out[o.b2 + c] += k;
            }
            for j in 0..h {
                let k = scale * delta_hidden[j] * sigmoid(pre[j]);
                for (q, a) in row.iter().enumerate() {
                    out[o.w1 + j * p + q] += k * a;
                }
                out[o.b1 + j] += k;
            }
        }
    }
}

impl Classifier for MlpModel {
    fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    fn num_features(&self) -> usize {
        self.data.num_features()
    }

    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]) {
        let mut pre = vec![0.0; self.hidden];
        let mut act = vec![0.0; self.hidden];
        self.forward(x, input, &mut pre, &mut act, out);
    }
}
