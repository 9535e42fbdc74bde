//! In-memory classification datasets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Row-major features with 0-based class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset has no rows"));
        }
        if num_features == 0 {
            return Err(Error::invalid("dataset has no features"));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "classification needs at least 2 classes, got {num_classes}"
            )));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::invalid(format!(
                "feature buffer has {} entries, expected {} rows x {} features",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {l} at row {row} is outside 0..{num_classes}"
            )));
        }
        crate::error::check_finite("features", &features)?;
        Ok(Self {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Keep the first `n` rows.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "cannot truncate {} rows to {n}",
                self.len()
            )));
        }
        Ok(Self {
            features: self.features[..n * self.num_features].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_features: self.num_features,
            num_classes: self.num_classes,
        })
    }

    /// Drop trailing rows so the row count is a multiple of `batch`.
    pub fn truncate_to_multiple(&self, batch: usize) -> Result<Self> {
        if batch == 0 || batch > self.len() {
            return Err(Error::invalid(format!(
                "batch size {batch} incompatible with {} rows",
                self.len()
            )));
        }
        self.truncate(self.len() / batch * batch)
    }

    /// Split into the first `n_first` rows and the remainder.
    pub fn split_at(&self, n_first: usize) -> Result<(Self, Self)> {
        if n_first == 0 || n_first >= self.len() {
            return Err(Error::invalid(format!(
                "split point {n_first} outside 1..{}",
                self.len()
            )));
        }
        let p = self.num_features;
        let a = Self {
            features: self.features[..n_first * p].to_vec(),
            labels: self.labels[..n_first].to_vec(),
            num_features: p,
            num_classes: self.num_classes,
        };
        let b = Self {
            features: self.features[n_first * p..].to_vec(),
            labels: self.labels[n_first..].to_vec(),
            num_features: p,
            num_classes: self.num_classes,
        };
        Ok((a, b))
    }

    /// Synthetic multinomial-logistic data.
    ///
    /// Features are standard normal; labels are drawn from the softmax of a
    /// random linear score with weights of size `signal`. Small `signal` gives
    /// heavily overlapping classes.
    pub fn synthetic_logistic<R: Rng>(
        rng: &mut R,
        n: usize,
        num_features: usize,
        num_classes: usize,
        signal: f64,
    ) -> Result<Self> {
        let truth: Vec<f64> = (0..num_classes * num_features)
            .map(|_| { let z: f64 = StandardNormal.sample(rng); signal * z })
            .collect();
        Self::synthetic_from_weights(rng, n, num_features, num_classes, &truth)
    }

    /// Like [`Dataset::synthetic_logistic`] but with given generating weights
    /// (`num_classes x num_features`, row-major), so train and test sets can
    /// share one ground truth.
    pub fn synthetic_from_weights<R: Rng>(
        rng: &mut R,
        n: usize,
        num_features: usize,
        num_classes: usize,
        truth: &[f64],
    ) -> Result<Self> {
        Self::synthetic_scaled_rows(rng, n, num_features, num_classes, truth, 0.0)
    }

    /// Synthetic data whose rows are multiplied by `exp(row_sigma * z)`,
    /// `z ~ N(0, 1)`, before labels are drawn. Heavy-tailed row norms make
    /// per-datum gradients heterogeneous.
    pub fn synthetic_scaled_rows<R: Rng>(
        rng: &mut R,
        n: usize,
        num_features: usize,
        num_classes: usize,
        truth: &[f64],
        row_sigma: f64,
    ) -> Result<Self> {
        if !row_sigma.is_finite() || row_sigma < 0.0 {
            return Err(Error::invalid(format!("row_sigma must be >= 0, got {row_sigma}")));
        }
        if truth.len() != num_classes * num_features {
            return Err(Error::invalid("generating weights have the wrong shape"));
        }
        let mut features = Vec::with_capacity(n * num_features);
        let mut labels = Vec::with_capacity(n);
        let mut scores = vec![0.0; num_classes];
        for _ in 0..n {
            let start = features.len();
            let scale = if row_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                (row_sigma * z).exp()
            } else {
                1.0
            };
            for _ in 0..num_features {
                let z: f64 = StandardNormal.sample(rng);
                features.push(scale * z);
            }
            let row = &features[start..];
            for (c, s) in scores.iter_mut().enumerate() {
                *s = truth[c * num_features..(c + 1) * num_features]
                    .iter()
                    .zip(row)
                    .map(|(w, a)| w * a)
                    .sum();
            }
            crate::model::softmax_in_place(&mut scores);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut label = num_classes - 1;
            for (c, p) in scores.iter().enumerate() {
                acc += p;
                if u < acc {
                    label = c;
                    break;
                }
            }
            labels.push(label);
        }
        Self::new(features, labels, num_features, num_classes)
    }
}
