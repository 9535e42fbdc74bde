//! Classification metrics: accuracy, NLL, adaptive calibration error and
//! ranked probability score, plus ensemble averaging of predictive tables.

use std::io::Write;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict_flat, Classifier};
use crate::sample::fmt_f64;

/// Probability floor used by [`nll`].
pub const NLL_FLOOR: f64 = 1e-12;

/// Default number of equal-mass ranges per class for [`ace`].
pub const DEFAULT_ACE_RANGES: usize = 15;

const ROW_SUM_TOL: f64 = 1e-6;

/// Predictive class probabilities (`n x C`, row-major) with 0-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    probs: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl PredictionSet {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let c = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some(i) = rows.iter().position(|r| r.len() != c) {
            return Err(Error::invalid(format!(
                "row {i} has {} classes, expected {c}",
                rows[i].len()
            )));
        }
        Self::from_flat(rows.concat(), labels, c)
    }

    pub fn from_flat(probs: Vec<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("prediction set is empty"));
        }
        if num_classes == 0 || probs.len() != labels.len() * num_classes {
            return Err(Error::invalid(format!(
                "probability table has {} entries for {} rows of {num_classes} classes",
                probs.len(),
                labels.len()
            )));
        }
        for (i, row) in probs.chunks(num_classes).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {s}")));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!("label {l} outside 0..{num_classes}")));
        }
        Ok(Self {
            probs,
            labels,
            num_classes,
        })
    }

    /// Predictions of a classifier at parameters `x` on every row of `data`.
    pub fn predict<C: Classifier + ?Sized>(model: &C, x: &[f64], data: &Dataset) -> Result<Self> {
        crate::error::check_len("parameter vector", x.len(), model.dim())?;
        crate::error::check_finite("parameter vector", x)?;
        if data.num_features() != model.num_features() || data.num_classes() != model.num_classes()
        {
            return Err(Error::invalid("dataset shape does not match the classifier"));
        }
        let mut probs = Vec::new();
        predict_flat(model, x, data.features(), &mut probs);
        Self::from_flat(probs, data.labels().to_vec(), data.num_classes())
    }

    /// Posterior-predictive average over parameter samples.
    pub fn predict_mean<C: Classifier + ?Sized>(
        model: &C,
        samples: &[Vec<f64>],
        data: &Dataset,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no parameter samples"));
        }
        let mut acc = vec![0.0; data.len() * data.num_classes()];
        let mut buf = Vec::new();
        for x in samples {
            crate::error::check_len("parameter vector", x.len(), model.dim())?;
            predict_flat(model, x, data.features(), &mut buf);
            for (a, p) in acc.iter_mut().zip(&buf) {
                *a += p;
            }
        }
        let s = samples.len() as f64;
        acc.iter_mut().for_each(|a| *a /= s);
        Self::from_flat(acc, data.labels().to_vec(), data.num_classes())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.probs.chunks(self.num_classes).zip(self.labels.iter().copied())
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of rows whose argmax is the label. Ties go to the lowest class.
pub fn accuracy(preds: &PredictionSet) -> f64 {
    let hits = preds.rows().filter(|(row, l)| argmax(row) == *l).count();
    hits as f64 / preds.len() as f64
}

/// Mean of `-ln p_true`, with `p_true` floored at [`NLL_FLOOR`].
pub fn nll(preds: &PredictionSet) -> f64 {
    preds
        .rows()
        .map(|(row, l)| -row[l].max(NLL_FLOOR).ln())
        .sum::<f64>()
        / preds.len() as f64
}

/// Adaptive calibration error with `n_ranges` equal-mass bins per class.
pub fn ace(preds: &PredictionSet, n_ranges: usize) -> Result<f64> {
    let n = preds.len();
    if n_ranges == 0 {
        return Err(Error::invalid("n_ranges must be positive"));
    }
    if n < n_ranges {
        return Err(Error::invalid(format!(
            "{n} rows cannot fill {n_ranges} calibration ranges"
        )));
    }
    let c = preds.num_classes();
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for class in 0..c {
        let conf = |i: usize| preds.probs[i * c + class];
        order.sort_by(|&a, &b| conf(a).total_cmp(&conf(b)));
        for r in 0..n_ranges {
            let bin = &order[r * n / n_ranges..(r + 1) * n / n_ranges];
            let m = bin.len() as f64;
            let hit = bin.iter().filter(|&&i| preds.labels[i] == class).count() as f64;
            let mean_conf = bin.iter().map(|&i| conf(i)).sum::<f64>() / m;
            total += (hit / m - mean_conf).abs();
        }
    }
    Ok(total / (c * n_ranges) as f64)
}

/// Ranked probability score, unnormalised: `sum_{k<C} (CumP_k - CumY_k)^2`
/// averaged over rows.
pub fn rps(preds: &PredictionSet) -> f64 {
    let c = preds.num_classes();
    preds
        .rows()
        .map(|(row, l)| {
            let mut cum = 0.0;
            let mut s = 0.0;
            for (k, p) in row[..c - 1].iter().enumerate() {
                cum += p;
                let y = if k >= l { 1.0 } else { 0.0 };
                s += (cum - y).powi(2);
            }
            s
        })
        .sum::<f64>()
        / preds.len() as f64
}

/// [`rps`] divided by `C - 1`.
pub fn rps_normalized(preds: &PredictionSet) -> f64 {
    let c = preds.num_classes();
    if c < 2 {
        return 0.0;
    }
    rps(preds) / (c - 1) as f64
}

/// Arithmetic mean of member tables. All members must share labels and shape.
pub fn ensemble_average(members: &[PredictionSet]) -> Result<PredictionSet> {
    let first = members
        .first()
        .ok_or_else(|| Error::invalid("ensemble has no members"))?;
    for (s, m) in members.iter().enumerate().skip(1) {
        if m.num_classes != first.num_classes || m.labels != first.labels {
            return Err(Error::invalid(format!(
                "member {s} does not match the shape or labels of member 0"
            )));
        }
    }
    let mut probs = vec![0.0; first.probs.len()];
    for m in members {
        for (a, p) in probs.iter_mut().zip(&m.probs) {
            *a += p;
        }
    }
    let k = members.len() as f64;
    probs.iter_mut().for_each(|a| *a /= k);
    PredictionSet::from_flat(probs, first.labels.clone(), first.num_classes)
}

/// The four metrics for one prediction set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub nll: f64,
    pub ace: f64,
    pub rps: f64,
}

impl Metrics {
    pub fn evaluate(preds: &PredictionSet, n_ranges: usize) -> Result<Self> {
        Ok(Self {
            accuracy: accuracy(preds),
            nll: nll(preds),
            ace: ace(preds, n_ranges)?,
            rps: rps(preds),
        })
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("accuracy", self.accuracy),
            ("nll", self.nll),
            ("ace", self.ace),
            ("rps", self.rps),
        ]
    }
}

/// Writes `label,metric,value,std` rows. `std` is empty unless supplied.
pub fn write_metrics_csv(
    path: &Path,
    rows: &[(String, Metrics, Option<Metrics>)],
) -> Result<()> {
    let mut out = String::from("label,metric,value,std\n");
    for (label, m, sd) in rows {
        let sd = sd.map(|s| s.named());
        for (k, (name, v)) in m.named().iter().enumerate() {
            let s = sd.map(|s| fmt_f64(s[k].1)).unwrap_or_default();
            out.push_str(&format!("{label},{name},{},{s}\n", fmt_f64(*v)));
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
