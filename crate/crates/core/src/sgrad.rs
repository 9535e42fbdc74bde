//! Stochastic gradient estimators: full gradient, i.i.d. minibatches with
//! replacement, the anchored variance-reduced estimator, and symmetric sweep
//! kicks driven by a random partition of the data.
//!
//! Every estimator is unbiased for `grad f(x)`. The minibatch forms share one
//! formula: with `w = N_D / |batch|`,
//!
//! ```text
//! G(x) = grad f0(x) + sum_i grad f_i(x_hat) + w * sum_{i in batch} [grad f_i(x) - grad f_i(x_hat)]
//! ```
//!
//! where the anchor terms vanish when no anchor is configured. A sweep kick
//! over block `l` of a partition into `N_m` blocks is this formula with
//! `w = N_m`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_finite, check_len, Error, Result};
use crate::model::Model;

/// Per-datum gradient caches larger than this many floats are not kept;
/// anchor terms are then recomputed on every kick.
const ANCHOR_CACHE_LIMIT: usize = 50_000_000;

/// Indices of the data terms used by one gradient estimate (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MinibatchDraw {
    pub indices: Vec<usize>,
}

impl MinibatchDraw {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `batch` independent uniform indices in `0..n_data`, with replacement.
pub fn sample_iid_minibatch<R: Rng + ?Sized>(
    rng: &mut R,
    n_data: usize,
    batch: usize,
) -> Result<MinibatchDraw> {
    if n_data < 1 || batch < 1 {
        return Err(Error::invalid(format!(
            "need n_data >= 1 and batch >= 1, got n_data = {n_data}, batch = {batch}"
        )));
    }
    Ok(MinibatchDraw {
        indices: (0..batch).map(|_| rng.random_range(0..n_data)).collect(),
    })
}

/// A random partition of the data into equal blocks plus the palindromic
/// order in which one period visits them: `0, 1, ..., N_m - 1, N_m - 1, ..., 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSchedule {
    blocks: Vec<Vec<usize>>,
    visit_order: Vec<usize>,
}

impl SweepSchedule {
    pub fn from_blocks(blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("schedule needs at least one block"));
        }
        let n_m = blocks.len();
        let visit_order = (0..n_m).chain((0..n_m).rev()).collect();
        Ok(Self {
            blocks,
            visit_order,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, l: usize) -> &[usize] {
        &self.blocks[l]
    }

    /// Block visited by each of the `2 N_m` steps of a period.
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }

    /// Steps in one forward + backward period.
    pub fn period(&self) -> usize {
        self.visit_order.len()
    }
}

/// Uniform random partition of `0..n_data` into `n_data / batch` blocks of
/// size `batch`, obtained by shuffling and slicing.
pub fn sample_partition<R: Rng + ?Sized>(
    rng: &mut R,
    n_data: usize,
    batch: usize,
) -> Result<SweepSchedule> {
    if n_data < 1 || batch < 1 {
        return Err(Error::invalid(format!(
            "need n_data >= 1 and batch >= 1, got n_data = {n_data}, batch = {batch}"
        )));
    }
    if n_data % batch != 0 {
        return Err(Error::invalid(format!(
            "batch size {batch} does not divide dataset size {n_data}"
        )));
    }
    let mut perm: Vec<usize> = (0..n_data).collect();
    perm.shuffle(rng);
    SweepSchedule::from_blocks(sorted_blocks(&perm, batch))
}

/// Anchor point `x_hat` of the variance-reduced estimator with its
/// precomputed `sum_i grad f_i(x_hat)`.
#[derive(Debug, Clone)]
pub struct Anchor {
    point: Vec<f64>,
    full_term_grad: Vec<f64>,
    per_term: Option<Vec<f64>>,
}

impl Anchor {
    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// `sum_{i=1}^{N_D} grad f_i(x_hat)` (prior excluded).
    pub fn full_term_grad(&self) -> &[f64] {
        &self.full_term_grad
    }

    /// `out += scale * sum_{i in indices} grad f_i(x_hat)`
    fn add_term_grads<M: Model + ?Sized>(
        &self,
        model: &M,
        indices: &[usize],
        scale: f64,
        out: &mut [f64],
    ) {
        match &self.per_term {
            Some(cache) => {
                let d = self.point.len();
                for &i in indices {
                    for (o, g) in out.iter_mut().zip(&cache[i * d..(i + 1) * d]) {
                        *o += scale * g;
                    }
                }
            }
            None => model.add_term_grads(&self.point, indices, scale, out),
        }
    }
}

/// One full pass over the data at `anchor`, cached for the estimator.
pub fn anchor_precompute<M: Model + ?Sized>(model: &M, anchor: &[f64]) -> Result<Anchor> {
    let d = model.dim();
    check_len("anchor", anchor.len(), d)?;
    check_finite("anchor", anchor)?;
    let n = model.num_terms();
    let mut full = vec![0.0; d];
    let per_term = if n.saturating_mul(d) <= ANCHOR_CACHE_LIMIT {
        let mut cache = vec![0.0; n * d];
        for i in 0..n {
            model.add_term_grads(anchor, &[i], 1.0, &mut cache[i * d..(i + 1) * d]);
        }
        for i in 0..n {
            for (f, g) in full.iter_mut().zip(&cache[i * d..(i + 1) * d]) {
                *f += g;
            }
        }
        Some(cache)
    } else {
        let all: Vec<usize> = (0..n).collect();
        model.add_term_grads(anchor, &all, 1.0, &mut full);
        None
    };
    Ok(Anchor {
        point: anchor.to_vec(),
        full_term_grad: full,
        per_term,
    })
}

/// How the prior gradient enters a minibatch estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// `grad f0(x)` is added in full to every estimate.
    #[default]
    EveryStep,
    /// `f0 / w` is folded into the minibatch sum before the `w` multiplier,
    /// i.e. every batch carries its share of the prior.
    Folded,
}

/// Unchecked minibatch estimate written into `out` (overwritten).
///
/// `scale` is the multiplier `N_D / N_b` (equivalently `N_m` for sweeps).
pub fn eval_minibatch<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    indices: &[usize],
    scale: f64,
    anchor: Option<&Anchor>,
    prior_mode: PriorMode,
    out: &mut [f64],
) {
    out.fill(0.0);
    match prior_mode {
        PriorMode::EveryStep => {
            model.add_term_grads(x, indices, scale, out);
            model.add_prior_grad(x, 1.0, out);
        }
        PriorMode::Folded => {
            model.add_term_grads(x, indices, 1.0, out);
            model.add_prior_grad(x, 1.0 / scale, out);
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
    }
    if let Some(a) = anchor {
        a.add_term_grads(model, indices, -scale, out);
        for (o, g) in out.iter_mut().zip(&a.full_term_grad) {
            *o += g;
        }
    }
}

/// What an estimator draws its minibatches from.
#[derive(Debug, Clone)]
pub enum EstimatorKind {
    Full,
    Iid {
        batch: usize,
    },
    VarianceReduced {
        batch: usize,
        anchor: Option<Arc<Anchor>>,
    },
    /// Symmetric sweep over a partition into blocks of `batch`, optionally
    /// variance-reduced around an anchor.
    Sweep {
        batch: usize,
        anchor: Option<Arc<Anchor>>,
    },
}

/// A stochastic gradient with its own sweep cursor.
///
/// Sweep estimators resample their partition at the start of every period of
/// `2 N_m` steps, so one instance must follow a single chain.
#[derive(Debug, Clone)]
pub struct GradientEstimator {
    kind: EstimatorKind,
    prior_mode: PriorMode,
    schedule: Option<SweepSchedule>,
    schedule_period: Option<usize>,
}

impl GradientEstimator {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            prior_mode: PriorMode::default(),
            schedule: None,
            schedule_period: None,
        }
    }

    pub fn full() -> Self {
        Self::new(EstimatorKind::Full)
    }

    pub fn iid(batch: usize) -> Self {
        Self::new(EstimatorKind::Iid { batch })
    }

    pub fn variance_reduced(batch: usize, anchor: Arc<Anchor>) -> Self {
        Self::new(EstimatorKind::VarianceReduced {
            batch,
            anchor: Some(anchor),
        })
    }

    pub fn sweep(batch: usize, anchor: Option<Arc<Anchor>>) -> Self {
        Self::new(EstimatorKind::Sweep { batch, anchor })
    }

    pub fn with_prior_mode(mut self, prior_mode: PriorMode) -> Self {
        self.prior_mode = prior_mode;
        self
    }

    pub fn kind(&self) -> &EstimatorKind {
        &self.kind
    }

    pub fn prior_mode(&self) -> PriorMode {
        self.prior_mode
    }

    pub fn anchor(&self) -> Option<&Arc<Anchor>> {
        match &self.kind {
            EstimatorKind::VarianceReduced { anchor, .. } | EstimatorKind::Sweep { anchor, .. } => {
                anchor.as_ref()
            }
            _ => None,
        }
    }

    /// Minibatch size; `None` for the full gradient.
    pub fn batch_size(&self) -> Option<usize> {
        match &self.kind {
            EstimatorKind::Full => None,
            EstimatorKind::Iid { batch }
            | EstimatorKind::VarianceReduced { batch, .. }
            | EstimatorKind::Sweep { batch, .. } => Some(*batch),
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self.kind, EstimatorKind::Sweep { .. })
    }

    /// Estimate over an explicit index set with multiplier `N_D / |indices|`.
    pub(crate) fn eval_indices<M: Model + ?Sized>(
        &self,
        model: &M,
        x: &[f64],
        indices: &[usize],
        out: &mut [f64],
    ) {
        let scale = model.num_terms() as f64 / indices.len() as f64;
        eval_minibatch(model, x, indices, scale, self.anchor().map(|a| &**a), self.prior_mode, out);
    }

    /// Schedule of the current sweep period, if one has been drawn.
    pub fn schedule(&self) -> Option<&SweepSchedule> {
        self.schedule.as_ref()
    }

    /// Checks batch sizes against the model before a run.
    pub fn validate<M: Model + ?Sized>(&self, model: &M) -> Result<()> {
        let n = model.num_terms();
        match &self.kind {
            EstimatorKind::Full => Ok(()),
            EstimatorKind::Iid { batch } => check_batch(*batch, n),
            EstimatorKind::VarianceReduced { batch, anchor } => {
                check_batch(*batch, n)?;
                let a = anchor.as_ref().ok_or_else(|| {
                    Error::InvalidState("variance-reduced estimator has no anchor".into())
                })?;
                check_len("anchor", a.point.len(), model.dim())
            }
            EstimatorKind::Sweep { batch, anchor } => {
                check_batch(*batch, n)?;
                if n % batch != 0 {
                    return Err(Error::invalid(format!(
                        "batch size {batch} does not divide dataset size {n}"
                    )));
                }
                if let Some(a) = anchor {
                    check_len("anchor", a.point.len(), model.dim())?;
                }
                Ok(())
            }
        }
    }

    /// Gradient estimate at `x` for the 1-based global `step_index`.
    ///
    /// Sweep estimators use block `visit_order[(step_index - 1) mod 2 N_m]`
    /// and redraw the partition when a new period starts.
    pub fn estimate<M: Model + ?Sized, R: Rng + ?Sized>(
        &mut self,
        model: &M,
        x: &[f64],
        step_index: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, MinibatchDraw)> {
        check_len("parameter vector", x.len(), model.dim())?;
        self.validate(model)?;
        if step_index == 0 {
            return Err(Error::invalid("step_index is 1-based"));
        }
        let mut out = vec![0.0; model.dim()];
        let draw = self.estimate_into(model, x, step_index, rng, &mut out);
        Ok((out, draw))
    }

    /// Unchecked form of [`GradientEstimator::estimate`] writing into `out`.
    pub(crate) fn estimate_into<M: Model + ?Sized, R: Rng + ?Sized>(
        &mut self,
        model: &M,
        x: &[f64],
        step_index: usize,
        rng: &mut R,
        out: &mut [f64],
    ) -> MinibatchDraw {
        let n = model.num_terms();
        match &self.kind {
            EstimatorKind::Full => {
                // same summation order as a single-block sweep
                let indices: Vec<usize> = (0..n).collect();
                eval_minibatch(model, x, &indices, 1.0, None, self.prior_mode, out);
                MinibatchDraw { indices }
            }
            EstimatorKind::Iid { batch } => {
                let draw = draw_iid(rng, n, *batch);
                let scale = n as f64 / *batch as f64;
                eval_minibatch(model, x, &draw.indices, scale, None, self.prior_mode, out);
                draw
            }
            EstimatorKind::VarianceReduced { batch, anchor } => {
                let draw = draw_iid(rng, n, *batch);
                let scale = n as f64 / *batch as f64;
                eval_minibatch(
                    model,
                    x,
                    &draw.indices,
                    scale,
                    anchor.as_deref(),
                    self.prior_mode,
                    out,
                );
                draw
            }
            EstimatorKind::Sweep { batch, anchor } => {
                let batch = *batch;
                let anchor = anchor.clone();
                let n_m = n / batch;
                let period = (step_index - 1) / (2 * n_m);
                if self.schedule_period != Some(period) {
                    // shuffle of 0..n is infallible once validate() passed
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(rng);
                    self.schedule = Some(
                        SweepSchedule::from_blocks(sorted_blocks(&perm, batch))
                            .expect("non-empty partition"),
                    );
                    self.schedule_period = Some(period);
                }
                let schedule = self.schedule.as_ref().expect("schedule drawn above");
                let block = schedule.visit_order[(step_index - 1) % (2 * n_m)];
                let indices = schedule.block(block);
                eval_minibatch(
                    model,
                    x,
                    indices,
                    n_m as f64,
                    anchor.as_deref(),
                    self.prior_mode,
                    out,
                );
                MinibatchDraw {
                    indices: indices.to_vec(),
                }
            }
        }
    }
}

/// Blocks of a shuffled permutation, each sorted so that a single block
/// sums its terms in the same order as the full gradient.
fn sorted_blocks(perm: &[usize], batch: usize) -> Vec<Vec<usize>> {
    perm.chunks(batch)
        .map(|c| {
            let mut b = c.to_vec();
            b.sort_unstable();
            b
        })
        .collect()
}

fn check_batch(batch: usize, n: usize) -> Result<()> {
    if batch < 1 || batch > n {
        return Err(Error::invalid(format!(
            "batch size {batch} outside 1..={n}"
        )));
    }
    Ok(())
}

fn draw_iid<R: Rng + ?Sized>(rng: &mut R, n: usize, batch: usize) -> MinibatchDraw {
    MinibatchDraw {
        indices: (0..batch).map(|_| rng.random_range(0..n)).collect(),
    }
}
