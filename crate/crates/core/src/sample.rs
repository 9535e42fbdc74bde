//! Chain drivers: integrator steps wired to gradient estimators.
//!
//! Every driver is a pure function of `(model, config, initial state)`. The
//! seed in the config is split into independent streams for Brownian
//! increments, minibatch selection and Metropolis uniforms.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::integrate::{
    detect_divergence, leapfrog_kick_drift, reflect_hypercube, Baoab, Euler, PhaseState, Scheme, Ubu,
};
use crate::model::Model;
use crate::noise::{stream_rng, ChainRng, GaussianSource, RngNormals};
use crate::sgrad::{sample_iid_minibatch, sample_partition, Anchor, EstimatorKind, GradientEstimator, SweepSchedule};

pub(crate) const NOISE_STREAM: u64 = 0;
pub(crate) const BATCH_STREAM: u64 = 1;
pub(crate) const ACCEPT_STREAM: u64 = 2;

/// Hypercube `|x_j - center_j| <= rho_max` enforced by elastic reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub center: Vec<f64>,
    pub rho_max: f64,
}

impl Reflection {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(a, c)| (a - c).abs() <= self.rho_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub h: f64,
    pub gamma: f64,
    /// Total number of steps `K`.
    pub steps: usize,
    pub burn_in_fraction: f64,
    pub seed: u64,
    /// Record every `thin`-th step.
    pub thin: usize,
    pub reflect: Option<Reflection>,
    /// Store the full potential at every kept sample.
    pub record_potential: bool,
}

impl SamplerConfig {
    pub fn new(h: f64, gamma: f64, steps: usize, seed: u64) -> Self {
        Self {
            h,
            gamma,
            steps,
            burn_in_fraction: 0.2,
            seed,
            thin: 1,
            reflect: None,
            record_potential: false,
        }
    }

    pub fn with_burn_in(mut self, fraction: f64) -> Self {
        self.burn_in_fraction = fraction;
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }

    pub fn with_reflection(mut self, center: Vec<f64>, rho_max: f64) -> Self {
        self.reflect = Some(Reflection { center, rho_max });
        self
    }

    pub fn with_potential(mut self) -> Self {
        self.record_potential = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::invalid(format!("stepsize must be positive, got {}", self.h)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("friction must be positive, got {}", self.gamma)));
        }
        if self.steps < 1 {
            return Err(Error::EmptySamples {
                steps: 0,
                burn_in_fraction: self.burn_in_fraction,
            });
        }
        validate_recording(self.burn_in_fraction, self.thin)?;
        if let Some(r) = &self.reflect {
            if !(r.rho_max > 0.0) {
                return Err(Error::invalid(format!("rho_max must be positive, got {}", r.rho_max)));
            }
        }
        Ok(())
    }

    /// Samples recorded before burn-in is discarded: `ceil(K / thin)`.
    pub fn recorded_count(&self) -> usize {
        self.steps.div_ceil(self.thin)
    }

    pub fn burn_in_count(&self) -> usize {
        (self.burn_in_fraction * self.recorded_count() as f64).floor() as usize
    }
}

fn validate_recording(burn_in_fraction: f64, thin: usize) -> Result<()> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::invalid(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    if thin < 1 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    Ok(())
}

/// Kept samples of one chain plus bookkeeping.
#[derive(Debug, Clone)]
pub struct Trace {
    dim: usize,
    steps: Vec<usize>,
    samples: Vec<f64>,
    potentials: Option<Vec<f64>>,
    pub acceptance_count: Option<usize>,
    pub proposals: usize,
    pub seed: u64,
    /// Minibatch (or full) gradient evaluations, including any initial one.
    pub gradient_evals: usize,
    /// Full potential evaluations made by the driver itself.
    pub potential_evals: usize,
    pub final_state: PhaseState,
}

impl Trace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Global step index (1-based) of each kept sample.
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.samples.chunks_exact(self.dim)
    }

    /// Row-major `len x dim` block of all kept samples.
    pub fn flat(&self) -> &[f64] {
        &self.samples
    }

    pub fn potentials(&self) -> Option<&[f64]> {
        self.potentials.as_deref()
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance_count
            .map(|a| if self.proposals == 0 { 0.0 } else { a as f64 / self.proposals as f64 })
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for s in self.samples() {
            for (mi, si) in m.iter_mut().zip(s) {
                *mi += si;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Sample covariance (divisor `n - 1`), row-major `dim x dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for s in self.samples() {
            for i in 0..d {
                let a = s[i] - m[i];
                for j in 0..d {
                    c[i * d + j] += a * (s[j] - m[j]);
                }
            }
        }
        let n = (self.len().max(2) - 1) as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// One row per kept sample: step, optional potential, coordinates.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        if self.potentials.is_some() {
            header.push("potential".into());
        }
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        wr.write_record(&header).map_err(csv_err)?;
        for (i, s) in self.samples().enumerate() {
            let mut row = vec![self.steps[i].to_string()];
            if let Some(p) = &self.potentials {
                row.push(fmt_f64(p[i]));
            }
            row.extend(s.iter().map(|&v| fmt_f64(v)));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        path: "<csv>".into(),
        detail: e.to_string(),
    }
}

struct Recorder {
    dim: usize,
    thin: usize,
    burn: usize,
    seen: usize,
    record_potential: bool,
    steps: Vec<usize>,
    samples: Vec<f64>,
    potentials: Vec<f64>,
    potential_evals: usize,
}

impl Recorder {
    fn new(dim: usize, total_steps: usize, burn_in_fraction: f64, thin: usize, record_potential: bool) -> Result<Self> {
        let recorded = total_steps.div_ceil(thin);
        let burn = (burn_in_fraction * recorded as f64).floor() as usize;
        if recorded <= burn {
            return Err(Error::EmptySamples {
                steps: total_steps,
                burn_in_fraction,
            });
        }
        let keep = recorded - burn;
        Ok(Self {
            dim,
            thin,
            burn,
            seen: 0,
            record_potential,
            steps: Vec::with_capacity(keep),
            samples: Vec::with_capacity(keep * dim),
            potentials: Vec::new(),
            potential_evals: 0,
        })
    }

    fn offer<M: Model + ?Sized>(&mut self, step: usize, x: &[f64], model: &M) {
        if (step - 1) % self.thin != 0 {
            return;
        }
        self.seen += 1;
        if self.seen <= self.burn {
            return;
        }
        self.steps.push(step);
        self.samples.extend_from_slice(x);
        if self.record_potential {
            self.potentials.push(model.total_potential(x));
            self.potential_evals += 1;
        }
    }

    fn finish(self, seed: u64, gradient_evals: usize, final_state: PhaseState) -> Trace {
        Trace {
            dim: self.dim,
            steps: self.steps,
            samples: self.samples,
            potentials: self.record_potential.then_some(self.potentials),
            acceptance_count: None,
            proposals: 0,
            seed,
            gradient_evals,
            potential_evals: self.potential_evals,
            final_state,
        }
    }
}

/// `(period, block)` used by gradient number `slot` of a sweep chain.
///
/// UBU and Euler evaluate gradient `j` inside step `j` (1-based) and follow
/// the palindrome `0, ..., N_m - 1, N_m - 1, ..., 0`. BAOAB evaluates gradient
/// 0 before the first step with block 0, and gradient `j` at the end of step
/// `j`: forward step `k` closes with block `k mod N_m`, backward step `k`
/// with block `N_m - k`.
pub fn sweep_slot(scheme: Scheme, n_m: usize, slot: usize) -> (usize, usize) {
    let period_len = 2 * n_m;
    if slot == 0 {
        return (0, 0);
    }
    let period = (slot - 1) / period_len;
    let pos = (slot - 1) % period_len;
    let block = match scheme {
        Scheme::Ubu | Scheme::Euler => {
            if pos < n_m {
                pos
            } else {
                period_len - 1 - pos
            }
        }
        Scheme::Baoab => {
            if pos < n_m {
                (pos + 1) % n_m
            } else {
                period_len - 1 - pos
            }
        }
    };
    (period, block)
}

/// Minibatch selection for one chain.
pub(crate) enum Batcher {
    Full(Vec<usize>),
    Iid {
        n: usize,
        batch: usize,
        rng: ChainRng,
        last: Vec<usize>,
    },
    Sweep {
        n: usize,
        batch: usize,
        rng: ChainRng,
        schedule: Option<(usize, SweepSchedule)>,
    },
}

impl Batcher {
    pub(crate) fn new(estimator: &GradientEstimator, n: usize, rng: ChainRng) -> Self {
        match estimator.kind() {
            EstimatorKind::Full => Batcher::Full((0..n).collect()),
            EstimatorKind::Iid { batch } | EstimatorKind::VarianceReduced { batch, .. } => Batcher::Iid {
                n,
                batch: *batch,
                rng,
                last: Vec::new(),
            },
            EstimatorKind::Sweep { batch, .. } => Batcher::Sweep {
                n,
                batch: *batch,
                rng,
                schedule: None,
            },
        }
    }

    /// Index set for gradient number `slot`.
    pub(crate) fn indices(&mut self, scheme: Scheme, slot: usize) -> &[usize] {
        match self {
            Batcher::Full(all) => all,
            Batcher::Iid { n, batch, rng, last } => {
                *last = sample_iid_minibatch(rng, *n, *batch)
                    .expect("batch validated")
                    .indices;
                last
            }
            Batcher::Sweep {
                n,
                batch,
                rng,
                schedule,
            } => {
                let n_m = *n / *batch;
                let (period, block) = sweep_slot(scheme, n_m, slot);
                if schedule.as_ref().map(|s| s.0) != Some(period) {
                    *schedule = Some((period, sample_partition(rng, *n, *batch).expect("batch validated")));
                }
                schedule.as_ref().expect("drawn above").1.block(block)
            }
        }
    }

    /// Current partition of a sweep batcher.
    pub(crate) fn schedule(&self) -> Option<&SweepSchedule> {
        match self {
            Batcher::Sweep { schedule, .. } => schedule.as_ref().map(|s| &s.1),
            _ => None,
        }
    }

    /// Last i.i.d. draw.
    pub(crate) fn last_draw(&self) -> &[usize] {
        match self {
            Batcher::Iid { last, .. } => last,
            Batcher::Full(all) => all,
            Batcher::Sweep { .. } => &[],
        }
    }
}

enum Stepper {
    Ubu(Ubu),
    Baoab { inner: Baoab, cache: Vec<f64>, primed: bool },
    Euler(Euler),
}

/// One chain advanced step by step with externally chosen minibatches.
pub(crate) struct Chain<'m, M: ?Sized> {
    model: &'m M,
    estimator: GradientEstimator,
    stepper: Stepper,
    pub(crate) state: PhaseState,
    pub(crate) step: usize,
    pub(crate) grad_evals: usize,
    reflect: Option<Reflection>,
}

impl<'m, M: Model + ?Sized> Chain<'m, M> {
    pub(crate) fn new(
        model: &'m M,
        estimator: &GradientEstimator,
        scheme: Scheme,
        h: f64,
        gamma: f64,
        init: PhaseState,
        reflect: Option<Reflection>,
    ) -> Result<Self> {
        let d = model.dim();
        check_len("initial position", init.x.len(), d)?;
        check_len("initial velocity", init.v.len(), d)?;
        let stepper = match scheme {
            Scheme::Ubu => Stepper::Ubu(Ubu::new(h, gamma, d)?),
            Scheme::Baoab => Stepper::Baoab {
                inner: Baoab::new(h, gamma, d)?,
                cache: vec![0.0; d],
                primed: false,
            },
            Scheme::Euler => Stepper::Euler(Euler::new(h, gamma, d)?),
        };
        if let Some(r) = &reflect {
            check_len("reflection center", r.center.len(), d)?;
        }
        Ok(Self {
            model,
            estimator: estimator.clone(),
            stepper,
            state: init,
            step: 0,
            grad_evals: 0,
            reflect,
        })
    }

    /// BAOAB only: the gradient at the initial position.
    pub(crate) fn needs_prime(&self) -> bool {
        matches!(self.stepper, Stepper::Baoab { primed: false, .. })
    }

    pub(crate) fn prime(&mut self, indices: &[usize]) {
        if let Stepper::Baoab { cache, primed, .. } = &mut self.stepper {
            self.estimator.eval_indices(self.model, &self.state.x, indices, cache);
            self.grad_evals += 1;
            *primed = true;
        }
    }

    /// One integrator step whose single fresh gradient uses `indices`.
    pub(crate) fn advance<G: GaussianSource + ?Sized>(&mut self, indices: &[usize], noise: &mut G) -> Result<()> {
        let model = self.model;
        let est = &self.estimator;
        let grad_at = |x: &[f64], g: &mut [f64]| {
            est.eval_indices(model, x, indices, g);
            Ok(())
        };
        match &mut self.stepper {
            Stepper::Ubu(s) => s.step(&mut self.state, grad_at, noise)?,
            Stepper::Euler(s) => s.step(&mut self.state, grad_at, noise)?,
            Stepper::Baoab { inner, cache, primed } => {
                if !*primed {
                    return Err(Error::InvalidState("BAOAB chain needs its initial gradient".into()));
                }
                inner.step(&mut self.state, cache, grad_at, noise)?;
            }
        }
        self.grad_evals += 1;
        self.step += 1;
        if detect_divergence(&self.state) {
            return Err(Error::Diverged {
                step: self.step,
                detail: "state is NaN or exceeds 1e100".into(),
            });
        }
        if let Some(r) = &self.reflect {
            if !r.contains(&self.state.x) {
                reflect_hypercube(&mut self.state, &r.center, r.rho_max);
                // the cached BAOAB gradient belongs to the unreflected point
                if let Stepper::Baoab { cache, .. } = &mut self.stepper {
                    self.estimator.eval_indices(self.model, &self.state.x, indices, cache);
                    self.grad_evals += 1;
                }
            }
        }
        Ok(())
    }
}

/// Runs `cfg.steps` steps of `scheme` with minibatches chosen by `estimator`.
pub fn run_chain<M: Model + ?Sized>(
    model: &M,
    scheme: Scheme,
    estimator: &GradientEstimator,
    cfg: &SamplerConfig,
    init: &PhaseState,
) -> Result<Trace> {
    cfg.validate()?;
    estimator.validate(model)?;
    let mut recorder = Recorder::new(model.dim(), cfg.steps, cfg.burn_in_fraction, cfg.thin, cfg.record_potential)?;
    let mut noise = RngNormals::new(stream_rng(cfg.seed, NOISE_STREAM));
    let mut batcher = Batcher::new(estimator, model.num_terms(), stream_rng(cfg.seed, BATCH_STREAM));
    let mut chain = Chain::new(model, estimator, scheme, cfg.h, cfg.gamma, init.clone(), cfg.reflect.clone())?;
    if chain.needs_prime() {
        chain.prime(batcher.indices(scheme, 0));
    }
    for k in 1..=cfg.steps {
        chain.advance(batcher.indices(scheme, k), &mut noise)?;
        recorder.offer(k, &chain.state.x, model);
    }
    Ok(recorder.finish(cfg.seed, chain.grad_evals, chain.state))
}

fn reject_sweep(estimator: &GradientEstimator, driver: &str) -> Result<()> {
    if estimator.is_sweep() {
        return Err(Error::invalid(format!(
            "{driver} takes full, i.i.d. or variance-reduced gradients; use the SMS driver for sweeps"
        )));
    }
    Ok(())
}

fn sweep_estimator<M: Model + ?Sized>(model: &M, n_m: usize, anchor: Option<Arc<Anchor>>) -> Result<GradientEstimator> {
    let n = model.num_terms();
    if n_m < 1 || n % n_m != 0 {
        return Err(Error::invalid(format!(
            "number of minibatches {n_m} must divide the dataset size {n}"
        )));
    }
    Ok(GradientEstimator::sweep(n / n_m, anchor))
}

/// SG-UBU: UBU with a fresh minibatch every step.
pub fn run_sg_ubu<M: Model + ?Sized>(
    model: &M,
    estimator: &GradientEstimator,
    cfg: &SamplerConfig,
    init: &PhaseState,
) -> Result<Trace> {
    reject_sweep(estimator, "SG-UBU")?;
    run_chain(model, Scheme::Ubu, estimator, cfg, init)
}

/// SMS-UBU with `n_m` minibatches, optionally variance-reduced.
pub fn run_sms_ubu<M: Model + ?Sized>(
    model: &M,
    cfg: &SamplerConfig,
    n_m: usize,
    anchor: Option<Arc<Anchor>>,
    init: &PhaseState,
) -> Result<Trace> {
    run_chain(model, Scheme::Ubu, &sweep_estimator(model, n_m, anchor)?, cfg, init)
}

/// SG-BAOAB. `gradient_evals` is `K + 1`: one initial gradient then one per step.
pub fn run_sg_baoab<M: Model + ?Sized>(
    model: &M,
    estimator: &GradientEstimator,
    cfg: &SamplerConfig,
    init: &PhaseState,
) -> Result<Trace> {
    reject_sweep(estimator, "SG-BAOAB")?;
    run_chain(model, Scheme::Baoab, estimator, cfg, init)
}

/// SMS-BAOAB; the last gradient of a period opens the next one.
pub fn run_sms_baoab<M: Model + ?Sized>(
    model: &M,
    cfg: &SamplerConfig,
    n_m: usize,
    anchor: Option<Arc<Anchor>>,
    init: &PhaseState,
) -> Result<Trace> {
    run_chain(model, Scheme::Baoab, &sweep_estimator(model, n_m, anchor)?, cfg, init)
}

/// SG-HMC (Euler-Maruyama).
pub fn run_sg_hmc<M: Model + ?Sized>(
    model: &M,
    estimator: &GradientEstimator,
    cfg: &SamplerConfig,
    init: &PhaseState,
) -> Result<Trace> {
    reject_sweep(estimator, "SG-HMC")?;
    run_chain(model, Scheme::Euler, estimator, cfg, init)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhmcConfig {
    pub h: f64,
    pub n_m: usize,
    /// Forward/backward sweeps per accept/reject step `L`.
    pub sweeps: usize,
    /// Partial velocity refreshment `alpha` in `[0, 1)`.
    pub alpha: f64,
    /// Outer iterations `K`.
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub thin: usize,
}

impl GhmcConfig {
    pub fn new(h: f64, n_m: usize, iterations: usize, seed: u64) -> Self {
        Self {
            h,
            n_m,
            sweeps: 10,
            alpha: 0.7,
            iterations,
            burn_in_fraction: 0.2,
            seed,
            thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::invalid(format!("stepsize must be positive, got {}", self.h)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.sweeps < 1 || self.iterations < 1 || self.n_m < 1 {
            return Err(Error::invalid("sweeps, iterations and n_m must be at least 1"));
        }
        validate_recording(self.burn_in_fraction, self.thin)
    }
}

/// Metropolised SMS generalized HMC.
///
/// Each iteration draws a partition, runs `L` forward/backward leapfrog sweeps,
/// accepts with the exact Hamiltonian `f(x) + |v|^2 / 2`, negates the velocity
/// on rejection and partially refreshes it. Non-finite proposals are rejected.
pub fn run_sms_ghmc<M: Model + ?Sized>(
    model: &M,
    cfg: &GhmcConfig,
    anchor: Option<Arc<Anchor>>,
    init: &PhaseState,
) -> Result<Trace> {
    cfg.validate()?;
    let d = model.dim();
    check_len("initial position", init.x.len(), d)?;
    check_len("initial velocity", init.v.len(), d)?;
    let estimator = sweep_estimator(model, cfg.n_m, anchor)?;
    estimator.validate(model)?;
    let n = model.num_terms();
    let batch = n / cfg.n_m;

    let mut recorder = Recorder::new(d, cfg.iterations, cfg.burn_in_fraction, cfg.thin, false)?;
    let mut noise = RngNormals::new(stream_rng(cfg.seed, NOISE_STREAM));
    let mut batch_rng = stream_rng(cfg.seed, BATCH_STREAM);
    let mut accept_rng = stream_rng(cfg.seed, ACCEPT_STREAM);

    let mut current = init.clone();
    let mut grad = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut accepted = 0;
    let mut grad_evals = 0;
    let mut potential_evals = 0;
    let refresh = (1.0 - cfg.alpha * cfg.alpha).sqrt();

    for k in 1..=cfg.iterations {
        let schedule = sample_partition(&mut batch_rng, n, batch)?;
        let mut prop = current.clone();
        for _ in 0..cfg.sweeps {
            for &b in schedule.visit_order() {
                leapfrog_kick_drift(&mut prop, cfg.h, &mut grad, |x, g| {
                    estimator.eval_indices(model, x, schedule.block(b), g);
                    Ok(())
                })?;
                grad_evals += 1;
            }
        }
        let h0 = model.total_potential(&current.x) + 0.5 * sq_norm(&current.v);
        let h1 = model.total_potential(&prop.x) + 0.5 * sq_norm(&prop.v);
        potential_evals += 2;
        let u: f64 = accept_rng.random();
        if h1.is_finite() && !detect_divergence(&prop) && u.ln() < h0 - h1 {
            current = prop;
            accepted += 1;
        } else {
            current.v.iter_mut().for_each(|v| *v = -*v);
        }
        noise.fill_standard_normal(&mut z);
        for (v, zi) in current.v.iter_mut().zip(&z) {
            *v = cfg.alpha * *v + refresh * zi;
        }
        recorder.offer(k, &current.x, model);
    }
    let mut trace = recorder.finish(cfg.seed, grad_evals, current);
    trace.acceptance_count = Some(accepted);
    trace.proposals = cfg.iterations;
    trace.potential_evals += potential_evals;
    Ok(trace)
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}
