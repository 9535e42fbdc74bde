//! Multilevel bias study on a convex classifier posterior.

use std::sync::Arc;

use rayon::prelude::*;

use crate::couple::{
    fit_level_slope, fit_slope, run_coupled_level, steps_for_epochs, telescope, BiasCurve,
    LevelConfig, LevelEstimate, TestFunctions,
};
use crate::dataset::Dataset;
use crate::diagnose::hessian_norm_power_iteration;
use crate::error::{Error, Result};
use crate::integrate::PhaseState;
use crate::model::{softmax_in_place, Classifier, Model};
use crate::noise::stream_rng;
use crate::sample::{run_chain, SamplerConfig};
use crate::sgrad::{anchor_precompute, Anchor, GradientEstimator};

use super::config::{ExperimentConfig, OptimizerConfig, SamplerKind};
use super::optim::minimize_full;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSettings {
    pub samplers: Vec<SamplerKind>,
    /// `None` searches for the stability edge.
    pub h0: Option<f64>,
    pub gamma: Option<f64>,
    pub levels: usize,
    pub base_epochs: f64,
    pub burn_in_fraction: f64,
    pub chunks: usize,
    pub batch: usize,
    pub test_functions: usize,
    pub variance_reduction: bool,
    pub anchor_tol: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl BiasSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let b = &cfg.bias;
        Self {
            samplers: b.samplers.clone(),
            h0: (!b.search_h0).then_some(b.h0),
            gamma: b.gamma,
            levels: b.levels,
            base_epochs: b.base_epochs * cfg.scale,
            burn_in_fraction: b.burn_in_fraction,
            chunks: b.chunks,
            batch: cfg.data.batch_size,
            test_functions: b.test_functions,
            variance_reduction: b.variance_reduction,
            anchor_tol: b.anchor_tol,
            optimizer: cfg.optimizer.clone(),
            seed: cfg.seed,
        }
    }
}

/// Correct-class probabilities of fixed held-out rows.
pub struct ClassProbabilities<'a, C: ?Sized> {
    model: &'a C,
    rows: Vec<(Vec<f64>, usize)>,
}

impl<'a, C: Classifier + ?Sized> ClassProbabilities<'a, C> {
    pub fn new(model: &'a C, data: &Dataset, n: usize) -> Result<Self> {
        if n == 0 || n > data.len() {
            return Err(Error::invalid(format!(
                "need between 1 and {} test functions, got {n}",
                data.len()
            )));
        }
        Ok(Self {
            model,
            rows: (0..n).map(|i| (data.row(i).to_vec(), data.label(i))).collect(),
        })
    }
}

impl<C: Classifier + ?Sized> TestFunctions for ClassProbabilities<'_, C> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let mut s = vec![0.0; self.model.num_classes()];
        for (o, (row, label)) in out.iter_mut().zip(&self.rows) {
            self.model.logits(x, row, &mut s);
            softmax_in_place(&mut s);
            *o = s[*label];
        }
    }
}

/// Estimator used by a sampler kind in the bias study.
pub fn estimator_for(kind: SamplerKind, batch: usize, anchor: Option<&Arc<Anchor>>) -> Result<GradientEstimator> {
    Ok(match kind {
        SamplerKind::SmsUbu | SamplerKind::SmsBaoab => GradientEstimator::sweep(batch, anchor.cloned()),
        SamplerKind::SgUbu | SamplerKind::SgBaoab | SamplerKind::SgHmc => match anchor {
            Some(a) => GradientEstimator::variance_reduced(batch, a.clone()),
            None => GradientEstimator::iid(batch),
        },
        SamplerKind::SmsGhmc => {
            return Err(Error::invalid("the bias study covers unadjusted samplers only"))
        }
    })
}

/// One probe of the stability search.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityProbe {
    pub h: f64,
    pub sampler: SamplerKind,
    pub stable: bool,
    /// Largest `f(x_k) - f(x*)` seen, infinite on divergence.
    pub max_excess: f64,
}

/// Largest stepsize on the ladder `h_start * 2^(-j/4)` at which every
/// sampler keeps `f(x_k) - f(x*) <= 10 d` over `probe_epochs` epochs.
#[allow(clippy::too_many_arguments)]
pub fn stability_edge<M: Model + ?Sized>(
    model: &M,
    anchor_point: &[f64],
    samplers: &[(SamplerKind, GradientEstimator)],
    gamma: f64,
    h_start: f64,
    probe_epochs: f64,
    seed: u64,
) -> Result<(f64, Vec<StabilityProbe>)> {
    let d = model.dim();
    let f_star = model.total_potential(anchor_point);
    let limit = 10.0 * d as f64;
    let init = PhaseState::at_rest(anchor_point.to_vec());
    let mut probes = Vec::new();
    for j in 0..64 {
        let h = h_start * 2f64.powf(-(j as f64) / 4.0);
        let results: Vec<StabilityProbe> = samplers
            .par_iter()
            .map(|(kind, est)| {
                let steps = steps_for_epochs(probe_epochs, model.num_terms(), est);
                let cfg = SamplerConfig::new(h, gamma, steps, seed).with_burn_in(0.0).with_potential();
                let max_excess = match run_chain(model, kind.scheme().expect("unadjusted"), est, &cfg, &init) {
                    Ok(t) => t
                        .potentials()
                        .unwrap_or(&[])
                        .iter()
                        .map(|f| f - f_star)
                        .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) }),
                    Err(Error::Diverged { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                Ok(StabilityProbe {
                    h,
                    sampler: *kind,
                    stable: max_excess <= limit,
                    max_excess,
                })
            })
            .collect::<Result<_>>()?;
        let all = results.iter().all(|p| p.stable);
        probes.extend(results);
        if all {
            return Ok((h, probes));
        }
    }
    Err(Error::InvalidState("no stable stepsize found on the search ladder".into()))
}

/// Levels, telescoped curve and fitted slopes of one sampler.
#[derive(Debug, Clone)]
pub struct SamplerCurve {
    pub kind: SamplerKind,
    pub levels: Vec<LevelEstimate>,
    pub curve: BiasCurve,
    /// Slope of `|delta_l|` against `h_l`.
    pub level_slope: Result<f64, String>,
    /// Slope of the telescoped bias against `h_l`.
    pub curve_slope: Result<f64, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BiasStudy {
    pub anchor: Vec<f64>,
    pub anchor_grad_norm: f64,
    pub lipschitz: f64,
    pub gamma: f64,
    pub h0: f64,
    pub probes: Vec<StabilityProbe>,
    pub curves: Vec<SamplerCurve>,
}

impl BiasStudy {
    pub fn curve(&self, kind: SamplerKind) -> Option<&SamplerCurve> {
        self.curves.iter().find(|c| c.kind == kind)
    }
}

/// Finds the anchor, sets `gamma` and `h0`, then runs the coupled levels of
/// every sampler and telescopes them.
pub fn run_bias_study<C: Classifier + ?Sized>(model: &C, test: &Dataset, s: &BiasSettings) -> Result<BiasStudy> {
    let d = model.dim();
    let mut rng = stream_rng(s.seed, 9);
    let tol = s.anchor_tol * (d as f64).sqrt();
    let x_star = minimize_full(model, &vec![0.0; d], &s.optimizer, tol, 1_000_000, &mut rng)?;
    let mut g = vec![0.0; d];
    model.add_full_grad(&x_star, 1.0, &mut g);
    let anchor_grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lipschitz = hessian_norm_power_iteration(model, &x_star, 1000, 1e-10, &mut rng)?.value;
    let gamma = s.gamma.unwrap_or((2.0 * lipschitz).sqrt());
    let anchor = Arc::new(anchor_precompute(model, &x_star)?);
    let vr = s.variance_reduction.then_some(&anchor);
    let estimators: Vec<(SamplerKind, GradientEstimator)> = s
        .samplers
        .iter()
        .map(|&k| Ok((k, estimator_for(k, s.batch, vr)?)))
        .collect::<Result<_>>()?;

    let (h0, probes) = match s.h0 {
        Some(h) => (h, Vec::new()),
        None => stability_edge(model, &x_star, &estimators, gamma, 4.0 / lipschitz.sqrt(), 200.0, s.seed)?,
    };
    log::info!("bias study: M = {lipschitz:.6e}, gamma = {gamma:.6e}, h0 = {h0:.6e}");

    let tests = ClassProbabilities::new(model, test, s.test_functions)?;
    let init = PhaseState::at_rest(x_star.clone());
    let n = model.num_terms();
    let mut curves = Vec::new();
    for (si, (kind, est)) in estimators.iter().enumerate() {
        let start = std::time::Instant::now();
        let levels: Vec<LevelEstimate> = (0..s.levels)
            .into_par_iter()
            .map(|l| {
                let scale = 2f64.powi(l as i32);
                let mut cfg = LevelConfig::new(
                    h0 / scale,
                    gamma,
                    steps_for_epochs(s.base_epochs * scale, n, est),
                    s.seed.wrapping_mul(1000).wrapping_add((si * 16 + l) as u64),
                );
                cfg.burn_in_fraction = s.burn_in_fraction;
                cfg.chunks = s.chunks;
                run_coupled_level(model, kind.scheme().expect("unadjusted"), est, &cfg, &init, &tests)
            })
            .collect::<Result<_>>()?;
        let curve = telescope(&levels)?;
        let level_slope = fit_level_slope(&levels).map_err(|e| e.to_string());
        let curve_slope = fit_slope(&curve.stepsizes, &curve.bias).map_err(|e| e.to_string());
        log::info!("{}: level slope {level_slope:?}, curve slope {curve_slope:?}", kind.name());
        curves.push(SamplerCurve {
            kind: *kind,
            levels,
            curve,
            level_slope,
            curve_slope,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(BiasStudy {
        anchor: x_star,
        anchor_grad_norm,
        lipschitz,
        gamma,
        h0,
        probes,
        curves,
    })
}
