//! Ensemble SMS-UBU around SWA centres: random init, ADAM, SWA, localize,
//! then SMS-UBU with hypercube bounces.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::calibrate::{ensemble_average, Metrics, PredictionSet};
use crate::dataset::Dataset;
use crate::diagnose::gelman_rubin;
use crate::error::{Error, Result};
use crate::integrate::PhaseState;
use crate::model::{Classifier, LocalizedModel, Model};
use crate::noise::stream_rng;
use crate::sample::{run_sms_ubu, SamplerConfig, Trace};

use super::config::{ExperimentConfig, OptimizerConfig};
use super::optim::{adam_optimize, swa};

/// Resolved settings of the ensemble pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub batch: usize,
    pub optimizer: OptimizerConfig,
    pub train_epochs: usize,
    pub swa_lr: f64,
    pub swa_epochs: usize,
    pub rho: f64,
    pub rho_max: f64,
    pub h: f64,
    pub gamma: f64,
    pub sample_epochs: usize,
    pub burn_in_epochs: usize,
    pub thin: usize,
}

impl PipelineSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let sample_epochs = cfg.scaled(cfg.sampler.epochs);
        let burn_in = (cfg.sampler.burn_in_epochs * cfg.scale).round() as usize;
        Self {
            batch: cfg.data.batch_size,
            optimizer: cfg.optimizer.clone(),
            train_epochs: (cfg.optimizer.epochs as f64 * cfg.scale).round() as usize,
            swa_lr: cfg.swa.lr,
            swa_epochs: cfg.scaled(cfg.swa.epochs as f64),
            rho: cfg.localization.rho,
            rho_max: cfg.localization.rho_max(),
            h: cfg.sampler.h,
            gamma: cfg.gamma(),
            sample_epochs,
            burn_in_epochs: burn_in.min(sample_epochs - 1),
            thin: cfg.sampler.thin,
        }
    }

    fn sampler_config(&self, n_m: usize, center: &[f64], seed: u64) -> SamplerConfig {
        SamplerConfig::new(self.h, self.gamma, self.sample_epochs * n_m, seed)
            .with_burn_in(self.burn_in_epochs as f64 / self.sample_epochs as f64)
            .with_thin(self.thin)
            .with_reflection(center.to_vec(), self.rho_max)
    }
}

/// One ensemble member.
#[derive(Debug, Clone)]
pub struct MemberResult {
    pub index: usize,
    pub x_adam: Vec<f64>,
    pub x_swa: Vec<f64>,
    /// Kept SMS-UBU samples of the localized posterior.
    pub trace: Trace,
}

impl MemberResult {
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.trace.samples().map(|s| s.to_vec()).collect()
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn num_blocks<M: Model + ?Sized>(model: &M, batch: usize) -> Result<usize> {
    let n = model.num_terms();
    if batch == 0 || n % batch != 0 {
        return Err(Error::invalid(format!("batch size {batch} must divide the dataset size {n}")));
    }
    Ok(n / batch)
}

fn check_inside(trace: &Trace, center: &[f64], rho_max: f64) -> Result<()> {
    for (i, s) in trace.samples().enumerate() {
        if let Some(j) = s.iter().zip(center).position(|(a, c)| (a - c).abs() > rho_max) {
            return Err(Error::InvalidState(format!(
                "kept sample {i} left the hypercube in coordinate {j}"
            )));
        }
    }
    Ok(())
}

/// SMS-UBU on the posterior localized at `center`, from `x0` with `v0 ~ N(0, I)`.
pub fn sample_localized<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    center: &[f64],
    x0: &[f64],
    s: &PipelineSettings,
    rng: &mut R,
) -> Result<Trace> {
    let n_m = num_blocks(model, s.batch)?;
    let local = LocalizedModel::new(model, center.to_vec(), s.rho, s.rho_max)?;
    let v0 = gaussian(rng, model.dim(), 1.0);
    let cfg = s.sampler_config(n_m, center, rng.random());
    let trace = run_sms_ubu(&local, &cfg, n_m, None, &PhaseState::new(x0.to_vec(), v0)?)?;
    check_inside(&trace, center, s.rho_max)?;
    Ok(trace)
}

fn run_member<C: Classifier + ?Sized>(
    model: &C,
    index: usize,
    s: &PipelineSettings,
    seed: u64,
) -> Result<MemberResult> {
    let mut rng = stream_rng(seed, 64 + index as u64);
    let init = gaussian(&mut rng, model.dim(), s.optimizer.init_std);
    let x_adam = adam_optimize(model, &init, s.train_epochs, &s.optimizer, s.batch, &mut rng)?;
    let x_swa = swa(model, &x_adam, s.swa_epochs, s.swa_lr, &s.optimizer, s.batch, &mut rng)?;
    let trace = sample_localized(model, &x_swa, &x_swa, s, &mut rng)?;
    Ok(MemberResult {
        index,
        x_adam,
        x_swa,
        trace,
    })
}

/// `n` independent members, each on its own RNG streams.
pub fn ensemble_sms_ubu<C: Classifier + ?Sized>(
    model: &C,
    n: usize,
    s: &PipelineSettings,
    seed: u64,
) -> Result<Vec<MemberResult>> {
    if n == 0 {
        return Err(Error::invalid("ensemble needs at least one member"));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            run_member(model, i, s, seed).map_err(|e| Error::Member {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Mean training potential per datum.
pub fn training_loss<M: Model + ?Sized>(model: &M, x: &[f64]) -> f64 {
    model.total_potential(x) / model.num_terms() as f64
}

/// R-hat of the training loss across `chains` SMS-UBU chains started at
/// `center + rho * N(0, I)`.
pub fn rhat_around<M: Model + ?Sized>(
    model: &M,
    center: &[f64],
    chains: usize,
    s: &PipelineSettings,
    seed: u64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let series: Vec<Vec<f64>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, 512 + c as u64);
            let x0: Vec<f64> = center
                .iter()
                .zip(gaussian(&mut rng, center.len(), s.rho))
                .map(|(a, z)| a + z)
                .collect();
            let trace = sample_localized(model, center, &x0, s, &mut rng)?;
            Ok(trace.samples().map(|x| training_loss(model, x)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((gelman_rubin(&series)?, series))
}

/// Test-set metrics of the ADAM ensemble, the SWA ensemble, a single SWA
/// point (member 0) and the Bayesian ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationComparison {
    pub adam_ensemble: Metrics,
    pub swa_ensemble: Metrics,
    pub swa_point: Metrics,
    pub bayes_ensemble: Metrics,
}

impl CalibrationComparison {
    pub fn rows(&self) -> [(&'static str, Metrics); 4] {
        [
            ("adam-ensemble", self.adam_ensemble),
            ("swa-ensemble", self.swa_ensemble),
            ("swa-point", self.swa_point),
            ("bayes-ensemble", self.bayes_ensemble),
        ]
    }
}

pub fn compare_calibration<C: Classifier + ?Sized>(
    model: &C,
    members: &[MemberResult],
    test: &Dataset,
    ace_ranges: usize,
) -> Result<CalibrationComparison> {
    let first = members
        .first()
        .ok_or_else(|| Error::invalid("no ensemble members"))?;
    let point = |x: &[f64]| PredictionSet::predict(model, x, test);
    let adam: Vec<_> = members.iter().map(|m| point(&m.x_adam)).collect::<Result<_>>()?;
    let swa: Vec<_> = members.iter().map(|m| point(&m.x_swa)).collect::<Result<_>>()?;
    let bayes: Vec<_> = members
        .iter()
        .map(|m| PredictionSet::predict_mean(model, &m.samples(), test))
        .collect::<Result<_>>()?;
    Ok(CalibrationComparison {
        adam_ensemble: Metrics::evaluate(&ensemble_average(&adam)?, ace_ranges)?,
        swa_ensemble: Metrics::evaluate(&ensemble_average(&swa)?, ace_ranges)?,
        swa_point: Metrics::evaluate(&point(&first.x_swa)?, ace_ranges)?,
        bayes_ensemble: Metrics::evaluate(&ensemble_average(&bayes)?, ace_ranges)?,
    })
}
