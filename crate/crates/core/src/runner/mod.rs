//! Configuration, data ingestion, the optimisation/SWA/ensemble pipeline and
//! experiment orchestration with CSV outputs.

pub mod bias;
pub mod config;
pub mod data;
pub mod manifest;
pub mod optim;
pub mod pipeline;
pub mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::calibrate::{rps_normalized, write_metrics_csv, Metrics, PredictionSet};
use crate::couple::{write_curve_csv, write_levels_csv};
use crate::diagnose::{contraction_check, hessian_norm_power_iteration};
use crate::error::{Error, Result};
use crate::integrate::PhaseState;
use crate::model::{Classifier, LocalizedModel, LogRegModel, MlpModel, QuadraticModel};
use crate::noise::stream_rng;
use crate::sample::{fmt_f64, run_chain, run_sms_ghmc, GhmcConfig, SamplerConfig, Trace};
use crate::sgrad::{anchor_precompute, GradientEstimator};

pub use bias::{run_bias_study, BiasSettings, BiasStudy};
pub use config::{ExperimentConfig, ExperimentKind, SamplerKind};
pub use data::{load_csv, load_data, load_idx, DataSplit};
pub use manifest::write_manifest;
pub use optim::{adam_optimize, swa};
pub use pipeline::{ensemble_sms_ubu, rhat_around, PipelineSettings};
pub use plot::{emit_plot_data, read_plot_data, PlotSeries};

use config::ModelKind;

/// Files written and one-line results of a run.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub results: Vec<(String, String)>,
}

impl RunReport {
    fn file(&mut self, p: PathBuf) -> PathBuf {
        self.files.push(p.clone());
        p
    }

    fn result(&mut self, key: impl Into<String>, value: impl ToString) {
        self.results.push((key.into(), value.to_string()));
    }
}

/// Classifier of the configured kind on the training data.
pub fn build_model(cfg: &ExperimentConfig, data: &DataSplit) -> Result<Arc<dyn Classifier>> {
    Ok(match cfg.model.kind {
        ModelKind::Logreg => Arc::new(LogRegModel::new(data.train.clone(), cfg.model.prior_variance)?),
        ModelKind::Mlp => Arc::new(MlpModel::new(data.train.clone(), cfg.model.hidden, cfg.model.prior_variance)?),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Runs the experiment named by `cfg.kind` and writes its outputs and the
/// manifest into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, config_file: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut report = match cfg.kind {
        ExperimentKind::BiasStudy => bias_experiment(cfg)?,
        ExperimentKind::Contraction => contraction_experiment(cfg)?,
        ExperimentKind::Sample => sample_experiment(cfg)?,
        ExperimentKind::Ensemble => ensemble_experiment(cfg)?,
        ExperimentKind::Calibrate => calibrate_experiment(cfg)?,
        ExperimentKind::Diagnose => diagnose_experiment(cfg)?,
    };
    write_manifest(cfg, config_file, &report.results)?;
    report.files.push(cfg.out_dir.join("manifest.toml"));
    Ok(report)
}

fn quantiles(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}

fn bias_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = load_data(&cfg.data, cfg.seed)?;
    let model = build_model(cfg, &data)?;
    if cfg.model.kind != ModelKind::Logreg {
        log::warn!("bias study on a non-convex model: the anchor is only a local minimiser");
    }
    let study = run_bias_study(&*model, &data.test, &BiasSettings::from_config(cfg))?;
    let mut report = RunReport::default();
    let out = &cfg.out_dir;

    let mut bias_series = Vec::new();
    let mut level_series = Vec::new();
    let mut summary = String::from("sampler,h0,gamma,lipschitz,level_slope,curve_slope,seconds\n");
    let mut per_fn = String::from("sampler,level,h,function,bias\n");
    let mut per_fn_q = String::from("sampler,h,min,q25,median,q75,max\n");
    let slope = |r: &Result<f64, String>| r.as_ref().map(|v| fmt_f64(*v)).unwrap_or_default();
    for c in &study.curves {
        let name = c.kind.name();
        write_levels_csv(&c.levels, create_file(&report.file(out.join(format!("levels_{name}.csv"))))?)?;
        write_curve_csv(&c.curve, create_file(&report.file(out.join(format!("curve_{name}.csv"))))?)?;
        bias_series.push(PlotSeries::new(name, c.curve.stepsizes.clone(), c.curve.bias.clone(), Some(c.curve.std.clone()))?);
        level_series.push(PlotSeries::new(
            name,
            c.levels.iter().map(|l| l.h_coarse).collect(),
            c.levels.iter().map(|l| l.delta_mean).collect(),
            Some(c.levels.iter().map(|l| l.delta_mean_std).collect()),
        )?);
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{},{:.3}",
            fmt_f64(study.h0),
            fmt_f64(study.gamma),
            fmt_f64(study.lipschitz),
            slope(&c.level_slope),
            slope(&c.curve_slope),
            c.seconds
        );
        for (l, row) in c.curve.per_function.iter().enumerate() {
            let h = c.curve.stepsizes[l];
            for (g, b) in row.iter().enumerate() {
                let _ = writeln!(per_fn, "{name},{l},{},{g},{}", fmt_f64(h), fmt_f64(*b));
            }
            let q = quantiles(row);
            let _ = writeln!(
                per_fn_q,
                "{name},{},{},{},{},{},{}",
                fmt_f64(h),
                fmt_f64(q[0]),
                fmt_f64(q[1]),
                fmt_f64(q[2]),
                fmt_f64(q[3]),
                fmt_f64(q[4])
            );
        }
        report.result(format!("{name}.level_slope"), slope(&c.level_slope));
        report.result(format!("{name}.curve_slope"), slope(&c.curve_slope));
    }
    emit_plot_data(&bias_series, &report.file(out.join("bias_plot.csv")))?;
    emit_plot_data(&level_series, &report.file(out.join("level_plot.csv")))?;
    write_text(&report.file(out.join("summary.csv")), &summary)?;
    write_text(&report.file(out.join("per_function.csv")), &per_fn)?;
    write_text(&report.file(out.join("per_function_quantiles.csv")), &per_fn_q)?;
    let mut probes = String::from("h,sampler,stable,max_excess\n");
    for p in &study.probes {
        let _ = writeln!(probes, "{},{},{},{}", fmt_f64(p.h), p.sampler.name(), p.stable, fmt_f64(p.max_excess));
    }
    write_text(&report.file(out.join("stability.csv")), &probes)?;
    report.result("h0", fmt_f64(study.h0));
    report.result("gamma", fmt_f64(study.gamma));
    report.result("anchor_grad_norm", fmt_f64(study.anchor_grad_norm));
    Ok(report)
}

fn contraction_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let c = &cfg.contraction;
    let mut report = RunReport::default();
    let mut csv = String::from("m,M,gamma,h,bound,measured_rate,within_bound,hypotheses_hold\n");
    let mut worst = f64::NEG_INFINITY;
    for (ci, &[m, big_m]) in c.cases.iter().enumerate() {
        if !(m > 0.0 && big_m >= m) {
            return Err(Error::invalid(format!("contraction case {ci} needs 0 < m <= M")));
        }
        let model = QuadraticModel::diagonal(&[m, big_m], 1)?;
        let gamma = (8.0 * big_m).sqrt();
        let hs = if c.stepsizes.is_empty() { vec![0.01, 0.1 / gamma] } else { c.stepsizes.clone() };
        for (hi, &h) in hs.iter().enumerate() {
            let seed = cfg.seed.wrapping_add((ci * 64 + hi) as u64);
            let r = contraction_check(&model, h, gamma, cfg.scaled(c.steps as f64), c.pairs, seed)?;
            let within = r.measured_rate <= r.bound + 1e-12;
            worst = worst.max(r.measured_rate - r.bound);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{within},{}",
                fmt_f64(m),
                fmt_f64(big_m),
                fmt_f64(gamma),
                fmt_f64(h),
                fmt_f64(r.bound),
                fmt_f64(r.measured_rate),
                r.hypotheses_hold
            );
        }
    }
    write_text(&report.file(cfg.out_dir.join("contraction.csv")), &csv)?;
    report.result("max_rate_minus_bound", fmt_f64(worst));
    Ok(report)
}

fn gaussian_vec(rng: &mut impl rand::Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// ADAM then SWA from a random start: the centre of the sampling experiments.
fn train_center(model: &dyn Classifier, cfg: &ExperimentConfig, s: &PipelineSettings) -> Result<Vec<f64>> {
    let mut rng = stream_rng(cfg.seed, 32);
    let init = gaussian_vec(&mut rng, model.dim(), s.optimizer.init_std);
    let x = adam_optimize(model, &init, s.train_epochs, &s.optimizer, s.batch, &mut rng)?;
    swa(model, &x, s.swa_epochs, s.swa_lr, &s.optimizer, s.batch, &mut rng)
}

fn sample_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = load_data(&cfg.data, cfg.seed)?;
    let model = build_model(cfg, &data)?;
    let s = PipelineSettings::from_config(cfg);
    let center = train_center(&*model, cfg, &s)?;
    let loc = &cfg.localization;
    let target: Box<dyn Classifier> = if loc.enabled {
        Box::new(LocalizedModel::new(model.clone(), center.clone(), loc.rho, loc.rho_max())?)
    } else {
        Box::new(model.clone())
    };
    let n = target.num_terms();
    let batch = cfg.data.batch_size;
    let n_m = n / batch;
    let anchor = if cfg.sampler.variance_reduction {
        Some(Arc::new(anchor_precompute(&*target, &center)?))
    } else {
        None
    };
    let mut rng = stream_rng(cfg.seed, 33);
    let init = PhaseState::new(center.clone(), gaussian_vec(&mut rng, target.dim(), 1.0))?;
    let trace: Trace = match cfg.sampler.kind {
        SamplerKind::SmsGhmc => {
            let g = &cfg.ghmc;
            let mut gc = GhmcConfig::new(g.h, n_m, cfg.scaled(g.iterations as f64), cfg.seed);
            gc.sweeps = g.sweeps;
            gc.alpha = g.alpha;
            gc.thin = cfg.sampler.thin;
            run_sms_ghmc(&*target, &gc, anchor, &init)?
        }
        kind => {
            let est = if kind.is_sweep() {
                GradientEstimator::sweep(batch, anchor)
            } else {
                match anchor {
                    Some(a) => GradientEstimator::variance_reduced(batch, a),
                    None => GradientEstimator::iid(batch),
                }
            };
            let mut sc = SamplerConfig::new(cfg.sampler.h, cfg.gamma(), s.sample_epochs * n_m, cfg.seed)
                .with_burn_in(s.burn_in_epochs as f64 / s.sample_epochs as f64)
                .with_thin(cfg.sampler.thin)
                .with_potential();
            if loc.enabled {
                sc = sc.with_reflection(center.clone(), loc.rho_max());
            }
            run_chain(&*target, kind.scheme().expect("unadjusted"), &est, &sc, &init)?
        }
    };
    let mut report = RunReport::default();
    trace.save_csv(&report.file(cfg.out_dir.join("trace.csv")))?;
    let samples: Vec<Vec<f64>> = trace.samples().map(|x| x.to_vec()).collect();
    let preds = PredictionSet::predict_mean(&*model, &samples, &data.test)?;
    let metrics = Metrics::evaluate(&preds, cfg.calibration.ace_ranges)?;
    write_metrics_csv(&report.file(cfg.out_dir.join("metrics.csv")), &[(cfg.sampler.kind.name().into(), metrics, None)])?;
    report.result("samples", trace.len());
    report.result("gradient_evals", trace.gradient_evals);
    if let Some(a) = trace.acceptance_rate() {
        report.result("acceptance_rate", fmt_f64(a));
    }
    for (k, v) in metrics.named() {
        report.result(k, fmt_f64(v));
    }
    report.result("rps_normalized", fmt_f64(rps_normalized(&preds)));
    Ok(report)
}

fn ensemble_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = load_data(&cfg.data, cfg.seed)?;
    let model = build_model(cfg, &data)?;
    let s = PipelineSettings::from_config(cfg);
    let members = ensemble_sms_ubu(&*model, cfg.ensemble.members, &s, cfg.seed)?;
    let mut report = RunReport::default();
    for m in &members {
        m.trace.save_csv(&report.file(cfg.out_dir.join(format!("member_{}_samples.csv", m.index))))?;
    }
    let (rhat, paths) = rhat_around(&*model, &members[0].x_swa, cfg.ensemble.rhat_chains, &s, cfg.seed)?;
    let series: Vec<PlotSeries> = paths
        .iter()
        .enumerate()
        .map(|(c, p)| PlotSeries::new(format!("chain-{c}"), (0..p.len()).map(|i| i as f64).collect(), p.clone(), None))
        .collect::<Result<_>>()?;
    emit_plot_data(&series, &report.file(cfg.out_dir.join("loss_paths.csv")))?;
    let cmp = pipeline::compare_calibration(&*model, &members, &data.test, cfg.calibration.ace_ranges)?;
    let rows: Vec<_> = cmp.rows().iter().map(|(k, m)| (k.to_string(), *m, None)).collect();
    write_metrics_csv(&report.file(cfg.out_dir.join("metrics.csv")), &rows)?;
    report.result("rhat", fmt_f64(rhat));
    for (k, v) in cmp.bayes_ensemble.named() {
        report.result(format!("bayes.{k}"), fmt_f64(v));
    }
    Ok(report)
}

fn mean_std(xs: &[Metrics]) -> (Metrics, Option<Metrics>) {
    let n = xs.len() as f64;
    let get = |f: fn(&Metrics) -> f64| -> (f64, f64) {
        let m = xs.iter().map(f).sum::<f64>() / n;
        let v = if xs.len() > 1 { xs.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        (m, v.sqrt())
    };
    let (a, sa) = get(|m| m.accuracy);
    let (b, sb) = get(|m| m.nll);
    let (c, sc) = get(|m| m.ace);
    let (d, sd) = get(|m| m.rps);
    let mean = Metrics { accuracy: a, nll: b, ace: c, rps: d };
    let std = (xs.len() > 1).then_some(Metrics { accuracy: sa, nll: sb, ace: sc, rps: sd });
    (mean, std)
}

fn calibrate_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = load_data(&cfg.data, cfg.seed)?;
    let model = build_model(cfg, &data)?;
    let s = PipelineSettings::from_config(cfg);
    let mut per_run = String::from("repeat,label,metric,value\n");
    let mut by_label: Vec<(String, Vec<Metrics>)> = Vec::new();
    for r in 0..cfg.ensemble.repeats.max(1) {
        let seed = cfg.seed.wrapping_add(r as u64 * 7919);
        let members = ensemble_sms_ubu(&*model, cfg.ensemble.members, &s, seed)?;
        let cmp = pipeline::compare_calibration(&*model, &members, &data.test, cfg.calibration.ace_ranges)?;
        for (label, m) in cmp.rows() {
            for (k, v) in m.named() {
                let _ = writeln!(per_run, "{r},{label},{k},{}", fmt_f64(v));
            }
            match by_label.iter_mut().find(|(l, _)| l == label) {
                Some((_, v)) => v.push(m),
                None => by_label.push((label.to_string(), vec![m])),
            }
        }
    }
    let mut report = RunReport::default();
    write_text(&report.file(cfg.out_dir.join("calibration_runs.csv")), &per_run)?;
    let rows: Vec<_> = by_label
        .iter()
        .map(|(l, ms)| {
            let (m, sd) = mean_std(ms);
            (l.clone(), m, sd)
        })
        .collect();
    write_metrics_csv(&report.file(cfg.out_dir.join("metrics.csv")), &rows)?;
    for (l, m, _) in &rows {
        report.result(format!("{l}.nll"), fmt_f64(m.nll));
    }
    Ok(report)
}

fn diagnose_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = load_data(&cfg.data, cfg.seed)?;
    let model = build_model(cfg, &data)?;
    let s = PipelineSettings::from_config(cfg);
    let dc = &cfg.diagnose;
    let mut csv = String::from("run,point,norm,iterations,converged\n");
    for run in 0..dc.runs {
        let mut rng = stream_rng(cfg.seed, 4096 + run as u64);
        let x0 = gaussian_vec(&mut rng, model.dim(), s.optimizer.init_std);
        let x_adam = adam_optimize(&*model, &x0, s.train_epochs, &s.optimizer, s.batch, &mut rng)?;
        let x_swa = swa(&*model, &x_adam, s.swa_epochs, s.swa_lr, &s.optimizer, s.batch, &mut rng)?;
        let x_pert: Vec<f64> = x_swa
            .iter()
            .zip(gaussian_vec(&mut rng, model.dim(), s.rho))
            .map(|(a, z)| a + z)
            .collect();
        for (name, x) in [("init", &x0), ("adam", &x_adam), ("swa", &x_swa), ("swa-perturbed", &x_pert)] {
            let p = hessian_norm_power_iteration(&*model, x, dc.power_iters, dc.power_tol, &mut rng)?;
            let _ = writeln!(csv, "{run},{name},{},{},{}", fmt_f64(p.value), p.iterations, p.converged);
        }
    }
    let mut report = RunReport::default();
    write_text(&report.file(cfg.out_dir.join("hessian_norms.csv")), &csv)?;
    let mut rng = stream_rng(cfg.seed, 8192);
    let x0 = gaussian_vec(&mut rng, model.dim(), s.optimizer.init_std);
    let x = adam_optimize(&*model, &x0, s.train_epochs, &s.optimizer, s.batch, &mut rng)?;
    let center = swa(&*model, &x, s.swa_epochs, s.swa_lr, &s.optimizer, s.batch, &mut rng)?;
    let (rhat, _) = rhat_around(&*model, &center, cfg.ensemble.rhat_chains, &s, cfg.seed)?;
    write_text(&report.file(cfg.out_dir.join("rhat.csv")), &format!("rhat\n{}\n", fmt_f64(rhat)))?;
    report.result("rhat", fmt_f64(rhat));
    Ok(report)
}
