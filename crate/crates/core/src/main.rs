use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sms_langevin::runner::{run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "sms-langevin", version, about = "Kinetic Langevin samplers with symmetric minibatch splitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multilevel coupled bias curves for several samplers.
    BiasStudy(Common),
    /// Measured UBU contraction against the analytic bound on quadratics.
    Contraction(Common),
    /// A single chain of the configured sampler.
    Sample(Common),
    /// Ensemble SMS-UBU around SWA centres, with R-hat and test metrics.
    Ensemble(Common),
    /// Calibration of ADAM, SWA and Bayesian ensembles over repeats.
    Calibrate(Common),
    /// Hessian norms along the training pipeline and an R-hat check.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults are used for anything it leaves out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Multiplies every run length.
    #[arg(long)]
    scale: Option<f64>,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::BiasStudy(c) => (ExperimentKind::BiasStudy, c),
        Command::Contraction(c) => (ExperimentKind::Contraction, c),
        Command::Sample(c) => (ExperimentKind::Sample, c),
        Command::Ensemble(c) => (ExperimentKind::Ensemble, c),
        Command::Calibrate(c) => (ExperimentKind::Calibrate, c),
        Command::Diagnose(c) => (ExperimentKind::Diagnose, c),
    };
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.kind = kind;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = common.out {
        cfg.out_dir = o;
    }
    if let Some(s) = common.scale {
        cfg.scale = s;
    }
    let report = run_experiment(&cfg, common.config.as_deref()).with_context(|| format!("{} failed", kind.name()))?;
    for (k, v) in &report.results {
        println!("{k} = {v}");
    }
    for f in &report.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}
