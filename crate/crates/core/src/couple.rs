//! Synchronously coupled chains at stepsizes `h` and `h/2`, multilevel
//! telescoping of their expectation differences, and chunked errors.
//!
//! Noise coupling is slot by slot: within one coarse step each coarse
//! standard normal is `(a + b) / sqrt(2)` where `a`, `b` are the fine draws in
//! the same slot covering the same stretch of time. For UBU the first coarse
//! half step aggregates the two half steps of fine step `2k - 1` and the
//! second aggregates those of fine step `2k`; for BAOAB and Euler the single
//! slot of fine steps `2k - 1` and `2k` is aggregated.
//!
//! Minibatch coupling: i.i.d. draws are reused at matching times (coarse step
//! `k` takes fine step `2k - 1`'s draw for UBU/Euler, fine step `2k`'s closing
//! draw for BAOAB). Sweep chains take the partition the fine chain drew for
//! the fine period starting at the same time.

use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::integrate::{PhaseState, Scheme};
use crate::model::Model;
use crate::noise::{stream_rng, Recording, Replay, RngNormals};
use crate::sample::{fmt_f64, sweep_slot, Batcher, Chain, BATCH_STREAM, NOISE_STREAM};
use crate::sgrad::{EstimatorKind, GradientEstimator, SweepSchedule};

/// Vector of scalar test functions `g_1, ..., g_n` evaluated together.
pub trait TestFunctions: Sync {
    fn len(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// Test functions from a closure.
pub struct FnTests<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnTests<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> TestFunctions for FnTests<F> {
    fn len(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelConfig {
    /// Coarse stepsize; the fine chain uses `h / fine_steps`.
    pub h: f64,
    pub gamma: f64,
    pub coarse_steps: usize,
    pub burn_in_fraction: f64,
    pub chunks: usize,
    pub seed: u64,
    /// Fine steps per coarse step: 2 for a genuine level, 1 for the
    /// degenerate self-coupling.
    pub fine_steps: usize,
}

impl LevelConfig {
    pub fn new(h: f64, gamma: f64, coarse_steps: usize, seed: u64) -> Self {
        Self {
            h,
            gamma,
            coarse_steps,
            burn_in_fraction: 0.2,
            chunks: 4,
            seed,
            fine_steps: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::invalid("need h > 0 and gamma > 0"));
        }
        if !matches!(self.fine_steps, 1 | 2) {
            return Err(Error::invalid("fine_steps must be 1 or 2"));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::invalid("burn-in fraction must lie in [0, 1)"));
        }
        if self.chunks < 2 {
            return Err(Error::invalid("need at least two chunks"));
        }
        let kept = self.coarse_steps - self.burn_in();
        if kept < self.chunks {
            return Err(Error::invalid(format!(
                "{kept} kept steps cannot fill {} chunks",
                self.chunks
            )));
        }
        Ok(())
    }

    fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.coarse_steps as f64).floor() as usize
    }
}

/// Coarse steps covering `epochs` passes over the data.
pub fn steps_for_epochs(epochs: f64, n_data: usize, estimator: &GradientEstimator) -> usize {
    let per_epoch = match estimator.batch_size() {
        Some(b) => n_data as f64 / b as f64,
        None => 1.0,
    };
    (epochs * per_epoch).round().max(1.0) as usize
}

/// Time-averaged difference `pi_h(g) - pi_{h/2}(g)` along a coupled pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEstimate {
    pub h_coarse: f64,
    /// Per test function.
    pub delta: Vec<f64>,
    /// Standard error of each `delta` from the spread of chunk means.
    pub chunk_std: Vec<f64>,
    /// Average of `delta` over test functions.
    pub delta_mean: f64,
    pub delta_mean_std: f64,
    pub kept_steps: usize,
    pub chunks: usize,
    /// Largest `|x_coarse - x_fine|` seen over the run.
    pub max_separation: f64,
}

/// Runs one coupled level and averages `g(coarse) - g(fine)` over aligned
/// times after burn-in.
pub fn run_coupled_level<M: Model + ?Sized, T: TestFunctions + ?Sized>(
    model: &M,
    scheme: Scheme,
    estimator: &GradientEstimator,
    cfg: &LevelConfig,
    init: &PhaseState,
    tests: &T,
) -> Result<LevelEstimate> {
    cfg.validate()?;
    estimator.validate(model)?;
    let d = model.dim();
    check_len("initial position", init.x.len(), d)?;
    let n = model.num_terms();
    let r = cfg.fine_steps;
    let n_g = tests.len();

    let mut fine = Chain::new(model, estimator, scheme, cfg.h / r as f64, cfg.gamma, init.clone(), None)?;
    let mut coarse = Chain::new(model, estimator, scheme, cfg.h, cfg.gamma, init.clone(), None)?;
    let mut fine_noise = Recording::new(RngNormals::new(stream_rng(cfg.seed, NOISE_STREAM)));
    let mut coarse_noise = Replay::new();
    let mut batcher = Batcher::new(estimator, n, stream_rng(cfg.seed, BATCH_STREAM));
    let mut shadow = Shadow::new(estimator, n);

    if fine.needs_prime() {
        fine.prime(batcher.indices(scheme, 0));
        coarse.prime(shadow.indices(scheme, 0, &batcher, &[]));
    }

    let burn = cfg.burn_in();
    let kept = cfg.coarse_steps - burn;
    let mut chunk_sums = vec![0.0; cfg.chunks * n_g];
    let mut chunk_len = vec![0usize; cfg.chunks];
    let mut gc = vec![0.0; n_g];
    let mut gf = vec![0.0; n_g];
    let mut early_draw: Vec<usize> = Vec::new();
    let mut coarse_buf = Vec::with_capacity(scheme.normals_per_step(d));
    let mut max_sep = 0.0_f64;

    for k in 1..=cfg.coarse_steps {
        fine_noise.clear();
        for sub in 0..r {
            let slot = r * (k - 1) + sub + 1;
            fine.advance(batcher.indices(scheme, slot), &mut fine_noise)?;
            if sub == 0 {
                early_draw.clear();
                early_draw.extend_from_slice(batcher.last_draw());
            }
        }
        coarsen(scheme, d, r, fine_noise.log(), &mut coarse_buf);
        coarse_noise.load(&coarse_buf);
        coarse.advance(shadow.indices(scheme, k, &batcher, &early_draw), &mut coarse_noise)?;

        let sep = coarse
            .state
            .x
            .iter()
            .zip(&fine.state.x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        max_sep = max_sep.max(sep);
        if k > burn {
            let i = k - burn - 1;
            let c = i * cfg.chunks / kept;
            tests.eval(&coarse.state.x, &mut gc);
            tests.eval(&fine.state.x, &mut gf);
            for g in 0..n_g {
                chunk_sums[c * n_g + g] += gc[g] - gf[g];
            }
            chunk_len[c] += 1;
        }
    }

    let mut delta = vec![0.0; n_g];
    let mut chunk_std = vec![0.0; n_g];
    let mut mean_series = vec![0.0; cfg.chunks];
    for g in 0..n_g {
        let means: Vec<f64> = (0..cfg.chunks)
            .map(|c| chunk_sums[c * n_g + g] / chunk_len[c] as f64)
            .collect();
        delta[g] = (0..cfg.chunks).map(|c| chunk_sums[c * n_g + g]).sum::<f64>() / kept as f64;
        chunk_std[g] = std_of_means(&means);
        for (m, v) in mean_series.iter_mut().zip(&means) {
            *m += v / n_g as f64;
        }
    }
    Ok(LevelEstimate {
        h_coarse: cfg.h,
        delta_mean: delta.iter().sum::<f64>() / n_g as f64,
        delta_mean_std: std_of_means(&mean_series),
        delta,
        chunk_std,
        kept_steps: kept,
        chunks: cfg.chunks,
        max_separation: max_sep,
    })
}

/// Aggregates the fine draws of one coarse step into the coarse draws.
fn coarsen(scheme: Scheme, d: usize, r: usize, fine: &[f64], out: &mut Vec<f64>) {
    out.clear();
    if r == 1 {
        out.extend_from_slice(fine);
        return;
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match scheme {
        Scheme::Ubu => {
            // per fine step: [U1.xi1, U1.xi2, U2.xi1, U2.xi2]
            for step in 0..2 {
                let base = step * 4 * d;
                for slot in 0..2 {
                    let a = &fine[base + slot * d..base + (slot + 1) * d];
                    let b = &fine[base + (slot + 2) * d..base + (slot + 3) * d];
                    out.extend(a.iter().zip(b).map(|(p, q)| s * (p + q)));
                }
            }
        }
        Scheme::Baoab | Scheme::Euler => {
            out.extend(fine[..d].iter().zip(&fine[d..2 * d]).map(|(p, q)| s * (p + q)));
        }
    }
}

/// Minibatches of the coarse chain, derived from the fine chain's.
enum Shadow {
    Full(Vec<usize>),
    Iid,
    Sweep {
        n_m: usize,
        current: Option<(usize, SweepSchedule)>,
    },
}

impl Shadow {
    fn new(estimator: &GradientEstimator, n: usize) -> Self {
        match estimator.kind() {
            EstimatorKind::Full => Shadow::Full((0..n).collect()),
            EstimatorKind::Iid { .. } | EstimatorKind::VarianceReduced { .. } => Shadow::Iid,
            EstimatorKind::Sweep { batch, .. } => Shadow::Sweep {
                n_m: n / batch,
                current: None,
            },
        }
    }

    /// Indices for coarse gradient `slot`. `early` is the fine draw of the
    /// first fine step inside the current coarse step.
    fn indices<'a>(&'a mut self, scheme: Scheme, slot: usize, fine: &'a Batcher, early: &'a [usize]) -> &'a [usize] {
        match self {
            Shadow::Full(all) => all,
            Shadow::Iid => match scheme {
                Scheme::Baoab => fine.last_draw(),
                Scheme::Ubu | Scheme::Euler => {
                    if slot == 0 {
                        fine.last_draw()
                    } else {
                        early
                    }
                }
            },
            Shadow::Sweep { n_m, current } => {
                let (period, block) = sweep_slot(scheme, *n_m, slot);
                if current.as_ref().map(|c| c.0) != Some(period) {
                    let sched = fine.schedule().expect("fine chain draws first").clone();
                    *current = Some((period, sched));
                }
                current.as_ref().expect("set above").1.block(block)
            }
        }
    }
}

fn std_of_means(means: &[f64]) -> f64 {
    let k = means.len() as f64;
    let m = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Standard error of the mean of `series` from `n_chunks` contiguous chunks.
pub fn chunked_std(series: &[f64], n_chunks: usize) -> Result<f64> {
    if n_chunks < 2 {
        return Err(Error::invalid("need at least two chunks"));
    }
    if series.len() < n_chunks {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than {n_chunks} chunks",
            series.len()
        )));
    }
    let len = series.len();
    let means: Vec<f64> = (0..n_chunks)
        .map(|c| {
            let chunk = &series[c * len / n_chunks..(c + 1) * len / n_chunks];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    Ok(std_of_means(&means))
}

/// Absolute bias estimates along a halving ladder of stepsizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasCurve {
    pub stepsizes: Vec<f64>,
    /// `bias[l] = sum_{j >= l} delta_mean[j]`
    pub bias: Vec<f64>,
    pub std: Vec<f64>,
    /// `per_function[l][g]`
    pub per_function: Vec<Vec<f64>>,
}

pub fn telescope(levels: &[LevelEstimate]) -> Result<BiasCurve> {
    if levels.is_empty() {
        return Err(Error::invalid("no levels to telescope"));
    }
    for w in levels.windows(2) {
        let ratio = w[0].h_coarse / w[1].h_coarse;
        if (ratio - 2.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "stepsizes {} -> {} do not halve",
                w[0].h_coarse, w[1].h_coarse
            )));
        }
        if w[0].delta.len() != w[1].delta.len() {
            return Err(Error::invalid("levels disagree on the number of test functions"));
        }
    }
    let l = levels.len();
    let n_g = levels[0].delta.len();
    let mut bias = vec![0.0; l];
    let mut var = vec![0.0; l];
    let mut per_function = vec![vec![0.0; n_g]; l];
    let mut acc = 0.0;
    let mut acc_var = 0.0;
    let mut acc_g = vec![0.0; n_g];
    for j in (0..l).rev() {
        acc += levels[j].delta_mean;
        acc_var += levels[j].delta_mean_std.powi(2);
        for (a, d) in acc_g.iter_mut().zip(&levels[j].delta) {
            *a += d;
        }
        bias[j] = acc;
        var[j] = acc_var;
        per_function[j] = acc_g.clone();
    }
    Ok(BiasCurve {
        stepsizes: levels.iter().map(|e| e.h_coarse).collect(),
        bias,
        std: var.iter().map(|v| v.sqrt()).collect(),
        per_function,
    })
}

/// Least-squares slope of `log |bias|` against `log h`.
pub fn fit_slope(stepsizes: &[f64], biases: &[f64]) -> Result<f64> {
    if stepsizes.len() != biases.len() {
        return Err(Error::invalid("stepsizes and biases differ in length"));
    }
    if stepsizes.len() < 3 {
        return Err(Error::invalid("need at least three points"));
    }
    if stepsizes.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("stepsizes must be positive"));
    }
    let zeros: Vec<usize> = (0..biases.len()).filter(|&i| biases[i] == 0.0 || !biases[i].is_finite()).collect();
    if !zeros.is_empty() {
        return Err(Error::UnusableData(format!("zero or non-finite bias at points {zeros:?}")));
    }
    let positive = biases[0] > 0.0;
    let flipped: Vec<usize> = (0..biases.len()).filter(|&i| (biases[i] > 0.0) != positive).collect();
    if !flipped.is_empty() {
        return Err(Error::UnusableData(format!(
            "bias changes sign at points {flipped:?} (values {:?})",
            flipped.iter().map(|&i| biases[i]).collect::<Vec<_>>()
        )));
    }
    let xs: Vec<f64> = stepsizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = biases.iter().map(|b| b.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Slope of the level differences themselves, `|delta_l| ~ h_l^p`.
pub fn fit_level_slope(levels: &[LevelEstimate]) -> Result<f64> {
    let hs: Vec<f64> = levels.iter().map(|l| l.h_coarse).collect();
    let ds: Vec<f64> = levels.iter().map(|l| l.delta_mean).collect();
    fit_slope(&hs, &ds)
}

/// Rows `(h, delta, std)`.
pub fn write_levels_csv<W: Write>(levels: &[LevelEstimate], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["h", "delta", "std"]).map_err(csv_err)?;
    for l in levels {
        wr.write_record([fmt_f64(l.h_coarse), fmt_f64(l.delta_mean), fmt_f64(l.delta_mean_std)])
            .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<levels>", e))
}

/// Rows `(log2_h, h, bias, std)`.
pub fn write_curve_csv<W: Write>(curve: &BiasCurve, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["log2_h", "h", "bias", "std"]).map_err(csv_err)?;
    for i in 0..curve.stepsizes.len() {
        wr.write_record([
            fmt_f64(curve.stepsizes[i].log2()),
            fmt_f64(curve.stepsizes[i]),
            fmt_f64(curve.bias[i]),
            fmt_f64(curve.std[i]),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<curve>", e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        path: "<csv>".into(),
        detail: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnose::lyapunov_invariant_covariance;
    use crate::model::QuadraticModel;
    use crate::noise::GaussianSource;

    fn level(h: f64, d: f64, s: f64) -> LevelEstimate {
        LevelEstimate {
            h_coarse: h,
            delta: vec![d],
            chunk_std: vec![s],
            delta_mean: d,
            delta_mean_std: s,
            kept_steps: 100,
            chunks: 4,
            max_separation: 0.0,
        }
    }

    #[test]
    fn chunked_std_examples() {
        assert_eq!(chunked_std(&[2.0; 8], 4).unwrap(), 0.0);
        assert!((chunked_std(&[1.0, 1.0, 3.0, 3.0], 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(chunked_std(&[1.0, 2.0], 4).is_err());
        let mut src = RngNormals::new(stream_rng(3, 0));
        let mut xs = vec![0.0; 40_000];
        src.fill_standard_normal(&mut xs);
        let s = chunked_std(&xs, 4).unwrap();
        assert!(s > 1.0 / 300.0 && s < 1.5 / 200.0, "{s}");
    }

    #[test]
    fn telescope_examples() {
        let c = telescope(&[level(0.1, 0.3, 0.1)]).unwrap();
        assert_eq!(c.bias, vec![0.3]);
        let e = 1e-3;
        let c = telescope(&[level(0.4, 4.0 * e, 0.0), level(0.2, 2.0 * e, 0.0), level(0.1, e, 0.0)]).unwrap();
        assert!((c.bias[0] - 7.0 * e).abs() < 1e-15);
        assert!((c.bias[1] - c.bias[0] + 4.0 * e).abs() < 1e-15);
        let c = telescope(&[level(0.1, 0.0, 3.0), level(0.05, 0.0, 4.0)]).unwrap();
        assert!((c.std[0] - 5.0).abs() < 1e-12);
        assert!(telescope(&[level(0.1, 0.0, 0.0), level(0.03, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn slope_two_from_geometric_levels() {
        // levels 12e, 3e, 0.75e, ... plus their tail sum
        let e = 1e-4;
        let levels: Vec<LevelEstimate> = (0..6)
            .map(|l| level(0.1 / 2f64.powi(l), 12.0 * e / 4f64.powi(l), 0.0))
            .collect();
        assert!((fit_level_slope(&levels).unwrap() - 2.0).abs() < 1e-9);
        let c = telescope(&levels).unwrap();
        let tail = 12.0 * e / 4f64.powi(6) / (1.0 - 0.25);
        let full: Vec<f64> = c.bias.iter().map(|b| b + tail).collect();
        assert!((fit_slope(&c.stepsizes, &full).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fit_slope_examples() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let sq: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((fit_slope(&hs, &sq).unwrap() - 2.0).abs() < 1e-9);
        let lin: Vec<f64> = hs.iter().map(|h| -0.5 * h).collect();
        assert!((fit_slope(&hs, &lin).unwrap() - 1.0).abs() < 1e-9);
        let mut src = RngNormals::new(stream_rng(8, 0));
        let mut z = [0.0; 4];
        src.fill_standard_normal(&mut z);
        let noisy: Vec<f64> = hs.iter().zip(&z).map(|(h, e)| h.powf(1.5) * (1.0 + 0.01 * e)).collect();
        let s = fit_slope(&hs, &noisy).unwrap();
        assert!((1.4..=1.6).contains(&s));
        assert!(matches!(fit_slope(&hs, &[1.0, -1.0, 1.0, 1.0]), Err(Error::UnusableData(_))));
        assert!(matches!(fit_slope(&hs, &[1.0, 0.0, 1.0, 1.0]), Err(Error::UnusableData(_))));
        assert!(fit_slope(&hs[..2], &sq[..2]).is_err());
    }

    #[test]
    fn coarse_draws_are_standard_normal() {
        let mut src = RngNormals::new(stream_rng(4, 0));
        let n = 100_000;
        let mut fine = vec![0.0; 2 * n];
        src.fill_standard_normal(&mut fine);
        let mut out = Vec::new();
        let mut all = Vec::with_capacity(n);
        for k in 0..n {
            coarsen(Scheme::Euler, 1, 2, &fine[2 * k..2 * k + 2], &mut out);
            all.push(out[0]);
        }
        let mean = all.iter().sum::<f64>() / n as f64;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let nf = n as f64;
        assert!(mean.abs() < 4.0 / nf.sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
    }

    #[test]
    fn ubu_coarsening_layout() {
        // fine draws tagged by (step, slot)
        let d = 1;
        let fine: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let mut out = Vec::new();
        coarsen(Scheme::Ubu, d, 2, &fine, &mut out);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(out, vec![s * 2.0, s * 4.0, s * 10.0, s * 12.0]);
    }

    fn x_squared() -> FnTests<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnTests::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0])
    }

    #[test]
    fn self_coupling_is_exactly_zero() {
        let m = QuadraticModel::diagonal(&[1.0, 2.0], 4).unwrap();
        let init = PhaseState::at_rest(vec![0.5, 0.5]);
        let tests = FnTests::new(2, |x: &[f64], out: &mut [f64]| out.copy_from_slice(x));
        for (scheme, est) in [
            (Scheme::Ubu, GradientEstimator::iid(2)),
            (Scheme::Baoab, GradientEstimator::sweep(1, None)),
            (Scheme::Euler, GradientEstimator::full()),
        ] {
            let cfg = LevelConfig {
                fine_steps: 1,
                ..LevelConfig::new(0.1, 2.0, 400, 7)
            };
            let e = run_coupled_level(&m, scheme, &est, &cfg, &init, &tests).unwrap();
            assert_eq!(e.delta, vec![0.0, 0.0]);
            assert_eq!(e.max_separation, 0.0);
        }
    }

    #[test]
    fn zero_force_gives_statistically_zero_difference() {
        // tiny precision: both chains are essentially exact OU in v
        let m = QuadraticModel::diagonal(&[1e-12], 1).unwrap();
        let init = PhaseState::at_rest(vec![0.0]);
        let tests = FnTests::new(1, |_: &[f64], out: &mut [f64]| out[0] = 0.0);
        let cfg = LevelConfig::new(0.1, 2.0, 2000, 1);
        let e = run_coupled_level(&m, Scheme::Ubu, &GradientEstimator::full(), &cfg, &init, &tests).unwrap();
        assert!(e.delta[0].abs() <= 4.0 * e.chunk_std[0] + 1e-300);
    }

    #[test]
    fn ubu_level_matches_lyapunov_difference() {
        let m = QuadraticModel::diagonal(&[1.0], 1).unwrap();
        let g = 8f64.sqrt();
        let h = 0.4;
        let want = lyapunov_invariant_covariance(&m, Scheme::Ubu, h, g).unwrap().position_covariance()[0]
            - lyapunov_invariant_covariance(&m, Scheme::Ubu, h / 2.0, g).unwrap().position_covariance()[0];
        let init = PhaseState::at_rest(vec![0.0]);
        let cfg = LevelConfig::new(h, g, 400_000, 3);
        let e = run_coupled_level(&m, Scheme::Ubu, &GradientEstimator::full(), &cfg, &init, &x_squared()).unwrap();
        assert!(
            (e.delta[0] - want).abs() < 4.0 * e.chunk_std[0],
            "{} vs {want} (std {})",
            e.delta[0],
            e.chunk_std[0]
        );
    }

    #[test]
    fn coupled_pair_stays_close() {
        let m = QuadraticModel::new(vec![1.0, 0.3, 0.3, 2.0], vec![0.0, 0.0], 1).unwrap();
        let g = 8f64.sqrt();
        let h = 0.01;
        let init = PhaseState::at_rest(vec![1.0, -1.0]);
        let cfg = LevelConfig::new(h, g, 20_000, 5);
        let e = run_coupled_level(&m, Scheme::Ubu, &GradientEstimator::full(), &cfg, &init, &x_squared()).unwrap();
        assert!(e.max_separation < 10.0 * h, "{}", e.max_separation);
    }

    #[test]
    fn csv_outputs() {
        let levels = [level(0.2, 0.1, 0.01), level(0.1, 0.05, 0.01)];
        let mut buf = Vec::new();
        write_levels_csv(&levels, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        let mut buf = Vec::new();
        write_curve_csv(&telescope(&levels).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("log2_h,h,bias,std\n"));
    }
}
