//! ADAM on minibatch potentials, stochastic weight averaging, and a
//! full-gradient minimiser for convex anchors.

use rand::Rng;

use crate::diagnose::hessian_norm_power_iteration;
use crate::error::{check_len, Error, Result};
use crate::model::Model;
use crate::sgrad::{eval_minibatch, sample_partition, PriorMode};

use super::config::OptimizerConfig;

/// ADAM moments.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, cfg: &OptimizerConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for j in 0..x.len() {
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * grad[j];
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * grad[j] * grad[j];
            x[j] -= lr * (self.m[j] / c1) / ((self.v[j] / c2).sqrt() + self.eps);
        }
    }
}

/// Running mean of a stream of vectors.
#[derive(Debug, Clone)]
pub struct RunningMean {
    mean: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(x) {
            *m += w * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

fn check_batch<M: Model + ?Sized>(model: &M, batch: usize) -> Result<usize> {
    let n = model.num_terms();
    if batch == 0 || n % batch != 0 {
        return Err(Error::invalid(format!(
            "batch size {batch} must divide the dataset size {n}"
        )));
    }
    Ok(n / batch)
}

/// Runs `epochs` passes of minibatch ADAM; every epoch visits a fresh random
/// partition. `lr` is evaluated at the 0-based global step.
fn adam_epochs<M, R, F>(
    model: &M,
    x: &mut [f64],
    epochs: usize,
    cfg: &OptimizerConfig,
    batch: usize,
    rng: &mut R,
    lr: impl Fn(usize) -> f64,
    mut after_step: F,
) -> Result<()>
where
    M: Model + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&[f64]),
{
    let n_m = check_batch(model, batch)?;
    let mut adam = Adam::new(model.dim(), cfg);
    let mut g = vec![0.0; model.dim()];
    let n = model.num_terms();
    let mut t = 0;
    for _ in 0..epochs {
        let part = sample_partition(rng, n, batch)?;
        for block in part.blocks() {
            eval_minibatch(model, x, block, n_m as f64, None, PriorMode::EveryStep, &mut g);
            adam.step(x, &g, lr(t));
            t += 1;
            if let Some(j) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: t,
                    detail: format!("optimizer produced a non-finite weight at coordinate {j}"),
                });
            }
            after_step(x);
        }
    }
    Ok(())
}

/// Minibatch ADAM with `lr(t) = lr0 / (1 + t / T)`, `T` the total number of
/// steps.
pub fn adam_optimize<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    init: &[f64],
    epochs: usize,
    cfg: &OptimizerConfig,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_len("initial weights", init.len(), model.dim())?;
    let mut x = init.to_vec();
    let total = (epochs * check_batch(model, batch)?).max(1) as f64;
    adam_epochs(model, &mut x, epochs, cfg, batch, rng, |t| cfg.lr / (1.0 + t as f64 / total), |_| {})?;
    Ok(x)
}

/// ADAM at fixed `lr` from `start`, returning the average of the iterates
/// over every step of the `epochs` passes.
pub fn swa<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    start: &[f64],
    epochs: usize,
    lr: f64,
    cfg: &OptimizerConfig,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Err(Error::invalid("SWA needs at least one epoch"));
    }
    check_len("start weights", start.len(), model.dim())?;
    let mut x = start.to_vec();
    let mut avg = RunningMean::new(model.dim());
    adam_epochs(model, &mut x, epochs, cfg, batch, rng, |_| lr, |x| avg.push(x))?;
    Ok(avg.mean().to_vec())
}

/// Full-gradient minimiser for convex potentials: ADAM with the decaying
/// schedule, then gradient descent with step `1 / M` until
/// `|grad f| < tol`.
pub fn minimize_full<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    init: &[f64],
    cfg: &OptimizerConfig,
    tol: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_len("initial weights", init.len(), model.dim())?;
    let d = model.dim();
    let mut x = init.to_vec();
    let mut g = vec![0.0; d];
    let grad = |x: &[f64], g: &mut [f64]| {
        g.fill(0.0);
        model.add_full_grad(x, 1.0, g);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let mut adam = Adam::new(d, cfg);
    let warm = max_iters.min(2000);
    for t in 0..warm {
        if grad(&x, &mut g) < tol {
            return Ok(x);
        }
        adam.step(&mut x, &g, cfg.lr / (1.0 + t as f64 / warm as f64));
    }
    let lip = hessian_norm_power_iteration(model, &x, 500, 1e-8, rng)?.value;
    if !(lip > 0.0) {
        return Err(Error::InvalidState("zero curvature at the optimizer iterate".into()));
    }
    for _ in warm..max_iters {
        let norm = grad(&x, &mut g);
        if !norm.is_finite() {
            return Err(Error::Diverged {
                step: 0,
                detail: "gradient descent produced a non-finite gradient".into(),
            });
        }
        if norm < tol {
            return Ok(x);
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= gi / lip;
        }
    }
    let norm = grad(&x, &mut g);
    if norm < tol {
        Ok(x)
    } else {
        Err(Error::InvalidState(format!(
            "gradient norm {norm:e} still above {tol:e} after {max_iters} iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gradient, QuadraticModel};
    use crate::noise::stream_rng;

    fn quad() -> QuadraticModel {
        QuadraticModel::new(vec![2.0, 0.5, 0.5, 1.0], vec![1.0, -2.0], 20).unwrap()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let m = quad();
        let x0 = vec![5.0, 5.0];
        let cfg = OptimizerConfig { lr: 0.1, ..Default::default() };
        let x = adam_optimize(&m, &x0, 100, &cfg, 5, &mut stream_rng(1, 0)).unwrap();
        assert!(norm(&gradient(&m, &x).unwrap()) < 1e-3 * norm(&gradient(&m, &x0).unwrap()));
    }

    #[test]
    fn zero_epochs_returns_init_and_runs_repeat() {
        let m = quad();
        let cfg = OptimizerConfig::default();
        let x0 = vec![0.3, 0.4];
        assert_eq!(adam_optimize(&m, &x0, 0, &cfg, 5, &mut stream_rng(1, 0)).unwrap(), x0);
        let a = adam_optimize(&m, &x0, 3, &cfg, 5, &mut stream_rng(9, 0)).unwrap();
        let b = adam_optimize(&m, &x0, 3, &cfg, 5, &mut stream_rng(9, 0)).unwrap();
        assert_eq!(a, b);
        assert!(adam_optimize(&m, &x0, 1, &cfg, 3, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn swa_with_zero_lr_is_the_start() {
        let m = quad();
        let x0 = vec![0.3, 0.4];
        let x = swa(&m, &x0, 2, 0.0, &OptimizerConfig::default(), 5, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(x, x0);
        assert!(swa(&m, &x0, 0, 0.1, &OptimizerConfig::default(), 5, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn running_mean_of_two() {
        let mut r = RunningMean::new(2);
        r.push(&[1.0, 4.0]);
        r.push(&[3.0, -2.0]);
        assert_eq!(r.mean(), &[2.0, 1.0]);
        assert_eq!(r.count(), 2);
    }

    #[test]
    fn full_minimiser_hits_tolerance() {
        let m = quad();
        let x = minimize_full(&m, &[4.0, -4.0], &OptimizerConfig::default(), 1e-10, 100_000, &mut stream_rng(2, 0)).unwrap();
        assert!(norm(&gradient(&m, &x).unwrap()) < 1e-10);
    }
}
