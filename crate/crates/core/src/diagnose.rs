//! Convergence and geometry diagnostics.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::integrate::{OUCoeffs, PhaseState, Scheme, Ubu};
use crate::linalg::{self, frobenius, mat_mul, spectral_radius, transpose};
use crate::model::{Model, QuadraticModel};
use crate::noise::{stream_rng, RngNormals};

/// Parameters of `|z|_{a,b}^2 = |x|^2 + 2b <x, v> + a |v|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormParams {
    a: f64,
    b: f64,
}

impl WeightedNormParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !(b >= 0.0) {
            return Err(Error::invalid(format!("need a > 0 and b >= 0, got a = {a}, b = {b}")));
        }
        if b * b > a / 4.0 {
            return Err(Error::invalid(format!("b^2 = {} exceeds a/4 = {}", b * b, a / 4.0)));
        }
        Ok(Self { a, b })
    }

    /// `a = 1/M`, `b = 1/gamma`, with `b` clipped to `sqrt(a)/2` when
    /// `gamma < 2 sqrt(M)` leaves the admissible range.
    pub fn for_contraction(lipschitz: f64, gamma: f64) -> Result<Self> {
        let a = 1.0 / lipschitz;
        Self::new(a, (1.0 / gamma).min(0.5 * a.sqrt()))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

pub fn weighted_norm(x: &[f64], v: &[f64], p: &WeightedNormParams) -> Result<f64> {
    check_len("velocity", v.len(), x.len())?;
    let q = linalg::dot(x, x) + 2.0 * p.b * linalg::dot(x, v) + p.a * linalg::dot(v, v);
    Ok(q.max(0.0).sqrt())
}

/// Classic potential scale reduction over equal-length scalar chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::invalid("need at least two chains"));
    }
    let n = chains[0].len();
    if n < 2 {
        return Err(Error::invalid("need at least two samples per chain"));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("chains must have equal length"));
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    if !(w > 0.0) {
        return Err(Error::UndefinedDiagnostic("within-chain variance is zero".into()));
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let var_plus = (n - 1) as f64 / n as f64 * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    /// Dominant `|eigenvalue|`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient after each Hessian-vector product.
    pub history: Vec<f64>,
}

/// Step used for finite-difference Hessian-vector products.
pub const HVP_EPS: f64 = 1e-5;

/// Largest `|eigenvalue|` of the Hessian at `x` by power iteration on
/// Hessian-vector products.
pub fn hessian_norm_power_iteration<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &[f64],
    max_iters: usize,
    tol: f64,
    rng: &mut R,
) -> Result<PowerIteration> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let d = model.dim();
    check_len("position", x.len(), d)?;
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let nv = linalg::norm(&v);
    v.iter_mut().for_each(|a| *a /= nv);
    let mut w = vec![0.0; d];
    let mut history = Vec::new();
    let mut prev = f64::NAN;
    for it in 1..=max_iters {
        model.hessian_vector(x, &v, HVP_EPS, &mut w);
        let lambda = linalg::dot(&v, &w);
        history.push(lambda);
        let nw = linalg::norm(&w);
        if nw == 0.0 {
            return Ok(PowerIteration {
                value: 0.0,
                iterations: it,
                converged: true,
                history,
            });
        }
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        let converged = residual <= tol * lambda.abs() || (lambda - prev).abs() <= tol * lambda.abs();
        if converged {
            return Ok(PowerIteration {
                value: lambda.abs(),
                iterations: it,
                converged: true,
                history,
            });
        }
        prev = lambda;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Ok(PowerIteration {
        value: prev.abs(),
        iterations: max_iters,
        converged: false,
        history,
    })
}

/// Exact affine one-step map `z' = T z + noise` of an integrator on a
/// quadratic target (centred at its mean) and its stationary covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovOracle {
    pub scheme: Scheme,
    pub h: f64,
    pub gamma: f64,
    /// Phase-space dimension `2d`.
    pub n: usize,
    /// Row-major `2d x 2d` one-step matrix on `(x - mu, v)`.
    pub t: Vec<f64>,
    /// One-step noise covariance.
    pub q: Vec<f64>,
    /// Fixed point of `S = T S T^T + Q`.
    pub sigma: Vec<f64>,
    pub spectral_radius: f64,
    /// `|S - T S T^T - Q|_F / |S|_F`.
    pub relative_residual: f64,
}

impl LyapunovOracle {
    /// `Cov(x)` block, `d x d`.
    pub fn position_covariance(&self) -> Vec<f64> {
        self.block(0, 0)
    }

    pub fn velocity_covariance(&self) -> Vec<f64> {
        let d = self.n / 2;
        self.block(d, d)
    }

    fn block(&self, r0: usize, c0: usize) -> Vec<f64> {
        let d = self.n / 2;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.sigma[(r0 + i) * self.n + c0 + j];
            }
        }
        out
    }

    /// `|S - diag(A^{-1}, I)|_F`: distance from the exact invariant law.
    pub fn phase_space_error(&self, target_covariance: &[f64]) -> f64 {
        let d = self.n / 2;
        let mut diff = self.sigma.clone();
        for i in 0..d {
            for j in 0..d {
                diff[i * self.n + j] -= target_covariance[i * d + j];
            }
            diff[(d + i) * self.n + d + i] -= 1.0;
        }
        frobenius(&diff)
    }
}

struct Affine {
    n: usize,
    t: Vec<f64>,
    q: Vec<f64>,
}

impl Affine {
    fn identity(n: usize) -> Self {
        Self {
            n,
            t: linalg::identity(n),
            q: vec![0.0; n * n],
        }
    }

    /// Applies `next` after `self`.
    fn then(self, next: &Affine) -> Affine {
        let n = self.n;
        let t = mat_mul(&next.t, &self.t, n);
        let mut q = congruence(&next.t, &self.q, n);
        for (a, b) in q.iter_mut().zip(&next.q) {
            *a += b;
        }
        Affine { n, t, q }
    }
}

/// `T S T^T`
fn congruence(t: &[f64], s: &[f64], n: usize) -> Vec<f64> {
    mat_mul(&mat_mul(t, s, n), &transpose(t, n), n)
}

fn block_map(d: usize, xx: &dyn Fn(usize, usize) -> f64, xv: f64, vx: &dyn Fn(usize, usize) -> f64, vv: f64) -> Vec<f64> {
    let n = 2 * d;
    let mut t = vec![0.0; n * n];
    for i in 0..d {
        for j in 0..d {
            t[i * n + j] = xx(i, j);
            t[(d + i) * n + j] = vx(i, j);
        }
        t[i * n + d + i] = xv;
        t[(d + i) * n + d + i] = vv;
    }
    t
}

fn diag_noise(d: usize, sxx: f64, sxv: f64, svv: f64) -> Vec<f64> {
    let n = 2 * d;
    let mut q = vec![0.0; n * n];
    for i in 0..d {
        q[i * n + i] = sxx;
        q[i * n + d + i] = sxv;
        q[(d + i) * n + i] = sxv;
        q[(d + i) * n + d + i] = svv;
    }
    q
}

fn eye(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn zero(_: usize, _: usize) -> f64 {
    0.0
}

fn ou_map(d: usize, t: f64, gamma: f64) -> Result<Affine> {
    let c = OUCoeffs::new(t, gamma)?;
    let (sxx, sxv, svv) = c.noise_moments();
    Ok(Affine {
        n: 2 * d,
        t: block_map(d, &eye, c.f, &zero, c.eta),
        q: diag_noise(d, sxx, sxv, svv),
    })
}

fn kick_map(a: &[f64], d: usize, h: f64) -> Affine {
    Affine {
        n: 2 * d,
        t: block_map(d, &eye, 0.0, &|i, j| -h * a[i * d + j], 1.0),
        q: vec![0.0; 4 * d * d],
    }
}

fn drift_map(d: usize, t: f64) -> Affine {
    Affine {
        n: 2 * d,
        t: block_map(d, &eye, t, &zero, 1.0),
        q: vec![0.0; 4 * d * d],
    }
}

fn refresh_map(d: usize, t: f64, gamma: f64) -> Affine {
    let eta = (-gamma * t).exp();
    Affine {
        n: 2 * d,
        t: block_map(d, &eye, 0.0, &zero, eta),
        q: diag_noise(d, 0.0, 0.0, -(-2.0 * gamma * t).exp_m1()),
    }
}

fn one_step_map(a: &[f64], d: usize, scheme: Scheme, h: f64, gamma: f64) -> Result<Affine> {
    let id = Affine::identity(2 * d);
    Ok(match scheme {
        Scheme::Ubu => {
            let u = ou_map(d, 0.5 * h, gamma)?;
            id.then(&u).then(&kick_map(a, d, h)).then(&u)
        }
        Scheme::Baoab => {
            let b = kick_map(a, d, 0.5 * h);
            let dr = drift_map(d, 0.5 * h);
            id.then(&b)
                .then(&dr)
                .then(&refresh_map(d, h, gamma))
                .then(&dr)
                .then(&b)
        }
        Scheme::Euler => Affine {
            n: 2 * d,
            t: block_map(d, &eye, h, &|i, j| -h * a[i * d + j], 1.0 - h * gamma),
            q: diag_noise(d, 0.0, 0.0, 2.0 * gamma * h),
        },
    })
}

/// Stationary covariance of `scheme` on a quadratic target.
///
/// Solved by the doubling form of the fixed-point iteration
/// `S <- T S T^T + Q` (each round squares `T`), then polished with plain
/// iterations until the relative change drops below `1e-14`.
pub fn lyapunov_invariant_covariance(
    model: &QuadraticModel,
    scheme: Scheme,
    h: f64,
    gamma: f64,
) -> Result<LyapunovOracle> {
    if !(h > 0.0) || !(gamma > 0.0) {
        return Err(Error::invalid(format!("need h > 0 and gamma > 0, got h = {h}, gamma = {gamma}")));
    }
    let d = model.dim();
    let a = model.precision();
    let map = one_step_map(a, d, scheme, h, gamma)?;
    let n = map.n;
    let rho = spectral_radius(&map.t, n);
    if !(rho < 1.0) {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let mut sigma = map.q.clone();
    let mut tk = map.t.clone();
    for _ in 0..200 {
        let add = congruence(&tk, &sigma, n);
        let change = frobenius(&add);
        for (s, v) in sigma.iter_mut().zip(&add) {
            *s += v;
        }
        if change <= 1e-17 * frobenius(&sigma) {
            break;
        }
        tk = mat_mul(&tk, &tk, n);
    }
    for _ in 0..1000 {
        let mut next = congruence(&map.t, &sigma, n);
        for (a, b) in next.iter_mut().zip(&map.q) {
            *a += b;
        }
        symmetrize(&mut next, n);
        let diff: Vec<f64> = next.iter().zip(&sigma).map(|(a, b)| a - b).collect();
        let rel = frobenius(&diff) / frobenius(&next);
        sigma = next;
        if rel < 1e-14 {
            break;
        }
    }
    let mut res = congruence(&map.t, &sigma, n);
    for ((r, q), s) in res.iter_mut().zip(&map.q).zip(&sigma) {
        *r = s - *r - q;
    }
    let relative_residual = frobenius(&res) / frobenius(&sigma);
    Ok(LyapunovOracle {
        scheme,
        h,
        gamma,
        n,
        t: map.t,
        q: map.q,
        sigma,
        spectral_radius: rho,
        relative_residual,
    })
}

fn symmetrize(s: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (s[i * n + j] + s[j * n + i]);
            s[i * n + j] = m;
            s[j * n + i] = m;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `1 - m h / (8 gamma)`.
    pub bound: f64,
    /// Maximum over pairs of the per-step geometric-mean ratio.
    pub measured_rate: f64,
    pub pair_rates: Vec<f64>,
    /// Whether `gamma >= sqrt(8 M)` and `h < 1 / (2 gamma)` hold.
    pub hypotheses_hold: bool,
    pub warnings: Vec<String>,
}

/// `1 - m h / (8 gamma)`.
pub fn contraction_bound(m: f64, h: f64, gamma: f64) -> f64 {
    1.0 - m * h / (8.0 * gamma)
}

/// Per-step contraction of two synchronously coupled full-gradient UBU
/// chains from `z1` and `z2`, in the `(1/M, 1/gamma)` norm.
pub fn contraction_rate_for_pair(
    model: &QuadraticModel,
    h: f64,
    gamma: f64,
    z1: &PhaseState,
    z2: &PhaseState,
    n_steps: usize,
    seed: u64,
) -> Result<f64> {
    if n_steps < 1 {
        return Err(Error::invalid("need at least one step"));
    }
    let p = WeightedNormParams::for_contraction(model.lipschitz(), gamma)?;
    let dist = |a: &PhaseState, b: &PhaseState| -> Result<f64> {
        let dx: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect();
        let dv: Vec<f64> = a.v.iter().zip(&b.v).map(|(p, q)| p - q).collect();
        weighted_norm(&dx, &dv, &p)
    };
    let d0 = dist(z1, z2)?;
    if d0 == 0.0 {
        return Err(Error::invalid("coupled pair starts at distance zero"));
    }
    let d = model.dim();
    let mut ubu1 = Ubu::new(h, gamma, d)?;
    let mut ubu2 = Ubu::new(h, gamma, d)?;
    let mut n1 = RngNormals::new(stream_rng(seed, 0));
    let mut n2 = RngNormals::new(stream_rng(seed, 0));
    let (mut a, mut b) = (z1.clone(), z2.clone());
    let grad = |x: &[f64], g: &mut [f64]| {
        g.fill(0.0);
        model.add_full_grad(x, 1.0, g);
        Ok(())
    };
    for _ in 0..n_steps {
        ubu1.step(&mut a, grad, &mut n1)?;
        ubu2.step(&mut b, grad, &mut n2)?;
    }
    let dn = dist(&a, &b)?;
    Ok((dn / d0).powf(1.0 / n_steps as f64))
}

/// Runs `n_pairs` coupled pairs from independent Gaussian starts.
pub fn contraction_check(
    model: &QuadraticModel,
    h: f64,
    gamma: f64,
    n_steps: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if n_pairs < 1 {
        return Err(Error::invalid("need at least one pair"));
    }
    let m = model.strong_convexity();
    let big_m = model.lipschitz();
    let mut warnings = Vec::new();
    if gamma < (8.0 * big_m).sqrt() {
        warnings.push(format!("gamma = {gamma} is below sqrt(8M) = {}", (8.0 * big_m).sqrt()));
    }
    if h >= 1.0 / (2.0 * gamma) {
        warnings.push(format!("h = {h} is not below 1/(2 gamma) = {}", 1.0 / (2.0 * gamma)));
    }
    let d = model.dim();
    let mut start_rng = stream_rng(seed, 1 << 32);
    let mut draw = |scale: f64| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut start_rng);
                scale * z
            })
            .collect()
    };
    let mut pair_rates = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs {
        let z1 = PhaseState::new(draw(2.0), draw(2.0))?;
        let z2 = PhaseState::new(draw(2.0), draw(2.0))?;
        pair_rates.push(contraction_rate_for_pair(model, h, gamma, &z1, &z2, n_steps, seed.wrapping_add(k as u64))?);
    }
    Ok(ContractionReport {
        bound: contraction_bound(m, h, gamma),
        measured_rate: pair_rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        pair_rates,
        hypotheses_hold: warnings.is_empty(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn weighted_norm_examples() {
        let p = WeightedNormParams::new(1.0, 0.0).unwrap();
        let n = weighted_norm(&[3.0, 0.0], &[0.0, 4.0], &p).unwrap();
        assert!((n - 5.0).abs() < 1e-15);
        let p = WeightedNormParams::new(0.5, 0.25).unwrap();
        let n = weighted_norm(&[1.0, 0.0], &[0.0, 1.0], &p).unwrap();
        assert!((n - 1.5f64.sqrt()).abs() < 1e-15);
        assert!(WeightedNormParams::new(1.0, 0.6).is_err());
    }

    #[test]
    fn norm_equivalence_sandwich() {
        let mut rng = stream_rng(3, 0);
        for &(a, b) in &[(1.0, 0.5), (0.25, 0.2), (4.0, 1.0), (2.0, 0.0)] {
            let p = WeightedNormParams::new(a, b).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                let v: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                let z2 = linalg::dot(&x, &x) + linalg::dot(&v, &v);
                let w2 = weighted_norm(&x, &v, &p).unwrap().powi(2);
                assert!(0.5 * a.min(1.0) * z2 <= w2 * (1.0 + 1e-12));
                assert!(w2 <= 1.5 * a.max(1.0) * z2 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn gelman_rubin_examples() {
        let r = gelman_rubin(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!((r - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(gelman_rubin(&[vec![1.0; 4], vec![1.0; 4]]).is_err());
        assert!(gelman_rubin(&[vec![1.0, 2.0]]).is_err());

        let mut rng = stream_rng(5, 0);
        let mut gauss = |mu: f64| -> Vec<f64> {
            (0..10_000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + z
                })
                .collect()
        };
        let same: Vec<Vec<f64>> = (0..4).map(|_| gauss(0.0)).collect();
        let r = gelman_rubin(&same).unwrap();
        assert!((0.99..=1.01).contains(&r), "{r}");
        let apart = vec![gauss(0.0), gauss(10.0)];
        assert!(gelman_rubin(&apart).unwrap() > 3.0);
    }

    #[test]
    fn power_iteration_known_spectra() {
        let mut rng = stream_rng(1, 0);
        let m = QuadraticModel::diagonal(&[1.0, 4.0], 1).unwrap();
        let r = hessian_norm_power_iteration(&m, &[0.0, 0.0], 1000, 1e-12, &mut rng).unwrap();
        assert!(r.converged && (r.value - 4.0).abs() < 1e-6);
        let m = QuadraticModel::diagonal(&[1.0, 1.0, 1.0], 1).unwrap();
        let r = hessian_norm_power_iteration(&m, &[0.0; 3], 1000, 1e-12, &mut rng).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(hessian_norm_power_iteration(&m, &[0.0; 3], 10, 0.0, &mut rng).is_err());
    }

    #[test]
    fn lyapunov_small_step_and_residual() {
        let m = QuadraticModel::diagonal(&[1.0], 1).unwrap();
        let g = 8f64.sqrt();
        for scheme in [Scheme::Ubu, Scheme::Baoab, Scheme::Euler] {
            let o = lyapunov_invariant_covariance(&m, scheme, 1e-4, g).unwrap();
            assert!(o.relative_residual < 1e-12, "{scheme:?} {}", o.relative_residual);
            let tol = if scheme == Scheme::Euler { 1e-3 } else { 1e-5 };
            assert!((o.position_covariance()[0] - 1.0).abs() < tol, "{scheme:?}");
        }
    }

    #[test]
    fn lyapunov_weak_orders() {
        let m = QuadraticModel::diagonal(&[1.0], 1).unwrap();
        let g = 8f64.sqrt();
        let hs = [0.02, 0.01, 0.005];
        let lx: Vec<f64> = hs.iter().map(|h: &f64| h.ln()).collect();
        let bias = |s: Scheme| -> Vec<f64> {
            hs.iter()
                .map(|&h| {
                    let o = lyapunov_invariant_covariance(&m, s, h, g).unwrap();
                    (o.position_covariance()[0] - 1.0).abs().ln()
                })
                .collect()
        };
        let e = fit(&lx, &bias(Scheme::Euler));
        let u = fit(&lx, &bias(Scheme::Ubu));
        assert!((e - 1.0).abs() < 0.1, "euler {e}");
        assert!((u - 2.0).abs() < 0.1, "ubu {u}");
    }

    #[test]
    fn baoab_position_marginal_is_exact_on_gaussians() {
        let m = QuadraticModel::new(vec![2.0, 0.5, 0.5, 1.0], vec![0.0, 0.0], 1).unwrap();
        let o = lyapunov_invariant_covariance(&m, Scheme::Baoab, 0.3, 1.0).unwrap();
        let inv = [1.0 / 1.75, -0.5 / 1.75, -0.5 / 1.75, 2.0 / 1.75];
        for (a, b) in o.position_covariance().iter().zip(inv) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(o.phase_space_error(&inv) > 1e-3);
    }

    #[test]
    fn lyapunov_reports_instability() {
        let m = QuadraticModel::diagonal(&[1.0, 1e4], 1).unwrap();
        match lyapunov_invariant_covariance(&m, Scheme::Euler, 0.1, 1.0) {
            Err(Error::Unstable { spectral_radius }) => assert!(spectral_radius > 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contraction_examples() {
        let m = QuadraticModel::diagonal(&[1.0, 1.0], 1).unwrap();
        let g = 8f64.sqrt();
        let r = contraction_check(&m, 0.1, g, 200, 8, 0).unwrap();
        assert!(r.hypotheses_hold);
        assert!((r.bound - (1.0 - 0.1 / (8.0 * g))).abs() < 1e-15);
        assert!(r.measured_rate <= r.bound + 1e-12, "{} > {}", r.measured_rate, r.bound);

        let z = PhaseState::at_rest(vec![1.0, 1.0]);
        assert!(contraction_rate_for_pair(&m, 0.1, g, &z, &z, 10, 0).is_err());

        let b1 = contraction_bound(1.0, 0.1, g);
        let b2 = contraction_bound(1.0, 0.2, g);
        assert!(((1.0 - b2) - 2.0 * (1.0 - b1)).abs() < 1e-15);

        let r = contraction_check(&m, 0.5, 1.0, 10, 2, 0).unwrap();
        assert!(!r.hypotheses_hold && r.warnings.len() == 2);
    }
}
