//! One-step splitting maps for kinetic Langevin dynamics
//! `dX = V dt, dV = -grad f(X) dt - gamma V dt + sqrt(2 gamma) dW`.
//!
//! Every map is parameterised by its duration `t` with velocity decay
//! `exp(-gamma t)`: a UBU half step is an OU step with `t = h/2`, the BAOAB
//! refresh is an O step with `t = h`.
//!
//! Noise layout, which the coupling code relies on: an OU step consumes `d`
//! draws for `xi1` followed by `d` draws for `xi2`; an O refresh and an Euler
//! step consume `d` draws each.

use crate::error::{check_finite, check_len, Error, Result};
use crate::noise::GaussianSource;

/// Position/velocity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_len("velocity", v.len(), x.len())?;
        check_finite("position", &x)?;
        check_finite("velocity", &v)?;
        Ok(Self { x, v })
    }

    pub fn at_rest(x: Vec<f64>) -> Self {
        let d = x.len();
        Self { x, v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// True iff any coordinate of `x` or `v` is NaN or exceeds `1e100` in
/// magnitude.
pub fn detect_divergence(state: &PhaseState) -> bool {
    state
        .x
        .iter()
        .chain(&state.v)
        .any(|a| a.is_nan() || a.abs() > DIVERGENCE_THRESHOLD)
}

pub const DIVERGENCE_THRESHOLD: f64 = 1e100;

/// Below this `gamma t` the mixing coefficient uses its Taylor series.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Coefficients of the exact OU flow over duration `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUCoeffs {
    pub t: f64,
    pub gamma: f64,
    /// `exp(-gamma t)`
    pub eta: f64,
    /// `(1 - exp(-gamma t)) / gamma`
    pub f: f64,
    /// correlation of `xi1` inside the second noise integral
    pub mix: f64,
    /// `sqrt(1 - mix^2)`, computed without cancellation
    pub mix_complement: f64,
    /// `sqrt((1 - eta^2) / (2 gamma))`
    pub z2_scale: f64,
    sqrt_t: f64,
    x_noise: f64,
    v_noise: f64,
}

impl OUCoeffs {
    pub fn new(t: f64, gamma: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("duration must be positive, got {t}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("friction must be positive, got {gamma}")));
        }
        let a = gamma * t;
        let eta = (-a).exp();
        let one_minus_eta = -(-a).exp_m1();
        let f = one_minus_eta / gamma;
        let one_minus_eta_sq = -(-2.0 * a).exp_m1();
        // mix^2 = (1 - eta)/(1 + eta) * 2/(gamma t) = tanh(y)/y with y = gamma t / 2
        let y = 0.5 * a;
        let mix_sq = if a < SERIES_THRESHOLD {
            1.0 - y * y / 3.0 + 2.0 * y.powi(4) / 15.0
        } else {
            y.tanh() / y
        };
        // 1 - tanh(y)/y
        let comp_sq = if y < 0.05 {
            let y2 = y * y;
            y2 * (1.0 / 3.0 - y2 * (2.0 / 15.0 - y2 * (17.0 / 315.0 - y2 * 62.0 / 2835.0)))
        } else {
            1.0 - y.tanh() / y
        };
        Ok(Self {
            t,
            gamma,
            eta,
            f,
            mix: mix_sq.sqrt(),
            mix_complement: comp_sq.max(0.0).sqrt(),
            z2_scale: (one_minus_eta_sq / (2.0 * gamma)).sqrt(),
            sqrt_t: t.sqrt(),
            x_noise: (2.0 / gamma).sqrt(),
            v_noise: (2.0 * gamma).sqrt(),
        })
    }

    /// Position/velocity noise for one coordinate from two standard normals.
    #[inline]
    pub fn noise_pair(&self, xi1: f64, xi2: f64) -> (f64, f64) {
        let z1 = self.sqrt_t * xi1;
        let z2 = self.z2_scale * (self.mix * xi1 + self.mix_complement * xi2);
        (self.x_noise * (z1 - z2), self.v_noise * z2)
    }

    /// Analytic per-coordinate `(Var Zx, Cov(Zx, Zv), Var Zv)`.
    pub fn noise_moments(&self) -> (f64, f64, f64) {
        let g = self.gamma;
        let one_minus_eta = 1.0 - self.eta;
        let one_minus_eta_sq = 1.0 - self.eta * self.eta;
        let var_x = (2.0 / g) * (self.t - 2.0 * self.f + one_minus_eta_sq / (2.0 * g));
        let cov = one_minus_eta * one_minus_eta / g;
        (var_x, cov, one_minus_eta_sq)
    }

    /// Applies the OU flow in place, drawing `2d` normals into `scratch`.
    pub(crate) fn apply<G: GaussianSource + ?Sized>(
        &self,
        x: &mut [f64],
        v: &mut [f64],
        noise: &mut G,
        scratch: &mut [f64],
    ) {
        let d = x.len();
        noise.fill_standard_normal(&mut scratch[..2 * d]);
        let (xi1, xi2) = scratch[..2 * d].split_at(d);
        for j in 0..d {
            let (zx, zv) = self.noise_pair(xi1[j], xi2[j]);
            x[j] += self.f * v[j] + zx;
            v[j] = self.eta * v[j] + zv;
        }
    }
}

/// Exact OU step over duration `t`: `x' = x + F_t v + Zx`, `v' = eta_t v + Zv`.
pub fn ou_step<G: GaussianSource + ?Sized>(
    state: &PhaseState,
    t: f64,
    gamma: f64,
    noise: &mut G,
) -> Result<PhaseState> {
    let c = OUCoeffs::new(t, gamma)?;
    let mut out = state.clone();
    let mut scratch = vec![0.0; 2 * state.dim()];
    c.apply(&mut out.x, &mut out.v, noise, &mut scratch);
    Ok(out)
}

/// `v' = v - h grad`.
pub fn b_kick(state: &PhaseState, h: f64, grad: &[f64]) -> Result<PhaseState> {
    check_len("gradient", grad.len(), state.dim())?;
    let mut out = state.clone();
    kick(&mut out.v, h, grad);
    Ok(out)
}

/// `x' = x + t v`.
pub fn a_drift(state: &PhaseState, t: f64) -> PhaseState {
    let mut out = state.clone();
    drift(&mut out.x, &out.v, t);
    out
}

/// `v' = exp(-gamma t) v + sqrt(1 - exp(-2 gamma t)) xi`.
pub fn o_refresh<G: GaussianSource + ?Sized>(
    v: &[f64],
    t: f64,
    gamma: f64,
    noise: &mut G,
) -> Result<Vec<f64>> {
    let o = ORefresh::new(t, gamma)?;
    let mut out = v.to_vec();
    let mut scratch = vec![0.0; v.len()];
    o.apply(&mut out, noise, &mut scratch);
    Ok(out)
}

#[inline]
fn kick(v: &mut [f64], h: f64, grad: &[f64]) {
    for (vi, g) in v.iter_mut().zip(grad) {
        *vi -= h * g;
    }
}

#[inline]
fn drift(x: &mut [f64], v: &[f64], t: f64) {
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi += t * vi;
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ORefresh {
    eta: f64,
    scale: f64,
}

impl ORefresh {
    pub(crate) fn new(t: f64, gamma: f64) -> Result<Self> {
        if !(t > 0.0) || !(gamma > 0.0) {
            return Err(Error::invalid(format!(
                "O step needs t > 0 and gamma > 0, got t = {t}, gamma = {gamma}"
            )));
        }
        let a = gamma * t;
        Ok(Self {
            eta: (-a).exp(),
            scale: (-(-2.0 * a).exp_m1()).sqrt(),
        })
    }

    pub(crate) fn apply<G: GaussianSource + ?Sized>(
        &self,
        v: &mut [f64],
        noise: &mut G,
        scratch: &mut [f64],
    ) {
        let d = v.len();
        noise.fill_standard_normal(&mut scratch[..d]);
        for (vi, xi) in v.iter_mut().zip(&scratch[..d]) {
            *vi = self.eta * *vi + self.scale * xi;
        }
    }
}

/// Which splitting scheme a chain uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Ubu,
    Baoab,
    Euler,
}

impl Scheme {
    /// Standard normals consumed per step in dimension `d`.
    pub fn normals_per_step(self, d: usize) -> usize {
        match self {
            Scheme::Ubu => 4 * d,
            Scheme::Baoab | Scheme::Euler => d,
        }
    }
}

/// UBU: OU half step, kick with the gradient at the midpoint, OU half step.
#[derive(Debug, Clone)]
pub struct Ubu {
    h: f64,
    half: OUCoeffs,
    scratch: Vec<f64>,
    grad: Vec<f64>,
}

impl Ubu {
    pub fn new(h: f64, gamma: f64, dim: usize) -> Result<Self> {
        Ok(Self {
            h,
            half: OUCoeffs::new(0.5 * h, gamma)?,
            scratch: vec![0.0; 2 * dim],
            grad: vec![0.0; dim],
        })
    }

    pub fn half_step_coeffs(&self) -> &OUCoeffs {
        &self.half
    }

    /// Advances `state` by one step; `grad_at` is called exactly once.
    pub fn step<G, F>(&mut self, state: &mut PhaseState, mut grad_at: F, noise: &mut G) -> Result<()>
    where
        G: GaussianSource + ?Sized,
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        self.half.apply(&mut state.x, &mut state.v, noise, &mut self.scratch);
        grad_at(&state.x, &mut self.grad)?;
        kick(&mut state.v, self.h, &self.grad);
        self.half.apply(&mut state.x, &mut state.v, noise, &mut self.scratch);
        Ok(())
    }
}

/// One UBU step.
pub fn ubu_step<G, F>(state: &PhaseState, h: f64, gamma: f64, grad_at: F, noise: &mut G) -> Result<PhaseState>
where
    G: GaussianSource + ?Sized,
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut out = state.clone();
    Ubu::new(h, gamma, state.dim())?.step(&mut out, grad_at, noise)?;
    Ok(out)
}

/// BAOAB with a one-step-delayed gradient cache: the closing half kick of a
/// step and the opening half kick of the next share one evaluation.
#[derive(Debug, Clone)]
pub struct Baoab {
    h: f64,
    o: ORefresh,
    scratch: Vec<f64>,
}

impl Baoab {
    pub fn new(h: f64, gamma: f64, dim: usize) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!("stepsize must be positive, got {h}")));
        }
        Ok(Self {
            h,
            o: ORefresh::new(h, gamma)?,
            scratch: vec![0.0; dim],
        })
    }

    /// `cached_grad` holds the gradient at the current `x` on entry and the
    /// freshly evaluated gradient at the new `x` on exit.
    pub fn step<G, F>(
        &mut self,
        state: &mut PhaseState,
        cached_grad: &mut [f64],
        mut grad_at: F,
        noise: &mut G,
    ) -> Result<()>
    where
        G: GaussianSource + ?Sized,
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let half = 0.5 * self.h;
        kick(&mut state.v, half, cached_grad);
        drift(&mut state.x, &state.v, half);
        self.o.apply(&mut state.v, noise, &mut self.scratch);
        drift(&mut state.x, &state.v, half);
        grad_at(&state.x, cached_grad)?;
        kick(&mut state.v, half, cached_grad);
        Ok(())
    }
}

/// One BAOAB step; returns the new state and the gradient at its position.
pub fn baoab_step<G, F>(
    state: &PhaseState,
    h: f64,
    gamma: f64,
    cached_grad: &[f64],
    grad_at: F,
    noise: &mut G,
) -> Result<(PhaseState, Vec<f64>)>
where
    G: GaussianSource + ?Sized,
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    check_len("cached gradient", cached_grad.len(), state.dim())?;
    let mut out = state.clone();
    let mut g = cached_grad.to_vec();
    Baoab::new(h, gamma, state.dim())?.step(&mut out, &mut g, grad_at, noise)?;
    Ok((out, g))
}

/// Euler-Maruyama (SG-HMC): `x' = x + h v`,
/// `v' = v - h G(x) - h gamma v + sqrt(2 gamma h) xi`, gradient at the old `x`.
#[derive(Debug, Clone)]
pub struct Euler {
    h: f64,
    gamma: f64,
    noise_scale: f64,
    scratch: Vec<f64>,
    grad: Vec<f64>,
}

impl Euler {
    pub fn new(h: f64, gamma: f64, dim: usize) -> Result<Self> {
        if !(h > 0.0) || !(gamma > 0.0) {
            return Err(Error::invalid(format!(
                "Euler step needs h > 0 and gamma > 0, got h = {h}, gamma = {gamma}"
            )));
        }
        Ok(Self {
            h,
            gamma,
            noise_scale: (2.0 * gamma * h).sqrt(),
            scratch: vec![0.0; dim],
            grad: vec![0.0; dim],
        })
    }

    pub fn step<G, F>(&mut self, state: &mut PhaseState, mut grad_at: F, noise: &mut G) -> Result<()>
    where
        G: GaussianSource + ?Sized,
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        grad_at(&state.x, &mut self.grad)?;
        let d = state.dim();
        noise.fill_standard_normal(&mut self.scratch[..d]);
        let damp = 1.0 - self.h * self.gamma;
        for j in 0..d {
            let v = state.v[j];
            state.x[j] += self.h * v;
            state.v[j] = damp * v - self.h * self.grad[j] + self.noise_scale * self.scratch[j];
        }
        Ok(())
    }
}

/// One Euler-Maruyama step.
pub fn euler_step<G, F>(state: &PhaseState, h: f64, gamma: f64, grad_at: F, noise: &mut G) -> Result<PhaseState>
where
    G: GaussianSource + ?Sized,
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut out = state.clone();
    Euler::new(h, gamma, state.dim())?.step(&mut out, grad_at, noise)?;
    Ok(out)
}

/// Deterministic leapfrog in drift-kick-drift form.
pub fn leapfrog_kick_drift<F>(state: &mut PhaseState, h: f64, grad: &mut [f64], mut grad_at: F) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("stepsize must be positive, got {h}")));
    }
    drift(&mut state.x, &state.v, 0.5 * h);
    grad_at(&state.x, grad)?;
    kick(&mut state.v, h, grad);
    drift(&mut state.x, &state.v, 0.5 * h);
    Ok(())
}

/// Elastic reflection into the box `|x_j - center_j| <= rho_max`, coordinate
/// by coordinate. Each crossing of a face mirrors the position across it and
/// negates that velocity component.
pub fn reflect_hypercube(state: &mut PhaseState, center: &[f64], rho_max: f64) {
    let width = 2.0 * rho_max;
    for ((x, v), c) in state.x.iter_mut().zip(state.v.iter_mut()).zip(center) {
        if (*x - c).abs() <= rho_max {
            continue;
        }
        // unfold the straight-line motion on the period-2w circle
        let u = *x - (c - rho_max);
        let k = (u / width).floor();
        let rem = u - k * width;
        let odd = (k as i64).rem_euclid(2) == 1;
        let folded = if odd { width - rem } else { rem };
        *x = c - rho_max + folded;
        if odd {
            *v = -*v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{stream_rng, RngNormals, Suppressed};

    fn zero_grad(_: &[f64], g: &mut [f64]) -> Result<()> {
        g.fill(0.0);
        Ok(())
    }

    #[test]
    fn coefficient_ranges() {
        for &(t, g) in &[(0.1, 1.0), (0.05, 8f64.sqrt()), (0.5, 5.0), (1e-12, 1.0), (3.0, 3.0)] {
            let c = OUCoeffs::new(t, g).unwrap();
            assert!(c.eta > 0.0 && c.eta < 1.0);
            assert!(c.mix > 0.0 && c.mix <= 1.0);
            assert!(c.f > 0.0 && c.f < t);
        }
        assert!(OUCoeffs::new(0.0, 1.0).is_err());
        assert!(OUCoeffs::new(1.0, -1.0).is_err());
    }

    #[test]
    fn small_gamma_t_matches_extended_precision() {
        // 200-bit values of mix and 1 - mix^2
        let cases = [
            (1e-10, 1.0, 8.3333333333333333333e-22),
            (1e-6, 0.99999999999995833333, 8.3333333333325e-14),
            (1e-3, 0.99999995833333663194, 8.3333325000000843254e-8),
            (0.5, 0.98978515326046213488, 0.020325350385163482889),
        ];
        for (a, mix, comp) in cases {
            let c = OUCoeffs::new(a, 1.0).unwrap();
            assert!((c.mix - mix).abs() / mix < 1e-8, "mix at {a}");
            let got = c.mix_complement * c.mix_complement;
            assert!((got - comp).abs() / comp < 1e-8, "complement at {a}: {got}");
        }
        let mut a = 1e-14;
        while a <= 10.0 {
            let c = OUCoeffs::new(a, 1.0).unwrap();
            let (vx, cov, vv) = c.noise_moments();
            for q in [c.eta, c.f, c.mix, c.mix_complement, c.z2_scale, vx, cov, vv] {
                assert!(q.is_finite());
            }
            a *= 3.7;
        }
    }

    #[test]
    fn ou_deterministic_part() {
        let s = PhaseState::new(vec![0.0], vec![1.0]).unwrap();
        let out = ou_step(&s, 0.5, 2.0, &mut Suppressed).unwrap();
        assert!((out.x[0] - 0.3160602794142788392).abs() < 1e-14);
        assert!((out.v[0] - 0.3678794411714423216).abs() < 1e-14);

        let s = PhaseState::new(vec![1.5, -2.0], vec![0.0, 0.0]).unwrap();
        let out = ou_step(&s, 0.3, 1.0, &mut Suppressed).unwrap();
        assert_eq!(out, s);
        assert!(ou_step(&s, 0.0, 1.0, &mut Suppressed).is_err());
    }

    #[test]
    fn ou_noise_covariance_monte_carlo() {
        let c = OUCoeffs::new(0.25, 1.0).unwrap();
        let mut rng = RngNormals::new(stream_rng(42, 0));
        let n = 1_000_000;
        let mut buf = [0.0; 2];
        let (mut sxv, mut sxx, mut svv) = (0.0, 0.0, 0.0);
        let mut prods = Vec::with_capacity(n);
        for _ in 0..n {
            rng.fill_standard_normal(&mut buf);
            let (zx, zv) = c.noise_pair(buf[0], buf[1]);
            sxv += zx * zv;
            sxx += zx * zx;
            svv += zv * zv;
            prods.push(zx * zv);
        }
        let nf = n as f64;
        let cov = sxv / nf;
        let se = (prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / nf / nf).sqrt();
        let want = (1.0 - (-0.25f64).exp()).powi(2);
        assert!((want - 0.048929093569823687113).abs() < 1e-15);
        assert!((cov - want).abs() < 4.0 * se, "{cov} vs {want} (se {se})");
        let (vx, _, vv) = c.noise_moments();
        assert!((sxx / nf - vx).abs() / vx < 0.01);
        assert!((svv / nf - vv).abs() / vv < 0.01);
    }

    #[test]
    fn kick_and_drift_examples() {
        let s = PhaseState::new(vec![0.3], vec![0.0]).unwrap();
        assert_eq!(b_kick(&s, 0.1, &[0.0]).unwrap(), s);
        assert!((b_kick(&s, 0.1, &[1.0]).unwrap().v[0] + 0.1).abs() < 1e-15);
        let s2 = PhaseState::new(vec![0.0, 0.0], vec![0.2, -0.1]).unwrap();
        let twice = b_kick(&b_kick(&s2, 0.1, &[1.0, 2.0]).unwrap(), 0.1, &[0.5, -1.0]).unwrap();
        let once = b_kick(&s2, 0.1, &[1.5, 1.0]).unwrap();
        for j in 0..2 {
            assert!((twice.v[j] - once.v[j]).abs() < 1e-15);
        }
        assert!(b_kick(&s2, 0.1, &[1.0]).is_err());

        let s = PhaseState::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(a_drift(&s, 0.5).x, vec![0.5, 1.0]);
        let a = a_drift(&a_drift(&s, 0.2), 0.3);
        let b = a_drift(&s, 0.5);
        for j in 0..2 {
            assert!((a.x[j] - b.x[j]).abs() < 1e-15);
        }
        let rest = PhaseState::at_rest(vec![1.0, 2.0]);
        assert_eq!(a_drift(&rest, 0.7), rest);
    }

    #[test]
    fn o_refresh_examples() {
        let v = o_refresh(&[0.8, -0.4], std::f64::consts::LN_2, 1.0, &mut Suppressed).unwrap();
        assert!((v[0] - 0.4).abs() < 1e-15 && (v[1] + 0.2).abs() < 1e-15);

        let mut noise = RngNormals::new(stream_rng(1, 1));
        let n = 100_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let v = o_refresh(&[3.0], 50.0, 1.0, &mut noise).unwrap();
            sq += v[0] * v[0];
        }
        let var = sq / n as f64;
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());

        // stationarity of N(0, 1)
        let mut sq = 0.0;
        let mut input = [0.0];
        for _ in 0..n {
            noise.fill_standard_normal(&mut input);
            let v = o_refresh(&input, 0.3, 2.0, &mut noise).unwrap();
            sq += v[0] * v[0];
        }
        assert!((sq / n as f64 - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn ubu_zero_potential_composes_to_single_ou_step() {
        let h = 0.3;
        let gamma = 1.7;
        let half = OUCoeffs::new(h / 2.0, gamma).unwrap();
        let full = OUCoeffs::new(h, gamma).unwrap();
        assert!((half.f * (1.0 + half.eta) - full.f).abs() < 1e-15);
        let s = PhaseState::new(vec![0.2], vec![1.3]).unwrap();
        let a = ubu_step(&s, h, gamma, zero_grad, &mut Suppressed).unwrap();
        let b = ou_step(&s, h, gamma, &mut Suppressed).unwrap();
        assert!((a.x[0] - b.x[0]).abs() < 1e-14 && (a.v[0] - b.v[0]).abs() < 1e-14);
    }

    #[test]
    fn one_gradient_per_step() {
        let mut calls = 0;
        let s = PhaseState::new(vec![0.1, 0.2], vec![0.0, 0.0]).unwrap();
        let mut noise = RngNormals::new(stream_rng(2, 0));
        let mut counting = |_: &[f64], g: &mut [f64]| {
            calls += 1;
            g.fill(0.1);
            Ok(())
        };
        let mut ubu = Ubu::new(0.1, 1.0, 2).unwrap();
        let mut st = s.clone();
        for _ in 0..5 {
            ubu.step(&mut st, &mut counting, &mut noise).unwrap();
        }
        let mut baoab = Baoab::new(0.1, 1.0, 2).unwrap();
        let mut g = vec![0.0; 2];
        for _ in 0..5 {
            baoab.step(&mut st, &mut g, &mut counting, &mut noise).unwrap();
        }
        let mut euler = Euler::new(0.1, 1.0, 2).unwrap();
        for _ in 0..5 {
            euler.step(&mut st, &mut counting, &mut noise).unwrap();
        }
        assert_eq!(calls, 15);
    }

    #[test]
    fn baoab_zero_potential_is_aoa() {
        let s = PhaseState::new(vec![0.5], vec![1.0]).unwrap();
        let (out, g) = baoab_step(&s, 0.2, 1.0, &[0.0], zero_grad, &mut Suppressed).unwrap();
        let a = a_drift(&s, 0.1);
        let v = o_refresh(&a.v, 0.2, 1.0, &mut Suppressed).unwrap();
        let manual = a_drift(&PhaseState::new(a.x, v).unwrap(), 0.1);
        assert!((out.x[0] - manual.x[0]).abs() < 1e-15);
        assert!((out.v[0] - manual.v[0]).abs() < 1e-15);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn euler_examples() {
        let s = PhaseState::new(vec![0.0], vec![1.0]).unwrap();
        let out = euler_step(&s, 0.1, 1.0, zero_grad, &mut Suppressed).unwrap();
        assert!((out.x[0] - 0.1).abs() < 1e-15 && (out.v[0] - 0.9).abs() < 1e-15);

        // mean of Euler vs exact OU over a small step agree to O(h^2)
        let h = 1e-3;
        let s = PhaseState::new(vec![0.4], vec![0.7]).unwrap();
        let e = euler_step(&s, h, 2.0, zero_grad, &mut Suppressed).unwrap();
        let o = ou_step(&s, h, 2.0, &mut Suppressed).unwrap();
        assert!((e.x[0] - o.x[0]).abs() < 1e-5 && (e.v[0] - o.v[0]).abs() < 1e-5);
    }

    fn quad_grad(a: [f64; 4]) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> {
        move |x: &[f64], g: &mut [f64]| {
            g[0] = a[0] * x[0] + a[1] * x[1];
            g[1] = a[2] * x[0] + a[3] * x[1];
            Ok(())
        }
    }

    #[test]
    fn leapfrog_free_motion_and_reversibility() {
        let mut s = PhaseState::new(vec![0.5, -0.5], vec![1.0, 2.0]).unwrap();
        let mut g = vec![0.0; 2];
        leapfrog_kick_drift(&mut s, 0.25, &mut g, zero_grad).unwrap();
        assert_eq!(s.x, vec![0.75, 0.0]);
        assert_eq!(s.v, vec![1.0, 2.0]);

        let a = [2.0, 0.3, 0.3, 1.0];
        let start = PhaseState::new(vec![0.3, -1.1], vec![0.7, 0.2]).unwrap();
        let mut s = start.clone();
        leapfrog_kick_drift(&mut s, 0.1, &mut g, quad_grad(a)).unwrap();
        s.v.iter_mut().for_each(|v| *v = -*v);
        leapfrog_kick_drift(&mut s, 0.1, &mut g, quad_grad(a)).unwrap();
        s.v.iter_mut().for_each(|v| *v = -*v);
        for j in 0..2 {
            assert!((s.x[j] - start.x[j]).abs() < 1e-12);
            assert!((s.v[j] - start.v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn leapfrog_has_unit_jacobian() {
        let a = [2.0, 0.3, 0.3, 1.0];
        let z0 = [0.3, -1.1, 0.7, 0.2];
        let map = |z: [f64; 4]| {
            let mut s = PhaseState::new(z[..2].to_vec(), z[2..].to_vec()).unwrap();
            let mut g = vec![0.0; 2];
            leapfrog_kick_drift(&mut s, 0.1, &mut g, quad_grad(a)).unwrap();
            [s.x[0], s.x[1], s.v[0], s.v[1]]
        };
        // the map is affine for a linear force, so unit differences are exact
        let base = map(z0);
        let mut jac = [[0.0; 4]; 4];
        for k in 0..4 {
            let mut zp = z0;
            zp[k] += 1.0;
            let p = map(zp);
            for i in 0..4 {
                jac[i][k] = p[i] - base[i];
            }
        }
        let det = det4(jac);
        assert!((det - 1.0).abs() < 1e-10, "{det}");
    }

    fn det4(m: [[f64; 4]; 4]) -> f64 {
        let mut a = m;
        let mut det = 1.0;
        for c in 0..4 {
            let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det *= a[c][c];
            for r in c + 1..4 {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        det
    }

    #[test]
    fn hypercube_reflection() {
        let mut s = PhaseState::new(vec![0.3, -0.9], vec![1.0, 1.0]).unwrap();
        let orig = s.clone();
        reflect_hypercube(&mut s, &[0.0, 0.0], 1.0);
        assert_eq!(s, orig);

        let mut s = PhaseState::new(vec![1.3], vec![2.0]).unwrap();
        reflect_hypercube(&mut s, &[0.0], 1.0);
        assert!((s.x[0] - 0.7).abs() < 1e-15 && s.v[0] == -2.0);

        // 3.5 -> fold at +1 gives -1.5 -> fold at -1 gives -0.5, two flips
        let mut s = PhaseState::new(vec![3.5], vec![2.0]).unwrap();
        reflect_hypercube(&mut s, &[0.0], 1.0);
        assert!((s.x[0] + 0.5).abs() < 1e-15 && s.v[0] == 2.0);

        let mut s = PhaseState::new(vec![-1.25], vec![-1.0]).unwrap();
        reflect_hypercube(&mut s, &[0.0], 1.0);
        assert!((s.x[0] + 0.75).abs() < 1e-15 && s.v[0] == 1.0);

        let mut s = PhaseState::new(vec![1e12 + 0.25], vec![1.0]).unwrap();
        reflect_hypercube(&mut s, &[1e12], 1.0);
        assert!((s.x[0] - 1e12).abs() <= 1.0);
    }

    #[test]
    fn divergence_detection() {
        assert!(!detect_divergence(&PhaseState::at_rest(vec![1.0, 2.0])));
        let s = PhaseState { x: vec![0.0], v: vec![f64::NAN] };
        assert!(detect_divergence(&s));
        let s = PhaseState { x: vec![1e101], v: vec![0.0] };
        assert!(detect_divergence(&s));
    }
}
