//! Sources of standard normal draws.
//!
//! Integrators never touch an RNG directly for their Brownian increments; they
//! pull standard normals from a [`GaussianSource`]. This lets tests suppress
//! noise entirely and lets the coupling machinery record the fine chain's
//! draws and replay aggregated draws into the coarse chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// RNG used for every chain in the toolkit.
pub type ChainRng = ChaCha8Rng;

/// Deterministic RNG for `stream` derived from a master seed.
///
/// Distinct streams of the same seed are statistically independent
/// ChaCha streams, so chains, ensemble members and coupled levels can be
/// split off one master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub trait GaussianSource {
    /// Overwrite `out` with independent standard normal draws.
    fn fill_standard_normal(&mut self, out: &mut [f64]);
}

impl<G: GaussianSource + ?Sized> GaussianSource for &mut G {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        (**self).fill_standard_normal(out)
    }
}

/// Standard normals drawn from an RNG.
#[derive(Debug, Clone)]
pub struct RngNormals<R> {
    rng: R,
}

impl<R: rand::Rng> RngNormals<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: rand::Rng> GaussianSource for RngNormals<R> {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Test hook: every draw is zero, leaving only the deterministic part of a map.
#[derive(Debug, Clone, Copy, Default)]
pub struct Suppressed;

impl GaussianSource for Suppressed {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Wraps a source and appends every draw to a log.
#[derive(Debug)]
pub struct Recording<S> {
    inner: S,
    log: Vec<f64>,
}

impl<S: GaussianSource> Recording<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            log: Vec::new(),
        }
    }

    pub fn log(&self) -> &[f64] {
        &self.log
    }

    pub fn clear(&mut self) {
        self.log.clear();
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.inner
    }
}

impl<S: GaussianSource> GaussianSource for Recording<S> {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        self.inner.fill_standard_normal(out);
        self.log.extend_from_slice(out);
    }
}

/// Hands out a pre-filled buffer in order. Panics when asked for more draws
/// than were loaded, which indicates a coupling layout bug.
#[derive(Debug, Default)]
pub struct Replay {
    buf: Vec<f64>,
    pos: usize,
}

impl Replay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&mut self, draws: &[f64]) {
        self.buf.clear();
        self.buf.extend_from_slice(draws);
        self.pos = 0;
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl GaussianSource for Replay {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let end = self.pos + out.len();
        assert!(
            end <= self.buf.len(),
            "replay buffer exhausted: wanted {} draws, {} left",
            out.len(),
            self.remaining()
        );
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngNormals::new(stream_rng(7, 0));
        let mut b = RngNormals::new(stream_rng(7, 0));
        let mut c = RngNormals::new(stream_rng(7, 1));
        let (mut xa, mut xb, mut xc) = ([0.0; 8], [0.0; 8], [0.0; 8]);
        a.fill_standard_normal(&mut xa);
        b.fill_standard_normal(&mut xb);
        c.fill_standard_normal(&mut xc);
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn recording_then_replay_round_trips() {
        let mut rec = Recording::new(RngNormals::new(stream_rng(1, 0)));
        let mut first = [0.0; 5];
        rec.fill_standard_normal(&mut first);
        let mut replay = Replay::new();
        replay.load(rec.log());
        let mut again = [0.0; 5];
        replay.fill_standard_normal(&mut again);
        assert_eq!(first, again);
        assert_eq!(replay.remaining(), 0);
    }

    #[test]
    #[should_panic(expected = "replay buffer exhausted")]
    fn replay_overrun_panics() {
        let mut replay = Replay::new();
        replay.load(&[1.0]);
        let mut out = [0.0; 2];
        replay.fill_standard_normal(&mut out);
    }
}
