//! Seed streams and Dirichlet sampling.
//!
//! A stream is identified by a master seed and a path of integer tags (for
//! example `[purpose, replica, vertex]`). The path is folded through the
//! SplitMix64 finalizer into a 64-bit stream id, which then seeds a ChaCha8
//! generator. Streams never depend on thread scheduling or on the size of
//! the graph being sampled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tags {
    pub const ENVIRONMENT: u64 = 1;
    pub const VERTEX: u64 = 2;
    pub const PHI_MC: u64 = 3;
    pub const MOMENTS: u64 = 4;
    pub const WALK: u64 = 5;
    pub const CASES: u64 = 6;
    pub const REVERSED: u64 = 7;
    pub const HITTING: u64 = 8;
    pub const QUENCHED: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for `(master, path)`.
pub fn stream_id(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_id(master, path))
}

/// Dirichlet sampler working in log space so that small parameters do not
/// underflow to exact zeros.
#[derive(Debug, Clone)]
pub struct DirichletSampler {
    alpha: Vec<f64>,
    gammas: Vec<Gamma<f64>>,
}

/// Smallest coordinate ever emitted.
pub const MIN_COORD: f64 = 1e-300;

impl DirichletSampler {
    pub fn new(alpha: &[f64]) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Params("Dirichlet law needs at least one parameter".into()));
        }
        let mut gammas = Vec::with_capacity(alpha.len());
        for &a in alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Params(format!("Dirichlet parameters must be positive, got {a}")));
            }
            let shape = if a < 1.0 { a + 1.0 } else { a };
            gammas.push(Gamma::new(shape, 1.0).map_err(|e| Error::Params(e.to_string()))?);
        }
        Ok(Self { alpha: alpha.to_vec(), gammas })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Writes one sample into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.alpha.len();
        if n == 1 {
            out[0] = 1.0;
            return;
        }
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            let a = self.alpha[i];
            let g: f64 = self.gammas[i].sample(rng);
            let mut lg = g.ln();
            if a < 1.0 {
                let v: f64 = rng.random();
                lg += (1.0 - v).ln() / a;
            }
            out[i] = lg;
            max = max.max(lg);
        }
        let mut total = 0.0;
        for x in out.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in out.iter_mut() {
            *x = (*x / total).max(MIN_COORD);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}
