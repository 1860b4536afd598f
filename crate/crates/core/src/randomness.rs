//! Seedable, counter-based random streams.
//!
//! Every stochastic operation consumes a [`RandomStream`] built from an
//! immutable [`SeedSpec`]. Streams are ChaCha8 keystreams: the master seed
//! selects the key and the stream id selects the 64-bit nonce, so replicate
//! `k` of a run never collides with replicate `j` and no state is shared
//! between workers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_finite, Error, Result};

/// Below this mean Poisson variates are drawn by sequential inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Same master seed, different replicate index.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id,
        }
    }

    /// Derives an unrelated master seed for a labelled sub-experiment, so that
    /// e.g. the `t = 1` and `t = 2` arms of a run draw from disjoint keys.
    pub fn derive(self, label: u64) -> Self {
        Self {
            master_seed: splitmix64(self.master_seed ^ splitmix64(label.wrapping_add(0x9E37_79B9))),
            stream_id: self.stream_id,
        }
    }

    pub fn stream(self) -> RandomStream {
        RandomStream::new(self)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-owner random stream.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: SeedSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
        rng.set_stream(seed.stream_id);
        Self { rng }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to pass to `ln`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// `mean + std·G` with `G` standard normal.
    pub fn gaussian(&mut self, mean: f64, std: f64) -> Result<f64> {
        draw_gaussian(self, mean, std)
    }

    pub fn poisson(&mut self, mean: f64) -> Result<u64> {
        draw_poisson(self, mean)
    }

    /// Number of successes in `n` independent trials of probability `p`.
    pub fn binomial(&mut self, n: u64, p: f64) -> Result<u64> {
        let d = Binomial::new(n, p)
            .map_err(|e| Error::InvalidParameter(format!("binomial({n}, {p}): {e}")))?;
        Ok(self.rng.sample(d))
    }
}

pub fn draw_gaussian(stream: &mut RandomStream, mean: f64, std: f64) -> Result<f64> {
    ensure_finite("mean", mean)?;
    ensure_finite("std", std)?;
    if std < 0.0 {
        return Err(Error::InvalidParameter(format!("std must be ≥ 0 (got {std})")));
    }
    if std == 0.0 {
        return Ok(mean);
    }
    Ok(mean + std * stream.standard_normal())
}

pub fn draw_poisson(stream: &mut RandomStream, mean: f64) -> Result<u64> {
    ensure_finite("poisson mean", mean)?;
    if mean < 0.0 {
        return Err(Error::InvalidParameter(format!("poisson mean must be ≥ 0 (got {mean})")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < POISSON_INVERSION_LIMIT {
        Ok(poisson_inversion(stream, mean))
    } else {
        Ok(poisson_ptrs(stream, mean))
    }
}

fn poisson_inversion(stream: &mut RandomStream, mean: f64) -> u64 {
    let u = stream.uniform();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // The cap only matters when rounding leaves cdf a hair below u ≈ 1.
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Hörmann's transformed rejection with squeeze (PTRS).
fn poisson_ptrs(stream: &mut RandomStream, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.uniform() - 0.5;
        let v = stream.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
