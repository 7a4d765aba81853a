//! Seeded random streams.
//!
//! A [`SeededRng`] is addressed by `(seed, stream)`. Photon arrivals and read
//! noise come from two separate ChaCha8 generators so that a model without
//! read noise consumes exactly the same photon stream as one with it, and so
//! that photon draws stay aligned across exposures when the same stream is
//! reused at every grid point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::special_fn::ln_factorial;

/// Below this rate Poisson draws use sequential inversion (one uniform per
/// draw, monotone in the rate); above it, transformed rejection.
const INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    photon: ChaCha8Rng,
    read: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut photon = ChaCha8Rng::seed_from_u64(seed);
        photon.set_stream(stream);
        let mut read = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5EED_0F_2EAD));
        read.set_stream(stream);
        SeededRng {
            seed,
            stream,
            photon,
            read,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        SeededRng::new(self.seed, stream)
    }

    /// Uniform on `[0, 1)` from the photon generator.
    pub fn uniform(&mut self) -> f64 {
        self.photon.random::<f64>()
    }

    /// Standard normal draw from the read-noise generator.
    pub fn standard_normal(&mut self) -> f64 {
        self.read.sample(StandardNormal)
    }

    /// Draw from `Poisson(rate)`.
    pub fn poisson(&mut self, rate: f64) -> u64 {
        if rate <= 0.0 {
            return 0;
        }
        if rate < INVERSION_LIMIT {
            self.poisson_inversion(rate)
        } else {
            self.poisson_ptrs(rate)
        }
    }

    fn poisson_inversion(&mut self, rate: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-rate).exp();
        let mut cdf = p;
        while cdf <= u {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
            // Rounding can leave the accumulated cdf a hair below u.
            if p == 0.0 && k as f64 > rate {
                break;
            }
        }
        k
    }

    /// Hörmann's PTRS transformed rejection with squeeze.
    fn poisson_ptrs(&mut self, rate: f64) -> u64 {
        let slam = rate.sqrt();
        let loglam = rate.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
            let rhs = -rate + k * loglam - ln_factorial(k as u64);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }
}
