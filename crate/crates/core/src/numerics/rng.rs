//! Keyed random streams.
//!
//! Every consumer of randomness names its stream. The generator for a stream
//! is a ChaCha20 instance whose key is the SHA-256 digest of the seed and the
//! label, so the values a stream produces never depend on which other streams
//! were drawn first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Derived stream `"<label>/<name>"` under the same seed.
    pub fn child(&self, name: &str) -> RngStream {
        RngStream {
            seed: self.seed,
            label: format!("{}/{}", self.label, name),
        }
    }

    pub fn indexed(&self, index: u64) -> RngStream {
        self.child(&index.to_string())
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"vir-rng-v1\0");
        hasher.update(self.seed.to_le_bytes());
        hasher.update(self.label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        ChaCha20Rng::from_seed(key)
    }
}

/// Uniform draw in `[lo, hi)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Uniform draw in `(0, 1]`.
#[inline]
pub fn unit_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + std * z
}

pub fn draw_uniform(stream: &RngStream, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo < hi) {
        return Err(Error::Parameter(format!("uniform range requires lo < hi, got [{lo}, {hi})")));
    }
    let mut rng = stream.rng();
    Ok((0..n).map(|_| uniform(&mut rng, lo, hi)).collect())
}

pub fn draw_gaussian(stream: &RngStream, mean: f64, std: f64, n: usize) -> Result<Vec<f64>> {
    if !(std > 0.0) {
        return Err(Error::Parameter(format!("gaussian std must be positive, got {std}")));
    }
    let mut rng = stream.rng();
    Ok((0..n).map(|_| gaussian(&mut rng, mean, std)).collect())
}
