use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::genotype::Genotype;

/// Per-bit flip probability.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MutationRate(f64);

impl MutationRate {
    /// Returns `None` unless `0 < sigma <= 0.5`.
    pub fn new(sigma: f64) -> Option<Self> {
        (sigma > 0.0 && sigma <= 0.5).then_some(Self(sigma))
    }

    pub fn sigma(self) -> f64 {
        self.0
    }

    pub fn clamp(self, bounds: RateBounds) -> Self {
        Self(self.0.clamp(bounds.min, bounds.max))
    }

    pub(crate) fn scaled(self, factor: f64) -> Self {
        Self(self.0 * factor)
    }
}

/// Closed interval the adapted rate is clamped to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub min: f64,
    pub max: f64,
}

impl RateBounds {
    /// `[1/N², 0.5]`.
    pub fn for_length(n: usize) -> Self {
        let n = n as f64;
        Self {
            min: 1.0 / (n * n),
            max: 0.5,
        }
    }

    pub fn contains(&self, rate: MutationRate) -> bool {
        rate.0 >= self.min && rate.0 <= self.max
    }
}

/// Bit-flip mutation. Every bit flips independently with probability sigma;
/// a sample identical to the parent is discarded and redrawn, so the child
/// always differs in at least one position.
pub fn mutate<R: Rng + ?Sized>(parent: &Genotype, rate: MutationRate, rng: &mut R) -> Genotype {
    assert!(!parent.is_empty(), "cannot mutate an empty genotype");
    loop {
        let mut child = parent.clone();
        let mut flipped = false;
        for i in 0..child.len() {
            if rng.gen_bool(rate.sigma()) {
                child.flip(i);
                flipped = true;
            }
        }
        if flipped {
            return child;
        }
    }
}
