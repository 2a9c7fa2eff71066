use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed-length bit string searched by the EA.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Genotype {
    bits: Vec<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseGenotypeError {
    #[error("empty bit string")]
    Empty,
    #[error("invalid character {0:?} at position {1}; expected '0' or '1'")]
    InvalidChar(char, usize),
}

impl Genotype {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    /// Uniformly random bit string of length `len`.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self {
            bits: (0..len).map(|_| rng.gen::<bool>()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn flip(&mut self, index: usize) {
        self.bits[index] = !self.bits[index];
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming_distance(&self, other: &Genotype) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Reads `width` bits starting at `offset`, most significant bit first.
    pub fn read_uint(&self, offset: usize, width: usize) -> usize {
        self.bits[offset..offset + width]
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    /// Packs the bits into an integer, first bit most significant. Only
    /// meaningful for genotypes of at most 64 bits.
    pub fn to_u64(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    /// Inverse of [`Genotype::to_u64`] for a given length.
    pub fn from_u64(value: u64, len: usize) -> Self {
        Self {
            bits: (0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1).collect(),
        }
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genotype({self})")
    }
}

impl FromStr for Genotype {
    type Err = ParseGenotypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseGenotypeError::Empty);
        }
        let bits = s
            .chars()
            .enumerate()
            .map(|(i, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ParseGenotypeError::InvalidChar(other, i)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { bits })
    }
}

impl From<Genotype> for String {
    fn from(g: Genotype) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for Genotype {
    type Error = ParseGenotypeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
