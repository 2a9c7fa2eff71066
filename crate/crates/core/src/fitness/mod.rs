//! Fitness functions minimized by the EA.
//!
//! [`NetworkFitness`] trains decoded networks; the pseudo-Boolean landscapes
//! and [`ScriptedFitness`] exist so the search loop can be exercised without
//! training anything.

mod network;

use std::collections::HashMap;

use thiserror::Error;

use crate::genotype::Genotype;

pub use network::{
    evaluate_genotype, network_fitness, train_genotype, training_seed, CacheKey, EvalStatus, FitnessCache, FitnessData,
    FitnessRecord, NetworkFitness, TrainingConfig,
};

/// Fitness value substituted for a failed evaluation.
pub const FAILED_FITNESS: f64 = f64::INFINITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitnessError {
    /// The candidate could not be evaluated (for example the loss diverged).
    /// The EA records [`FAILED_FITNESS`] and keeps running.
    #[error("evaluation failed: {0}")]
    Failed(String),
    #[error("no scripted fitness for genotype {0}")]
    MissingEntry(String),
    #[error("genotype length {found} incompatible with {expected}")]
    InvalidGenotype { expected: String, found: usize },
}

impl FitnessError {
    /// Whether the EA should continue with the failure sentinel.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, FitnessError::Failed(_))
    }
}

/// Objective minimized by the EA.
pub trait Fitness {
    fn evaluate(&mut self, genotype: &Genotype) -> Result<f64, FitnessError>;
}

impl<F> Fitness for F
where
    F: FnMut(&Genotype) -> f64,
{
    fn evaluate(&mut self, genotype: &Genotype) -> Result<f64, FitnessError> {
        Ok(self(genotype))
    }
}

/// `N - |ones|`, zero at the all-ones optimum.
pub fn onemax_deficit(genotype: &Genotype) -> f64 {
    (genotype.len() - genotype.count_ones()) as f64
}

/// Concatenated deceptive trap of block size `block`, as a deficit.
///
/// A block with `u` ones scores `k` when full and `k - 1 - u` otherwise; the
/// result is `N` minus the total score.
pub fn trap_deficit(genotype: &Genotype, block: usize) -> Result<f64, FitnessError> {
    let n = genotype.len();
    if block == 0 || n % block != 0 {
        return Err(FitnessError::InvalidGenotype {
            expected: format!("a multiple of block size {block}"),
            found: n,
        });
    }
    let score: usize = genotype
        .bits()
        .chunks(block)
        .map(|chunk| {
            let u = chunk.iter().filter(|&&b| b).count();
            if u == block {
                block
            } else {
                block - 1 - u
            }
        })
        .sum();
    Ok((n - score) as f64)
}

/// Trap landscape with a fixed block size, usable as a [`Fitness`].
#[derive(Clone, Copy, Debug)]
pub struct TrapFitness {
    pub block: usize,
}

impl Fitness for TrapFitness {
    fn evaluate(&mut self, genotype: &Genotype) -> Result<f64, FitnessError> {
        trap_deficit(genotype, self.block)
    }
}

/// Lookup table fitness for driving the EA through exact scenarios.
#[derive(Clone, Debug, Default)]
pub struct ScriptedFitness {
    table: HashMap<Genotype, f64>,
    calls: usize,
}

impl ScriptedFitness {
    pub fn new(table: HashMap<Genotype, f64>) -> Self {
        Self { table, calls: 0 }
    }

    /// Builds a table from `(bit string, fitness)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Self::new(
            pairs
                .into_iter()
                .map(|(bits, f)| (bits.parse().expect("valid bit string"), f))
                .collect(),
        )
    }

    pub fn lookup(&self, genotype: &Genotype) -> Result<f64, FitnessError> {
        self.table
            .get(genotype)
            .copied()
            .ok_or_else(|| FitnessError::MissingEntry(genotype.to_string()))
    }

    pub fn table(&self) -> &HashMap<Genotype, f64> {
        &self.table
    }

    /// Number of evaluations served so far.
    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Fitness for ScriptedFitness {
    fn evaluate(&mut self, genotype: &Genotype) -> Result<f64, FitnessError> {
        self.calls += 1;
        self.lookup(genotype)
    }
}
