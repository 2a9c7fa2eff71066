//! (1+1)-EA over bit strings with one-fifth-rule rate control and a
//! probabilistic niching branch.

mod ea;
mod history;
mod mutation;
mod niching;
mod rechenberg;

use thiserror::Error;

use crate::fitness::FitnessError;

pub use ea::{run_ea, run_until, EaConfig, EaState, StepOutcome};
pub use history::{GenerationRecord, RunHistory};
pub use mutation::{mutate, MutationRate, RateBounds};
pub use niching::{BranchResolution, NichingBranch, NichingState};
pub use rechenberg::{rechenberg_update, RechenbergState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EaError {
    #[error("invalid EA configuration: {0}")]
    InvalidConfig(String),
    #[error("genotype has {found} bits, run uses {expected}")]
    GenotypeLength { expected: usize, found: usize },
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}
