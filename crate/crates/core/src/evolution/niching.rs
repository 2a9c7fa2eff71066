use serde::{Deserialize, Serialize};

use crate::genotype::Genotype;

/// A side branch started by accepting a worse child.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NichingBranch {
    /// Parent of the main branch at the moment the worse child was accepted.
    pub saved_parent: Genotype,
    pub saved_fitness: f64,
    /// Generations left before the branch is resolved; always positive.
    pub remaining: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NichingState {
    /// Probability of following a worse child.
    pub eta: f64,
    /// Branch length in generations.
    pub kappa: usize,
    pub branch: Option<NichingBranch>,
}

impl NichingState {
    pub fn new(eta: f64, kappa: usize) -> Self {
        Self {
            eta,
            kappa,
            branch: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.branch.is_some()
    }

    pub fn remaining(&self) -> usize {
        self.branch.as_ref().map_or(0, |b| b.remaining)
    }

    pub(crate) fn start(&mut self, saved_parent: Genotype, saved_fitness: f64) {
        debug_assert!(self.branch.is_none(), "nested niching branch");
        self.branch = Some(NichingBranch {
            saved_parent,
            saved_fitness,
            remaining: self.kappa,
        });
    }

    /// Counts down one branch generation; returns the branch once it expires.
    pub(crate) fn tick(&mut self) -> Option<NichingBranch> {
        let branch = self.branch.as_mut()?;
        branch.remaining -= 1;
        if branch.remaining == 0 {
            self.branch.take()
        } else {
            None
        }
    }

    pub(crate) fn take(&mut self) -> Option<NichingBranch> {
        self.branch.take()
    }
}

/// Outcome of resolving a branch against the current parent: the saved
/// parent wins only with strictly lower fitness.
pub(crate) fn resolve(
    branch: NichingBranch,
    parent: Genotype,
    parent_fitness: f64,
) -> (Genotype, f64, BranchResolution) {
    if branch.saved_fitness < parent_fitness {
        (
            branch.saved_parent,
            branch.saved_fitness,
            BranchResolution::Restored,
        )
    } else {
        (parent, parent_fitness, BranchResolution::Kept)
    }
}

/// How a finished branch was settled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchResolution {
    /// The branch ended at least as good as the saved parent and continues.
    Kept,
    /// The saved parent replaced the branch.
    Restored,
}
