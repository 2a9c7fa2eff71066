//! Neuroevolution of convolutional highway networks with a (1+1)-EA.
//!
//! A 20-bit [`Genotype`] decodes ([`codec`]) to a network specification, which
//! [`nn`] builds and trains on MNIST ([`data`]). The [`evolution`] module
//! searches genotypes with Rechenberg rate control and a niching branch;
//! [`harness`] runs repeated experiments and summarizes them.

pub mod codec;
pub mod data;
pub mod evolution;
pub mod fitness;
pub mod genotype;
pub mod harness;
pub mod nn;

pub use codec::{decode, encode, NetworkSpec};
pub use evolution::{run_ea, EaConfig, EaError, EaState, RunHistory};
pub use fitness::{Fitness, FitnessError};
pub use genotype::Genotype;
