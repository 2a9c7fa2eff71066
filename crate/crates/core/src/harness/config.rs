use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codec::GENOTYPE_BITS;
use crate::evolution::EaConfig;
use crate::fitness::TrainingConfig;
use crate::nn::BuildOptions;

/// EA variants, each adding one mechanism to the previous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Constant mutation rate, no niching.
    Simple,
    /// Adds Rechenberg rate control.
    Rechenberg,
    /// Adds the niching branch.
    Niching,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Simple, Variant::Rechenberg, Variant::Niching];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Simple => "simple",
            Variant::Rechenberg => "rechenberg",
            Variant::Niching => "niching",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?} (simple, rechenberg, niching)"))
    }
}

/// Full description of one experiment. Every field can come from a JSON
/// file; missing fields take the desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub generations: usize,
    pub repetitions: usize,
    /// Master seed; run `i` and the data split derive their seeds from it.
    pub seed: u64,
    /// Rechenberg window length G.
    pub window: usize,
    pub tau: f64,
    pub eta: f64,
    pub kappa: usize,
    /// Initial mutation rate; `None` means 1/N.
    pub sigma0: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate_override: Option<f64>,
    pub data_dir: PathBuf,
    pub train_subset: usize,
    pub val_subset: usize,
    pub test_subset: usize,
    pub out_dir: PathBuf,
    /// Runs executed in parallel. Results do not depend on it.
    pub threads: usize,
    pub filters_are_kernel_sizes: bool,
    /// Skip training the fixed reference network.
    pub skip_baseline: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Niching,
            generations: 10,
            repetitions: 5,
            seed: 2017,
            window: 10,
            tau: 0.5,
            eta: 0.1,
            kappa: 10,
            sigma0: None,
            epochs: 3,
            batch_size: 128,
            learning_rate_override: None,
            data_dir: PathBuf::from("data/mnist"),
            train_subset: 5_000,
            val_subset: 1_000,
            test_subset: 1_000,
            out_dir: PathBuf::from("runs"),
            threads: 1,
            filters_are_kernel_sizes: false,
            skip_baseline: false,
        }
    }
}

impl ExperimentConfig {
    /// Full-size protocol: 55k/5k/10k images, 30 generations, 5 epochs,
    /// 10 repetitions.
    pub fn paper_scale(mut self) -> Self {
        self.train_subset = 55_000;
        self.val_subset = 5_000;
        self.test_subset = 10_000;
        self.generations = 30;
        self.epochs = 5;
        self.repetitions = 10;
        self
    }

    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// EA settings implied by the variant: `simple` keeps σ fixed and
    /// `rechenberg` disables niching.
    pub fn ea_config(&self) -> EaConfig {
        let adapt = self.variant != Variant::Simple;
        EaConfig {
            genotype_len: GENOTYPE_BITS,
            generations: self.generations,
            initial_sigma: self.sigma0,
            adapt_rate: adapt,
            window: self.window,
            tau: self.tau,
            eta: if self.variant == Variant::Niching { self.eta } else { 0.0 },
            kappa: self.kappa,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            build: BuildOptions {
                filters_are_kernel_sizes: self.filters_are_kernel_sizes,
                ..BuildOptions::default()
            },
            learning_rate_override: self.learning_rate_override,
            evaluate_test: true,
            threads: self.threads,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.train_subset == 0 || self.val_subset == 0 || self.test_subset == 0 {
            return bad("subset sizes must be positive");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if let Some(lr) = self.learning_rate_override {
            if !(lr.is_finite() && lr > 0.0) {
                return bad("learning rate override must be positive");
            }
        }
        self.ea_config().validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Seed of repetition `run` (splitmix64 of the master seed and index).
pub fn run_seed(master: u64, run: usize) -> u64 {
    let mut z = master.wrapping_add((run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used to draw the data subsets and the validation split.
pub fn data_seed(master: u64) -> u64 {
    run_seed(master ^ 0xDA7A, usize::MAX - 1)
}
