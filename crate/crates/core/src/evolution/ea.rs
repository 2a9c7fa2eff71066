use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::history::{GenerationRecord, RunHistory};
use super::mutation::{mutate, MutationRate, RateBounds};
use super::niching::{resolve, BranchResolution, NichingState};
use super::rechenberg::{rechenberg_update, RechenbergState};
use super::EaError;
use crate::fitness::{Fitness, FAILED_FITNESS};
use crate::genotype::Genotype;

/// Parameters of one (1+1)-EA run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaConfig {
    pub genotype_len: usize,
    /// Generations after the initial evaluation.
    pub generations: usize,
    /// Starting flip probability; `None` means `1/N`.
    pub initial_sigma: Option<f64>,
    /// Enables the one-fifth success rule.
    pub adapt_rate: bool,
    pub window: usize,
    pub tau: f64,
    /// Probability of following a worse child; 0 disables niching.
    pub eta: f64,
    pub kappa: usize,
}

impl Default for EaConfig {
    fn default() -> Self {
        Self {
            genotype_len: 20,
            generations: 30,
            initial_sigma: None,
            adapt_rate: true,
            window: 10,
            tau: 0.5,
            eta: 0.1,
            kappa: 10,
        }
    }
}

impl EaConfig {
    /// Constant rate, no niching.
    pub fn simple(genotype_len: usize, generations: usize) -> Self {
        Self {
            genotype_len,
            generations,
            adapt_rate: false,
            eta: 0.0,
            ..Self::default()
        }
    }

    pub fn sigma0(&self) -> f64 {
        self.initial_sigma
            .unwrap_or(1.0 / self.genotype_len as f64)
    }

    pub fn bounds(&self) -> RateBounds {
        RateBounds::for_length(self.genotype_len)
    }

    pub fn validate(&self) -> Result<(), EaError> {
        let invalid = |msg: String| Err(EaError::InvalidConfig(msg));
        if self.genotype_len < 2 {
            return invalid(format!("genotype length {} < 2", self.genotype_len));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return invalid(format!("eta {} outside [0, 1]", self.eta));
        }
        if self.eta > 0.0 && self.kappa == 0 {
            return invalid("kappa must be positive when niching is enabled".into());
        }
        let sigma = self.sigma0();
        if !(sigma > 0.0 && sigma <= 0.5) {
            return invalid(format!("initial sigma {sigma} outside (0, 0.5]"));
        }
        if self.adapt_rate {
            if self.window == 0 {
                return invalid("Rechenberg window must be positive".into());
            }
            if !(self.tau > 0.0 && self.tau < 1.0) {
                return invalid(format!("tau {} outside (0, 1)", self.tau));
            }
        }
        Ok(())
    }
}

/// What happened to the child of one generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    /// Child at least as good as the parent replaced it.
    Accepted,
    /// Worse child followed as a new niching branch.
    BranchStarted,
    Rejected,
}

/// Full search state between generations.
#[derive(Clone, Debug)]
pub struct EaState {
    config: EaConfig,
    pub parent: Genotype,
    pub parent_fitness: f64,
    pub rate: MutationRate,
    pub rechenberg: RechenbergState,
    pub niching: NichingState,
    pub generation: usize,
    pub best: Genotype,
    pub best_fitness: f64,
    pub evaluations: usize,
    /// Resolution of the most recent branch, if any ended.
    pub last_resolution: Option<BranchResolution>,
    rng: ChaCha8Rng,
}

fn score<F: Fitness + ?Sized>(fitness: &mut F, genotype: &Genotype) -> Result<f64, EaError> {
    match fitness.evaluate(genotype) {
        Ok(v) if v.is_nan() => Ok(FAILED_FITNESS),
        Ok(v) => Ok(v),
        Err(e) if e.is_recoverable() => Ok(FAILED_FITNESS),
        Err(e) => Err(EaError::Fitness(e)),
    }
}

impl EaState {
    /// Draws a uniformly random parent from the seeded stream and evaluates it.
    pub fn initialize<F: Fitness + ?Sized>(
        config: EaConfig,
        fitness: &mut F,
        seed: u64,
        history: &mut RunHistory,
    ) -> Result<Self, EaError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parent = Genotype::random(config.genotype_len, &mut rng);
        Self::start(config, parent, fitness, rng, history)
    }

    /// Starts from a given parent instead of a random one.
    pub fn with_parent<F: Fitness + ?Sized>(
        config: EaConfig,
        parent: Genotype,
        fitness: &mut F,
        seed: u64,
        history: &mut RunHistory,
    ) -> Result<Self, EaError> {
        config.validate()?;
        Self::start(config, parent, fitness, ChaCha8Rng::seed_from_u64(seed), history)
    }

    fn start<F: Fitness + ?Sized>(
        config: EaConfig,
        parent: Genotype,
        fitness: &mut F,
        rng: ChaCha8Rng,
        history: &mut RunHistory,
    ) -> Result<Self, EaError> {
        if parent.len() != config.genotype_len {
            return Err(EaError::GenotypeLength {
                expected: config.genotype_len,
                found: parent.len(),
            });
        }
        let parent_fitness = score(fitness, &parent)?;
        let rate = MutationRate::new(config.sigma0()).expect("validated sigma");
        let state = Self {
            rechenberg: RechenbergState::new(config.window, config.tau),
            niching: NichingState::new(config.eta, config.kappa),
            best: parent.clone(),
            best_fitness: parent_fitness,
            parent,
            parent_fitness,
            rate,
            generation: 0,
            evaluations: 1,
            last_resolution: None,
            rng,
            config,
        };
        history.push(state.record(&state.parent.clone(), parent_fitness));
        Ok(state)
    }

    pub fn config(&self) -> &EaConfig {
        &self.config
    }

    fn record(&self, evaluated: &Genotype, eval_fitness: f64) -> GenerationRecord {
        GenerationRecord {
            generation: self.generation,
            eval_fitness,
            parent_fitness: self.parent_fitness,
            best_fitness: self.best_fitness,
            sigma: self.rate.sigma(),
            niching_active: self.niching.is_active(),
            genotype: evaluated.clone(),
        }
    }

    /// One generation: mutate the parent, then select.
    pub fn step<F: Fitness + ?Sized>(
        &mut self,
        fitness: &mut F,
        history: &mut RunHistory,
    ) -> Result<StepOutcome, EaError> {
        let child = mutate(&self.parent, self.rate, &mut self.rng);
        self.step_with_child(child, fitness, history)
    }

    /// Selection half of a generation with an externally supplied child.
    ///
    /// The child is accepted when its fitness is no worse than the parent's.
    /// Otherwise, if no branch is running, it is followed with probability
    /// eta as a niching branch of `kappa` generations. Rate adaptation counts
    /// only the first case as a success. A branch that runs out is settled by
    /// keeping whichever of the branch parent and the saved parent is better.
    pub fn step_with_child<F: Fitness + ?Sized>(
        &mut self,
        child: Genotype,
        fitness: &mut F,
        history: &mut RunHistory,
    ) -> Result<StepOutcome, EaError> {
        if child.len() != self.config.genotype_len {
            return Err(EaError::GenotypeLength {
                expected: self.config.genotype_len,
                found: child.len(),
            });
        }
        let child_fitness = score(fitness, &child)?;
        self.evaluations += 1;
        self.last_resolution = None;
        let branch_was_active = self.niching.is_active();

        let outcome = if child_fitness.is_finite() && child_fitness <= self.parent_fitness {
            self.parent = child.clone();
            self.parent_fitness = child_fitness;
            StepOutcome::Accepted
        } else if !branch_was_active
            && child_fitness.is_finite()
            && self.niching.eta > 0.0
            && self.rng.gen_bool(self.niching.eta)
        {
            let saved = std::mem::replace(&mut self.parent, child.clone());
            self.niching.start(saved, self.parent_fitness);
            self.parent_fitness = child_fitness;
            StepOutcome::BranchStarted
        } else {
            StepOutcome::Rejected
        };

        if self.config.adapt_rate {
            (self.rechenberg, self.rate) = rechenberg_update(
                self.rechenberg,
                self.rate,
                outcome == StepOutcome::Accepted,
                self.config.bounds(),
            );
        }

        if branch_was_active {
            if let Some(branch) = self.niching.tick() {
                self.settle(branch);
            }
        }

        self.generation += 1;
        if self.parent_fitness < self.best_fitness {
            self.best = self.parent.clone();
            self.best_fitness = self.parent_fitness;
        }
        history.push(self.record(&child, child_fitness));
        Ok(outcome)
    }

    fn settle(&mut self, branch: super::niching::NichingBranch) {
        let parent = std::mem::replace(&mut self.parent, Genotype::zeros(0));
        let (parent, fitness, resolution) = resolve(branch, parent, self.parent_fitness);
        self.parent = parent;
        self.parent_fitness = fitness;
        self.last_resolution = Some(resolution);
    }

    /// Settles a branch that is still running; used at the end of a budget.
    pub fn finish(&mut self) -> Option<BranchResolution> {
        let branch = self.niching.take()?;
        self.settle(branch);
        self.last_resolution
    }
}

/// Runs the EA from a random parent for `config.generations` generations.
pub fn run_ea<F: Fitness + ?Sized>(
    config: &EaConfig,
    fitness: &mut F,
    seed: u64,
) -> Result<(EaState, RunHistory), EaError> {
    let mut history = RunHistory::default();
    let mut state = EaState::initialize(config.clone(), fitness, seed, &mut history)?;
    for _ in 0..config.generations {
        state.step(fitness, &mut history)?;
    }
    state.finish();
    Ok((state, history))
}

/// Like [`run_ea`] but stops early once `target` fitness is reached.
/// Returns the generation at which the target was first hit.
pub fn run_until<F: Fitness + ?Sized>(
    config: &EaConfig,
    fitness: &mut F,
    seed: u64,
    target: f64,
) -> Result<(EaState, Option<usize>), EaError> {
    let mut history = RunHistory::discarding();
    let mut state = EaState::initialize(config.clone(), fitness, seed, &mut history)?;
    if state.best_fitness <= target {
        return Ok((state, Some(0)));
    }
    for _ in 0..config.generations {
        state.step(fitness, &mut history)?;
        if state.best_fitness <= target {
            let generation = state.generation;
            return Ok((state, Some(generation)));
        }
    }
    state.finish();
    Ok((state, None))
}
