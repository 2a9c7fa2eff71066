use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Fitness, FitnessError, FAILED_FITNESS};
use crate::codec::{decode, CodecError, GENOTYPE_BITS};
use crate::data::Dataset;
use crate::genotype::Genotype;
use crate::nn::{build_network, evaluate, train, BuildOptions, Model, TrainConfig};

/// Everything besides the genotype and seed that affects a trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub build: BuildOptions,
    /// Replaces the evolved learning rate when set.
    pub learning_rate_override: Option<f64>,
    /// Also score the test split (reporting only, never used as fitness).
    pub evaluate_test: bool,
    /// Worker threads the caller runs with; part of the cache key so
    /// results are only shared between identical setups.
    pub threads: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            build: BuildOptions::default(),
            learning_rate_override: None,
            evaluate_test: true,
            threads: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub genotype: Genotype,
    /// Validation cross-entropy, or [`FAILED_FITNESS`].
    pub fitness: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Seed the network was initialized and trained with.
    pub training_seed: u64,
    pub wall_time: f64,
    pub status: EvalStatus,
    pub error: Option<String>,
}

/// Train, validation and optional test splits shared between evaluations.
#[derive(Clone, Debug)]
pub struct FitnessData {
    pub train: Arc<Dataset>,
    pub validation: Arc<Dataset>,
    pub test: Option<Arc<Dataset>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub genotype: Genotype,
    pub seed: u64,
    config: String,
}

impl CacheKey {
    pub fn new(genotype: &Genotype, seed: u64, config: &TrainingConfig) -> Self {
        Self {
            genotype: genotype.clone(),
            seed,
            config: serde_json::to_string(config).expect("config serializes"),
        }
    }
}

/// Seed for one genotype's network, so each candidate gets its own
/// initialization while staying reproducible.
pub fn training_seed(run_seed: u64, genotype: &Genotype) -> u64 {
    let mut z = run_seed ^ genotype.to_u64().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds and trains the network `genotype` describes, with the same seeded
/// stream driving initialization and batch order.
pub fn train_genotype(
    genotype: &Genotype,
    data: &FitnessData,
    config: &TrainingConfig,
    seed: u64,
) -> Result<Result<Model<f32>, String>, FitnessError> {
    let spec = decode(genotype).map_err(|e| match e {
        CodecError::Length { found, .. } => FitnessError::InvalidGenotype {
            expected: format!("{GENOTYPE_BITS} bits"),
            found,
        },
        other => FitnessError::InvalidGenotype { expected: other.to_string(), found: genotype.len() },
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(training_seed(seed, genotype));
    let mut model = match build_network::<f32, _>(&spec, &config.build, &mut rng) {
        Ok(m) => m,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let train_cfg = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate_override.unwrap_or(spec.learning_rate),
    };
    Ok(train(&mut model, &data.train, &train_cfg, &mut rng).map(|_| model).map_err(|e| e.to_string()))
}

/// Decode, build, train, and score on the validation split. Training
/// failures produce a `Failed` record; only an undecodable genotype is an
/// error.
pub fn network_fitness(
    genotype: &Genotype,
    data: &FitnessData,
    config: &TrainingConfig,
    seed: u64,
) -> Result<FitnessRecord, FitnessError> {
    evaluate_genotype(genotype, data, config, seed).map(|(record, _)| record)
}

/// [`network_fitness`] that also hands back the trained network.
pub fn evaluate_genotype(
    genotype: &Genotype,
    data: &FitnessData,
    config: &TrainingConfig,
    seed: u64,
) -> Result<(FitnessRecord, Option<Model<f32>>), FitnessError> {
    let start = Instant::now();
    let failed = |msg: String| {
        let record = FitnessRecord {
            genotype: genotype.clone(),
            fitness: FAILED_FITNESS,
            validation_accuracy: 0.0,
            test_accuracy: None,
            training_seed: training_seed(seed, genotype),
            wall_time: start.elapsed().as_secs_f64(),
            status: EvalStatus::Failed,
            error: Some(msg),
        };
        Ok((record, None))
    };
    let mut model = match train_genotype(genotype, data, config, seed)? {
        Ok(m) => m,
        Err(msg) => return failed(msg),
    };
    let batch = config.batch_size.max(1);
    let val = match evaluate(&mut model, &data.validation, batch) {
        Ok(v) if v.loss.is_finite() => v,
        Ok(_) => return failed("non-finite validation loss".into()),
        Err(e) => return failed(e.to_string()),
    };
    let test_accuracy = match (&data.test, config.evaluate_test) {
        (Some(test), true) => match evaluate(&mut model, test, batch) {
            Ok(m) => Some(m.accuracy),
            Err(e) => return failed(e.to_string()),
        },
        _ => None,
    };
    let record = FitnessRecord {
        genotype: genotype.clone(),
        fitness: val.loss,
        validation_accuracy: val.accuracy,
        test_accuracy,
        training_seed: training_seed(seed, genotype),
        wall_time: start.elapsed().as_secs_f64(),
        status: EvalStatus::Ok,
        error: None,
    };
    Ok((record, Some(model)))
}

pub type FitnessCache = Arc<Mutex<HashMap<CacheKey, FitnessRecord>>>;

/// [`network_fitness`] behind a cache, usable directly as an EA objective.
/// Every call (hit or miss) is appended to [`NetworkFitness::log`].
#[derive(Clone, Debug)]
pub struct NetworkFitness {
    data: FitnessData,
    config: TrainingConfig,
    seed: u64,
    cache: FitnessCache,
    log: Vec<FitnessRecord>,
    hits: usize,
    keep_models: bool,
    models: HashMap<Genotype, Model<f32>>,
}

impl NetworkFitness {
    pub fn new(data: FitnessData, config: TrainingConfig, seed: u64) -> Self {
        Self::with_cache(data, config, seed, FitnessCache::default())
    }

    pub fn with_cache(data: FitnessData, config: TrainingConfig, seed: u64, cache: FitnessCache) -> Self {
        Self {
            data,
            config,
            seed,
            cache,
            log: Vec::new(),
            hits: 0,
            keep_models: false,
            models: HashMap::new(),
        }
    }

    /// Retain every trained network so the best one can be saved later.
    pub fn keeping_models(mut self) -> Self {
        self.keep_models = true;
        self
    }

    /// Trained network for `genotype`: the retained one if available,
    /// otherwise retrained deterministically.
    pub fn model(&mut self, genotype: &Genotype) -> Result<Option<Model<f32>>, FitnessError> {
        if let Some(m) = self.models.get(genotype) {
            return Ok(Some(m.clone()));
        }
        Ok(train_genotype(genotype, &self.data, &self.config, self.seed)?.ok())
    }

    pub fn record(&mut self, genotype: &Genotype) -> Result<FitnessRecord, FitnessError> {
        let key = CacheKey::new(genotype, self.seed, &self.config);
        let cached = self.cache.lock().expect("cache poisoned").get(&key).cloned();
        let record = match cached {
            Some(r) => {
                self.hits += 1;
                r
            }
            None => {
                let (r, model) = evaluate_genotype(genotype, &self.data, &self.config, self.seed)?;
                if let (true, Some(m)) = (self.keep_models, model) {
                    self.models.insert(genotype.clone(), m);
                }
                self.cache.lock().expect("cache poisoned").insert(key, r.clone());
                r
            }
        };
        self.log.push(record.clone());
        Ok(record)
    }

    pub fn log(&self) -> &[FitnessRecord] {
        &self.log
    }

    pub fn cache_hits(&self) -> usize {
        self.hits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    /// Looks up a genotype already evaluated with this seed and config.
    pub fn cached(&self, genotype: &Genotype) -> Option<FitnessRecord> {
        let key = CacheKey::new(genotype, self.seed, &self.config);
        self.cache.lock().expect("cache poisoned").get(&key).cloned()
    }
}

impl Fitness for NetworkFitness {
    fn evaluate(&mut self, genotype: &Genotype) -> Result<f64, FitnessError> {
        let record = self.record(genotype)?;
        match record.status {
            EvalStatus::Ok => Ok(record.fitness),
            EvalStatus::Failed => Err(FitnessError::Failed(record.error.unwrap_or_default())),
        }
    }
}
