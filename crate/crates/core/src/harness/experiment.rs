use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{data_seed, run_seed, ExperimentConfig};
use super::summary::{median, render_table, summarize, write_summary_csv, SummaryRow};
use super::HarnessError;
use crate::codec::{decode, NetworkSpec};
use crate::data::{find_idx_pair, load_idx, stratified_split, subset, Dataset, SplitTag};
use crate::evolution::{run_ea, RunHistory};
use crate::fitness::{EvalStatus, FitnessData, NetworkFitness, TrainingConfig};
use crate::genotype::Genotype;
use crate::nn::{
    evaluate, save_model, train, Architecture, Model, TrainConfig, STANDARD_LEARNING_RATE,
};

/// Outcome of one EA repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub initial_genotype: Genotype,
    pub initial_fitness: f64,
    pub initial_test_accuracy: Option<f64>,
    pub best_genotype: Genotype,
    pub best_fitness: f64,
    pub best_validation_accuracy: Option<f64>,
    pub best_test_accuracy: Option<f64>,
    pub evaluations: usize,
    pub cache_hits: usize,
    pub failed_evaluations: usize,
    /// Every evaluation of the run failed.
    pub failed: bool,
    pub wall_time: f64,
}

impl RunResult {
    /// The best genotype has strictly lower validation loss than the
    /// run's initial network.
    pub fn beats_initial(&self) -> bool {
        !self.failed && self.best_fitness < self.initial_fitness
    }
}

/// Contents of `run_XX_best.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSpec {
    #[serde(flatten)]
    pub spec: NetworkSpec,
    pub genotype_bits: Genotype,
    pub seed: u64,
    pub training_seed: u64,
    pub fitness: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub seed: u64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub baseline: Option<BaselineResult>,
    pub runs: Vec<RunResult>,
    pub summary: SummaryRow,
    /// Seconds for all repetitions and the baseline.
    #[serde(default)]
    pub wall_time: f64,
}

/// Loads MNIST from `cfg.data_dir` and draws the stratified subsets: train
/// and validation from the training file, test from the test file.
pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<FitnessData, HarnessError> {
    let dir = &cfg.data_dir;
    let missing = |prefix: &str| {
        HarnessError::Config(format!(
            "no {prefix}-images-idx3-ubyte[.gz] / {prefix}-labels-idx1-ubyte[.gz] in {}",
            dir.display()
        ))
    };
    let (ti, tl) = find_idx_pair(dir, "train").ok_or_else(|| missing("train"))?;
    let (si, sl) = find_idx_pair(dir, "t10k").ok_or_else(|| missing("t10k"))?;
    let train_file = load_idx(&ti, &tl)?;
    let test_file = load_idx(&si, &sl)?;
    let seed = data_seed(cfg.seed);
    let pool = subset(&train_file, cfg.train_subset + cfg.val_subset, seed)?;
    let (train, validation) = stratified_split(&pool, cfg.val_subset, seed ^ 1)?;
    let mut test = subset(&test_file, cfg.test_subset, seed ^ 2)?;
    test.tag = SplitTag::Test;
    Ok(FitnessData { train: Arc::new(train), validation: Arc::new(validation), test: Some(Arc::new(test)) })
}

/// Reference network, adapted to the data's input shape and class count.
pub fn standard_architecture(data: &Dataset) -> Architecture {
    Architecture {
        input_shape: data.sample_shape,
        num_classes: data.num_classes,
        ..Architecture::standard()
    }
}

/// Trains the fixed reference network with the candidates' budget and
/// reports its test accuracy.
pub fn standard_network_baseline(
    data: &FitnessData,
    training: &TrainingConfig,
    seed: u64,
) -> Result<BaselineResult, HarnessError> {
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| HarnessError::Config("baseline needs a test split".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::<f32>::from_architecture(standard_architecture(&data.train), &mut rng)?;
    let cfg = TrainConfig {
        epochs: training.epochs,
        batch_size: training.batch_size,
        learning_rate: training.learning_rate_override.unwrap_or(STANDARD_LEARNING_RATE),
    };
    train(&mut model, &data.train, &cfg, &mut rng)?;
    let val = evaluate(&mut model, &data.validation, training.batch_size)?;
    let t = evaluate(&mut model, test, training.batch_size)?;
    Ok(BaselineResult {
        seed,
        validation_loss: val.loss,
        validation_accuracy: val.accuracy,
        test_accuracy: t.accuracy,
        param_count: model.param_count(),
    })
}

/// Executes repetition `run`, returning its result, history and the best
/// trained network.
pub fn run_single(
    cfg: &ExperimentConfig,
    data: &FitnessData,
    run: usize,
) -> Result<(RunResult, RunHistory, Option<Model<f32>>), HarnessError> {
    let start = Instant::now();
    let seed = run_seed(cfg.seed, run);
    let mut training = cfg.training_config();
    training.build.input_shape = data.train.sample_shape;
    training.build.num_classes = data.train.num_classes;
    let mut fitness = NetworkFitness::new(data.clone(), training, seed).keeping_models();
    let (state, history) = run_ea(&cfg.ea_config(), &mut fitness, seed)?;
    let log = fitness.log();
    let initial = log.first().expect("initial evaluation").clone();
    let failed_evaluations = log.iter().filter(|r| r.status == EvalStatus::Failed).count();
    let failed = failed_evaluations == log.len();
    let best_record = fitness.cached(&state.best).filter(|r| r.status == EvalStatus::Ok);
    let model = if failed { None } else { fitness.model(&state.best)? };
    let result = RunResult {
        run,
        seed,
        initial_genotype: initial.genotype.clone(),
        initial_fitness: initial.fitness,
        initial_test_accuracy: initial.test_accuracy,
        best_genotype: state.best.clone(),
        best_fitness: state.best_fitness,
        best_validation_accuracy: best_record.as_ref().map(|r| r.validation_accuracy),
        best_test_accuracy: best_record.as_ref().and_then(|r| r.test_accuracy),
        evaluations: state.evaluations,
        cache_hits: fitness.cache_hits(),
        failed_evaluations,
        failed,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((result, history, model))
}

/// Summary row over the runs of one variant. Statistics are only filled in
/// when every repetition produced a test accuracy.
pub fn summary_row(
    cfg: &ExperimentConfig,
    runs: &[RunResult],
    baseline: Option<&BaselineResult>,
) -> Result<SummaryRow, HarnessError> {
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.best_test_accuracy).collect();
    let inits: Vec<f64> = runs.iter().filter_map(|r| r.initial_test_accuracy).collect();
    let complete = finals.len() == runs.len() && !runs.is_empty();
    Ok(SummaryRow {
        variant: cfg.variant.name().to_string(),
        standard: baseline.map(|b| b.test_accuracy),
        median_init: median(&inits),
        stats: if complete { Some(summarize(&finals)?) } else { None },
        runs: runs.len(),
        failed_runs: runs.len() - finals.len(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn run_file(dir: &Path, run: usize, suffix: &str) -> PathBuf {
    dir.join(format!("run_{run:02}_{suffix}"))
}

/// Runs every repetition (in parallel on `cfg.threads` workers), trains the
/// reference network, and writes all artifacts to `cfg.out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let data = load_experiment_data(cfg)?;
    run_experiment_with_data(cfg, &data, progress)
}

/// [`run_experiment`] on already loaded splits.
pub fn run_experiment_with_data(
    cfg: &ExperimentConfig,
    data: &FitnessData,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write_json(&out.join("config.json"), cfg)?;
    progress(&format!(
        "{} variant: {} runs x {} generations on {}/{}/{} samples",
        cfg.variant,
        cfg.repetitions,
        cfg.generations,
        data.train.len(),
        data.validation.len(),
        data.test.as_ref().map_or(0, |t| t.len())
    ));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcomes: Vec<Result<RunResult, HarnessError>> = pool.install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|run| {
                let (result, history, model) = run_single(cfg, data, run)?;
                let csv_path = run_file(out, run, "history.csv");
                let file = fs::File::create(&csv_path).map_err(|e| HarnessError::io(&csv_path, e))?;
                history.write_csv(file)?;
                if !result.failed {
                    let best = BestSpec {
                        spec: decode(&result.best_genotype)?,
                        genotype_bits: result.best_genotype.clone(),
                        seed: result.seed,
                        training_seed: crate::fitness::training_seed(result.seed, &result.best_genotype),
                        fitness: result.best_fitness,
                        validation_accuracy: result.best_validation_accuracy,
                        test_accuracy: result.best_test_accuracy,
                    };
                    write_json(&run_file(out, run, "best.json"), &best)?;
                }
                if let Some(m) = model {
                    save_model(&m, Some(&result.best_genotype), &run_file(out, run, "best.hwev"))?;
                }
                progress(&format!(
                    "run {run}: best {} loss {:.4} test acc {} (initial {:.4}) in {:.0}s",
                    result.best_genotype,
                    result.best_fitness,
                    result.best_test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
                    result.initial_fitness,
                    result.wall_time
                ));
                Ok(result)
            })
            .collect()
    });
    let runs = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let baseline = if cfg.skip_baseline {
        None
    } else {
        let b = standard_network_baseline(data, &cfg.training_config(), run_seed(cfg.seed, usize::MAX))?;
        progress(&format!("standard network: test accuracy {:.4}", b.test_accuracy));
        write_json(&out.join("baseline.json"), &b)?;
        Some(b)
    };

    let summary = summary_row(cfg, &runs, baseline.as_ref())?;
    let csv_path = out.join("summary.csv");
    let file = fs::File::create(&csv_path).map_err(|e| HarnessError::io(&csv_path, e))?;
    write_summary_csv(std::slice::from_ref(&summary), file)?;
    let mut text = render_table(std::slice::from_ref(&summary));
    text.push_str(
        "\nFitness is validation cross-entropy; test accuracy is only reported.\n\
         median init = median test accuracy of the runs' initial networks.\n",
    );
    fs::write(out.join("summary.txt"), &text).map_err(|e| HarnessError::io(out, e))?;
    let report = ExperimentReport {
        config: cfg.clone(),
        baseline,
        runs,
        summary,
        wall_time: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Reads `report.json` from an output directory.
pub fn load_report(dir: &Path) -> Result<ExperimentReport, HarnessError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
