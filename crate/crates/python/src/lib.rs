//! Python bindings: genotypes, the codec, the EA on benchmark or Python
//! fitness functions, summaries, experiments and trained networks.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hwevo::codec::{describe_layout, GENOTYPE_BITS};
use hwevo::fitness::{onemax_deficit, trap_deficit, FitnessError};
use hwevo::harness::{run_experiment as run_experiment_rs, summarize as summarize_rs, ExperimentConfig};
use hwevo::nn::{build_network, load_model, Activation, BuildOptions, Mode, Model, Tensor};
use hwevo::{EaConfig as CoreEaConfig, Fitness};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Bit string, written most significant field bit first.
#[pyclass(module = "hwevo", eq, hash, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Genotype(pub hwevo::Genotype);

#[pymethods]
impl Genotype {
    #[new]
    fn new(bits: &str) -> PyResult<Self> {
        bits.parse().map(Genotype).map_err(value_error)
    }

    #[staticmethod]
    #[pyo3(signature = (length = GENOTYPE_BITS, seed = 0))]
    fn random(length: usize, seed: u64) -> Self {
        Genotype(hwevo::Genotype::random(length, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    #[staticmethod]
    #[pyo3(signature = (value, length = GENOTYPE_BITS))]
    fn from_int(value: u64, length: usize) -> PyResult<Self> {
        if length > 64 || (length < 64 && value >> length != 0) {
            return Err(value_error(format!("{value} does not fit in {length} bits")));
        }
        Ok(Genotype(hwevo::Genotype::from_u64(value, length)))
    }

    fn to_int(&self) -> PyResult<u64> {
        if self.0.len() > 64 {
            return Err(value_error("genotype longer than 64 bits"));
        }
        Ok(self.0.to_u64())
    }

    #[getter]
    fn bits(&self) -> String {
        self.0.to_string()
    }

    fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    fn hamming_distance(&self, other: PyRef<'_, Genotype>) -> PyResult<usize> {
        if other.0.len() != self.0.len() {
            return Err(value_error("genotypes differ in length"));
        }
        Ok(self.0.hamming_distance(&other.0))
    }

    /// Copy with bit `index` flipped.
    fn flipped(&self, index: usize) -> PyResult<Self> {
        if index >= self.0.len() {
            return Err(value_error(format!("bit {index} out of range")));
        }
        let mut g = self.0.clone();
        g.flip(index);
        Ok(Genotype(g))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Genotype('{}')", self.0)
    }
}

/// Decoded network description.
#[pyclass(module = "hwevo", eq, get_all, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct NetworkSpec {
    num_modules: usize,
    layers_per_module: usize,
    filters: usize,
    pool_size: usize,
    highway_activation: String,
    dense_activation: String,
    dense1_units: usize,
    dense2_units: usize,
    learning_rate: f64,
}

impl From<hwevo::NetworkSpec> for NetworkSpec {
    fn from(s: hwevo::NetworkSpec) -> Self {
        Self {
            num_modules: s.num_modules,
            layers_per_module: s.layers_per_module,
            filters: s.filters,
            pool_size: s.pool_size,
            highway_activation: s.highway_activation.name().into(),
            dense_activation: s.dense_activation.name().into(),
            dense1_units: s.dense1_units,
            dense2_units: s.dense2_units,
            learning_rate: s.learning_rate,
        }
    }
}

impl NetworkSpec {
    fn to_core(&self) -> PyResult<hwevo::NetworkSpec> {
        let act = |name: &str| {
            Activation::from_name(name).ok_or_else(|| value_error(format!("unknown activation {name:?}")))
        };
        Ok(hwevo::NetworkSpec {
            num_modules: self.num_modules,
            layers_per_module: self.layers_per_module,
            filters: self.filters,
            pool_size: self.pool_size,
            highway_activation: act(&self.highway_activation)?,
            dense_activation: act(&self.dense_activation)?,
            dense1_units: self.dense1_units,
            dense2_units: self.dense2_units,
            learning_rate: self.learning_rate,
        })
    }
}

#[pymethods]
impl NetworkSpec {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(
        num_modules: usize,
        layers_per_module: usize,
        filters: usize,
        pool_size: usize,
        highway_activation: String,
        dense_activation: String,
        dense1_units: usize,
        dense2_units: usize,
        learning_rate: f64,
    ) -> PyResult<Self> {
        let spec = Self {
            num_modules,
            layers_per_module,
            filters,
            pool_size,
            highway_activation,
            dense_activation,
            dense1_units,
            dense2_units,
            learning_rate,
        };
        spec.to_core()?;
        Ok(spec)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.to_core()?).map_err(runtime_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "NetworkSpec(modules={}, layers={}, filters={}, pool={}, {}/{}, dense={}x{}, lr={})",
            self.num_modules,
            self.layers_per_module,
            self.filters,
            self.pool_size,
            self.highway_activation,
            self.dense_activation,
            self.dense1_units,
            self.dense2_units,
            self.learning_rate
        )
    }
}

#[pyfunction]
fn decode(genotype: PyRef<'_, Genotype>) -> PyResult<NetworkSpec> {
    hwevo::decode(&genotype.0).map(Into::into).map_err(value_error)
}

#[pyfunction]
fn encode(spec: PyRef<'_, NetworkSpec>) -> PyResult<Genotype> {
    hwevo::encode(&spec.to_core()?).map(Genotype).map_err(value_error)
}

/// Genotype field layout as JSON.
#[pyfunction]
fn layout() -> String {
    describe_layout().to_json_pretty()
}

/// EA parameters; `sigma0=None` means 1/N.
#[pyclass(module = "hwevo", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
pub struct EaConfig {
    genotype_len: usize,
    generations: usize,
    sigma0: Option<f64>,
    adapt_rate: bool,
    window: usize,
    tau: f64,
    eta: f64,
    kappa: usize,
}

impl EaConfig {
    fn to_core(&self) -> CoreEaConfig {
        CoreEaConfig {
            genotype_len: self.genotype_len,
            generations: self.generations,
            initial_sigma: self.sigma0,
            adapt_rate: self.adapt_rate,
            window: self.window,
            tau: self.tau,
            eta: self.eta,
            kappa: self.kappa,
        }
    }
}

#[pymethods]
impl EaConfig {
    #[new]
    #[pyo3(signature = (genotype_len = 20, generations = 30, sigma0 = None, adapt_rate = true, window = 10, tau = 0.5, eta = 0.1, kappa = 10))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        genotype_len: usize,
        generations: usize,
        sigma0: Option<f64>,
        adapt_rate: bool,
        window: usize,
        tau: f64,
        eta: f64,
        kappa: usize,
    ) -> PyResult<Self> {
        let cfg = Self { genotype_len, generations, sigma0, adapt_rate, window, tau, eta, kappa };
        cfg.to_core().validate().map_err(value_error)?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!("EaConfig({:?})", self.to_core())
    }
}

/// Adapter for a fitness given from Python: "onemax", "trap", or a callable
/// taking a `Genotype` and returning a float to minimize.
enum PyFitness<'py> {
    OneMax,
    Trap(usize),
    Callable { f: Bound<'py, PyAny>, error: Option<PyErr> },
}

impl<'py> PyFitness<'py> {
    fn new(fitness: &Bound<'py, PyAny>, block: usize) -> PyResult<Self> {
        if let Ok(name) = fitness.extract::<String>() {
            return match name.as_str() {
                "onemax" => Ok(PyFitness::OneMax),
                "trap" => Ok(PyFitness::Trap(block)),
                other => Err(value_error(format!("unknown benchmark {other:?}"))),
            };
        }
        if !fitness.is_callable() {
            return Err(value_error("fitness must be 'onemax', 'trap' or a callable"));
        }
        Ok(PyFitness::Callable { f: fitness.clone(), error: None })
    }

    /// Re-raises an exception thrown by the Python callable.
    fn take_error(&mut self) -> Option<PyErr> {
        match self {
            PyFitness::Callable { error, .. } => error.take(),
            _ => None,
        }
    }
}

impl Fitness for PyFitness<'_> {
    fn evaluate(&mut self, genotype: &hwevo::Genotype) -> Result<f64, FitnessError> {
        match self {
            PyFitness::OneMax => Ok(onemax_deficit(genotype)),
            PyFitness::Trap(block) => trap_deficit(genotype, *block),
            PyFitness::Callable { f, error } => {
                match f.call1((Genotype(genotype.clone()),)).and_then(|v| v.extract::<f64>().map_err(PyErr::from)) {
                    Ok(v) => Ok(v),
                    Err(e) => {
                        *error = Some(e);
                        Err(FitnessError::MissingEntry(genotype.to_string()))
                    }
                }
            }
        }
    }
}

fn history_dicts<'py>(py: Python<'py>, history: &hwevo::RunHistory) -> PyResult<Vec<Bound<'py, PyDict>>> {
    history
        .records()
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("generation", r.generation)?;
            d.set_item("eval_fitness", r.eval_fitness)?;
            d.set_item("parent_fitness", r.parent_fitness)?;
            d.set_item("best_fitness", r.best_fitness)?;
            d.set_item("sigma", r.sigma)?;
            d.set_item("niching_active", r.niching_active)?;
            d.set_item("genotype", r.genotype.to_string())?;
            Ok(d)
        })
        .collect()
}

/// Runs the EA for `config.generations` generations and returns a dict with
/// the best genotype, its fitness, the evaluation count and the history.
#[pyfunction]
#[pyo3(signature = (config, fitness, seed, block = 5))]
fn run_ea<'py>(
    py: Python<'py>,
    config: PyRef<'_, EaConfig>,
    fitness: &Bound<'py, PyAny>,
    seed: u64,
    block: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut f = PyFitness::new(fitness, block)?;
    let outcome = hwevo::run_ea(&config.to_core(), &mut f, seed);
    if let Some(e) = f.take_error() {
        return Err(e);
    }
    let (state, history) = outcome.map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("best", Genotype(state.best.clone()))?;
    d.set_item("best_fitness", state.best_fitness)?;
    d.set_item("parent", Genotype(state.parent.clone()))?;
    d.set_item("parent_fitness", state.parent_fitness)?;
    d.set_item("sigma", state.rate.sigma())?;
    d.set_item("evaluations", state.evaluations)?;
    d.set_item("history", history_dicts(py, &history)?)?;
    Ok(d)
}

/// Runs until the best fitness reaches `target`; returns the hitting
/// generation (or None) and the best fitness.
#[pyfunction]
#[pyo3(signature = (config, fitness, seed, target = 0.0, block = 5))]
fn run_until(
    config: PyRef<'_, EaConfig>,
    fitness: &Bound<'_, PyAny>,
    seed: u64,
    target: f64,
    block: usize,
) -> PyResult<(Option<usize>, f64)> {
    let mut f = PyFitness::new(fitness, block)?;
    let outcome = hwevo::evolution::run_until(&config.to_core(), &mut f, seed, target);
    if let Some(e) = f.take_error() {
        return Err(e);
    }
    let (state, hit) = outcome.map_err(value_error)?;
    Ok((hit, state.best_fitness))
}

/// `(min, mean, population std, max)` of the values.
#[pyfunction]
fn summarize(values: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let s = summarize_rs(&values).map_err(value_error)?;
    Ok((s.min, s.mean, s.std, s.max))
}

#[pyfunction]
fn median(values: Vec<f64>) -> Option<f64> {
    hwevo::harness::median(&values)
}

/// Runs a full experiment from a JSON config (same keys as the CLI config
/// file) and returns the report as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(value_error)?;
    let report = py
        .detach(|| run_experiment_rs(&cfg, &|_| {}))
        .map_err(runtime_error)?;
    serde_json::to_string(&report).map_err(runtime_error)
}

/// Default experiment configuration as JSON.
#[pyfunction]
fn default_experiment_config() -> PyResult<String> {
    serde_json::to_string_pretty(&ExperimentConfig::default()).map_err(runtime_error)
}

/// A network for `[channels, height, width]` inputs, in single precision.
#[pyclass(module = "hwevo", skip_from_py_object)]
pub struct Network {
    model: Model<f32>,
    genotype: Option<hwevo::Genotype>,
}

#[pymethods]
impl Network {
    /// Builds the untrained network a genotype describes for 28x28 inputs.
    #[staticmethod]
    #[pyo3(signature = (genotype, seed = 0, filters_are_kernel_sizes = false))]
    fn from_genotype(genotype: PyRef<'_, Genotype>, seed: u64, filters_are_kernel_sizes: bool) -> PyResult<Self> {
        let spec = hwevo::decode(&genotype.0).map_err(value_error)?;
        let options = BuildOptions { filters_are_kernel_sizes, ..BuildOptions::default() };
        let model = build_network(&spec, &options, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(value_error)?;
        Ok(Self { model, genotype: Some(genotype.0.clone()) })
    }

    /// Reads a model file written by the experiment harness.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (model, genotype) = load_model(&path).map_err(runtime_error)?;
        Ok(Self { model, genotype })
    }

    #[getter]
    fn genotype(&self) -> Option<Genotype> {
        self.genotype.clone().map(Genotype)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.model.param_count()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.model.architecture().input_shape.to_vec()
    }

    /// `(layer name, per-sample output shape)` for every layer.
    fn shape_trace(&self) -> Vec<(String, Vec<usize>)> {
        self.model
            .shape_trace()
            .iter()
            .map(|t| (t.layer.clone(), t.output_shape.clone()))
            .collect()
    }

    /// Logits for a flat list of `batch` samples in inference mode.
    fn predict(&mut self, py: Python<'_>, images: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f32>>> {
        let [c, h, w] = self.model.architecture().input_shape;
        let x = Tensor::new(vec![batch, c, h, w], images).map_err(value_error)?;
        let model = &mut self.model;
        let y = py.detach(|| model.forward(x, Mode::Eval)).map_err(runtime_error)?;
        let classes = y.shape()[1];
        Ok(y.data().chunks(classes).map(<[f32]>::to_vec).collect())
    }
}

#[pymodule(name = "hwevo")]
pub fn hwevo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GENOTYPE_BITS", GENOTYPE_BITS)?;
    m.add_class::<Genotype>()?;
    m.add_class::<NetworkSpec>()?;
    m.add_class::<EaConfig>()?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(layout, m)?)?;
    m.add_function(wrap_pyfunction!(run_ea, m)?)?;
    m.add_function(wrap_pyfunction!(run_until, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(median, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_experiment_config, m)?)?;
    Ok(())
}
