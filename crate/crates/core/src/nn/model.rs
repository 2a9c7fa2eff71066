use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::highway::HighwayParams;
use super::layers::{
    adam_update, ActivationLayer, BatchNormLayer, DenseLayer, HighwayLayer, Layer, MaxPoolLayer,
    Mode, ProjectionLayer,
};
use super::pool::pooled_dims;
use super::{Activation, NnError, Real, Tensor};
use crate::codec::NetworkSpec;

/// Initial transform-gate bias; negative values start layers near carry.
pub const GATE_BIAS_INIT: f64 = -2.0;

/// Filter count used when the evolved `{8,12,16,24}` value is read as a
/// spatial kernel size instead.
pub const KERNEL_MODE_FILTERS: usize = 16;

/// One module: stacked highway layers, then max pool and batch norm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleArch {
    /// Square kernel size of each highway layer.
    pub kernels: Vec<usize>,
    pub filters: usize,
    pub pool: usize,
}

/// Concrete layer plan a [`Model`] is built from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[channels, height, width]` of one sample.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub modules: Vec<ModuleArch>,
    pub highway_activation: Activation,
    pub dense_units: Vec<usize>,
    pub dense_activation: Activation,
}

/// Options that are not part of the genotype.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    /// Read the `filters` gene as the first spatial kernel size.
    pub filters_are_kernel_sizes: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            input_shape: [1, 28, 28],
            num_classes: 10,
            filters_are_kernel_sizes: false,
        }
    }
}

/// Kernel of highway layer `j` (0-based) in a module: 3, 2, 1, 1, ...
pub fn kernel_schedule(layers: usize) -> Vec<usize> {
    (0..layers).map(|j| 3usize.saturating_sub(j).max(1)).collect()
}

impl Architecture {
    pub fn from_spec(spec: &NetworkSpec, options: &BuildOptions) -> Self {
        let (filters, kernels) = if options.filters_are_kernel_sizes {
            let k0 = spec.filters;
            (
                KERNEL_MODE_FILTERS,
                (0..spec.layers_per_module).map(|j| (k0 >> j).max(1)).collect(),
            )
        } else {
            (spec.filters, kernel_schedule(spec.layers_per_module))
        };
        Self {
            input_shape: options.input_shape,
            num_classes: options.num_classes,
            modules: vec![
                ModuleArch { kernels, filters, pool: spec.pool_size };
                spec.num_modules
            ],
            highway_activation: spec.highway_activation,
            dense_units: vec![spec.dense1_units, spec.dense2_units],
            dense_activation: spec.dense_activation,
        }
    }

    /// Fixed reference network: three single-layer modules with kernels
    /// 3, 2, 1, 16 filters, pool 2, ReLU throughout, dense 128 and 256.
    pub fn standard() -> Self {
        Self {
            input_shape: [1, 28, 28],
            num_classes: 10,
            modules: [3, 2, 1]
                .iter()
                .map(|&k| ModuleArch { kernels: vec![k], filters: 16, pool: 2 })
                .collect(),
            highway_activation: Activation::Relu,
            dense_units: vec![128, 256],
            dense_activation: Activation::Relu,
        }
    }
}

/// Learning rate the reference network is trained with.
pub const STANDARD_LEARNING_RATE: f64 = 0.001;

/// Layer name and per-sample output shape after each layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub layer: String,
    pub output_shape: Vec<usize>,
}

fn xavier<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-limit..=limit)))
}

/// A feed-forward classifier: highway modules, flatten, dense layers, and a
/// linear head producing logits.
#[derive(Clone, Debug)]
pub struct Model<T> {
    architecture: Architecture,
    layers: Vec<Layer<T>>,
    trace: Vec<TraceEntry>,
    step: u64,
    adam: AdamConfig,
}

/// Builds the network a decoded genotype describes.
pub fn build_network<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    options: &BuildOptions,
    rng: &mut R,
) -> Result<Model<T>, NnError> {
    Model::from_architecture(Architecture::from_spec(spec, options), rng)
}

impl<T: Real> Model<T> {
    /// Allocates and initializes every layer of `arch`. Pools that would
    /// shrink a spatial dimension below 1 are left out.
    pub fn from_architecture<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, NnError> {
        let [mut channels, mut h, mut w] = arch.input_shape;
        if channels == 0 || h == 0 || w == 0 || arch.num_classes < 2 {
            return Err(NnError::Shape(format!(
                "invalid input {:?} / {} classes",
                arch.input_shape, arch.num_classes
            )));
        }
        let mut layers = Vec::new();
        let mut trace = Vec::new();
        let push = |layers: &mut Vec<Layer<T>>, trace: &mut Vec<TraceEntry>, layer: Layer<T>, shape: Vec<usize>| {
            trace.push(TraceEntry { layer: layer.name(), output_shape: shape });
            layers.push(layer);
        };
        for module in &arch.modules {
            let f = module.filters;
            if f == 0 || module.kernels.contains(&0) {
                return Err(NnError::Shape(format!("invalid module {module:?}")));
            }
            if channels != f {
                let weights = xavier(&[f, channels, 1, 1], channels, f, rng);
                let layer = Layer::Projection(ProjectionLayer::new(weights, Tensor::zeros(&[f])));
                push(&mut layers, &mut trace, layer, vec![f, h, w]);
                channels = f;
            }
            for &k in &module.kernels {
                let fan = f * k * k;
                let params = HighwayParams {
                    conv_weights: xavier(&[f, f, k, k], fan, fan, rng),
                    conv_bias: Tensor::zeros(&[f]),
                    gate_weights: xavier(&[f, f, k, k], fan, fan, rng),
                    gate_bias: Tensor::full(&[f], T::from_f64(GATE_BIAS_INIT)),
                    alpha: arch
                        .highway_activation
                        .has_parameters()
                        .then(|| Tensor::full(&[f], T::from_f64(super::activation::PRELU_INIT))),
                };
                let layer = Layer::Highway(HighwayLayer::new(params, arch.highway_activation));
                push(&mut layers, &mut trace, layer, vec![f, h, w]);
            }
            if module.pool > 1 {
                if let Some((oh, ow)) = pooled_dims(h, w, module.pool) {
                    (h, w) = (oh, ow);
                    push(&mut layers, &mut trace, Layer::MaxPool(MaxPoolLayer::new(module.pool)), vec![f, h, w]);
                }
            }
            push(&mut layers, &mut trace, Layer::BatchNorm(BatchNormLayer::new(f)), vec![f, h, w]);
        }
        let mut width = channels * h * w;
        push(&mut layers, &mut trace, Layer::Flatten(None), vec![width]);
        for &units in &arch.dense_units {
            let weights = xavier(&[width, units], width, units, rng);
            push(&mut layers, &mut trace, Layer::Dense(DenseLayer::new(weights, Tensor::zeros(&[units]))), vec![units]);
            push(
                &mut layers,
                &mut trace,
                Layer::Activation(ActivationLayer::new(arch.dense_activation, units)),
                vec![units],
            );
            width = units;
        }
        let c = arch.num_classes;
        let head = DenseLayer::new(xavier(&[width, c], width, c, rng), Tensor::zeros(&[c]));
        push(&mut layers, &mut trace, Layer::Dense(head), vec![c]);
        Ok(Self {
            architecture: arch,
            layers,
            trace,
            step: 0,
            adam: AdamConfig::default(),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn shape_trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.trace.last().expect("model has a head").output_shape
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn adam_steps(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_adam_steps(&mut self, steps: u64) {
        self.step = steps;
    }

    /// Returns logits `[batch, classes]`. Errors name the failing layer.
    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let expected = &self.architecture.input_shape;
        if x.shape().len() != 4 || x.shape()[1..] != expected[..] {
            return Err(NnError::Shape(format!(
                "model expects [batch, {}, {}, {}], got {:?}",
                expected[0],
                expected[1],
                expected[2],
                x.shape()
            )));
        }
        let mut h = x;
        for (index, layer) in self.layers.iter_mut().enumerate() {
            h = layer.forward(h, mode).map_err(|e| NnError::at(index, e))?;
            if cfg!(debug_assertions) && !h.all_finite() {
                return Err(NnError::at(index, NnError::NonFinite("activations".into())));
            }
        }
        Ok(h)
    }

    /// Back-propagates `grad_logits`, accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: Tensor<T>) -> Result<(), NnError> {
        let mut g = grad_logits;
        for (index, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.backward(g).map_err(|e| NnError::at(index, e))?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.for_each_param(|_, grad, _, _| grad.iter_mut().for_each(|g| *g = T::zero()));
        }
    }

    pub fn adam_step(&mut self, lr: f64) {
        self.step += 1;
        adam_update(&mut self.layers, &self.adam, self.step, lr);
    }

    /// Flat copy of every stored tensor, for exact comparisons.
    pub fn state_vector(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.state_tensors())
            .flat_map(|t| t.into_data())
            .collect()
    }
}
