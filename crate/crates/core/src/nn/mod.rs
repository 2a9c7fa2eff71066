//! Minimal CPU network engine: convolutional highway layers, pooling,
//! batch norm, dense layers, softmax cross-entropy and Adam.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod dense;
mod highway;
mod layers;
mod loss;
mod model;
mod pool;
mod real;
mod serialize;
mod tensor;
mod train;

#[cfg(test)]
mod gradcheck;

use thiserror::Error;

pub use activation::{activation_backward, activation_forward, Activation, PRELU_INIT};
pub use adam::{adam_step, AdamConfig, Param};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_inference, BatchNormCache, BN_EPSILON,
    BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry};
pub use dense::{dense_backward, dense_forward};
pub use highway::{highway_backward, highway_forward, HighwayCache, HighwayGrads, HighwayParams};
pub use layers::{
    ActivationLayer, BatchNormLayer, DenseLayer, HighwayLayer, Layer, MaxPoolLayer, Mode,
    ProjectionLayer,
};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_onehot};
pub use model::{
    build_network, kernel_schedule, Architecture, BuildOptions, Model, ModuleArch, TraceEntry,
    GATE_BIAS_INIT, KERNEL_MODE_FILTERS, STANDARD_LEARNING_RATE,
};
pub use pool::{maxpool_backward, maxpool_forward, pooled_dims};
pub use real::{matmul, Real};
pub use serialize::{load_model, read_model, save_model, write_model, SerializeError};
pub use tensor::Tensor;
pub use train::{evaluate, train, EvalMetrics, TrainConfig, TrainReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stale cache: {0}")]
    StaleCache(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<NnError>,
    },
}

impl NnError {
    pub fn at(index: usize, error: NnError) -> Self {
        NnError::Layer { index, source: Box::new(error) }
    }

    /// The innermost error, skipping layer wrappers.
    pub fn root(&self) -> &NnError {
        match self {
            NnError::Layer { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_non_finite(&self) -> bool {
        matches!(self.root(), NnError::NonFinite(_))
    }
}
