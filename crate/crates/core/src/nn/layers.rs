//! Stateful layers wrapping the functional kernels: each keeps its parameters,
//! gradient accumulators, Adam moments and the cache of its last
//! training-mode forward pass.

use super::activation::{activation_backward, activation_forward};
use super::adam::{adam_step, AdamConfig, Param};
use super::batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_inference, BatchNormCache, BN_EPSILON,
    BN_MOMENTUM,
};
use super::conv::{conv2d_backward, conv2d_forward};
use super::dense::{dense_backward, dense_forward};
use super::highway::{highway_backward, highway_forward, HighwayCache, HighwayGrads, HighwayParams};
use super::pool::{maxpool_backward, maxpool_forward};
use super::{Activation, NnError, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn stale(layer: &str) -> NnError {
    NnError::StaleCache(format!("{layer}: backward without a training-mode forward"))
}

/// Learnable 1×1 convolution matching channel counts at module entry.
#[derive(Clone, Debug)]
pub struct ProjectionLayer<T> {
    pub weights: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> ProjectionLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Self {
        Self { weights: Param::new(weights), bias: Param::new(bias), cache: None }
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let y = conv2d_forward(&x, &self.weights.value, &self.bias.value)?;
        if mode == Mode::Train {
            self.cache = Some(x);
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.cache.take().ok_or_else(|| stale("projection"))?;
        let (gx, gw, gb) = conv2d_backward(grad, &x, &self.weights.value)?;
        self.weights.accumulate(gw.data());
        self.bias.accumulate(gb.data());
        Ok(gx)
    }
}

#[derive(Clone, Debug)]
pub struct HighwayLayer<T> {
    pub params: HighwayParams<T>,
    pub activation: Activation,
    grads: HighwayGrads<T>,
    moments: Vec<(Vec<T>, Vec<T>)>,
    cache: Option<HighwayCache<T>>,
}

impl<T: Real> HighwayLayer<T> {
    pub fn new(params: HighwayParams<T>, activation: Activation) -> Self {
        let zeros = |t: &Tensor<T>| Tensor::zeros(t.shape());
        let grads = HighwayGrads {
            conv_weights: zeros(&params.conv_weights),
            conv_bias: zeros(&params.conv_bias),
            gate_weights: zeros(&params.gate_weights),
            gate_bias: zeros(&params.gate_bias),
            alpha: params.alpha.as_ref().map(zeros),
        };
        let mut layer = Self { params, activation, grads, moments: Vec::new(), cache: None };
        layer.moments = layer
            .values()
            .iter()
            .map(|t| (vec![T::zero(); t.len()], vec![T::zero(); t.len()]))
            .collect();
        layer
    }

    fn values(&self) -> Vec<&Tensor<T>> {
        let p = &self.params;
        let mut v = vec![&p.conv_weights, &p.conv_bias, &p.gate_weights, &p.gate_bias];
        v.extend(p.alpha.as_ref());
        v
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let (y, cache) = highway_forward(x, &self.params, self.activation)?;
        if mode == Mode::Train {
            self.cache = Some(cache);
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or_else(|| stale("highway"))?;
        let (gx, g) = highway_backward(grad, &cache, &self.params, self.activation)?;
        let add = |acc: &mut Tensor<T>, d: &Tensor<T>| {
            for (a, &b) in acc.data_mut().iter_mut().zip(d.data()) {
                *a += b;
            }
        };
        add(&mut self.grads.conv_weights, &g.conv_weights);
        add(&mut self.grads.conv_bias, &g.conv_bias);
        add(&mut self.grads.gate_weights, &g.gate_weights);
        add(&mut self.grads.gate_bias, &g.gate_bias);
        if let (Some(acc), Some(d)) = (self.grads.alpha.as_mut(), g.alpha.as_ref()) {
            add(acc, d);
        }
        Ok(gx)
    }

    fn for_each_param(&mut self, mut f: impl FnMut(&mut [T], &mut [T], &mut Vec<T>, &mut Vec<T>)) {
        let p = &mut self.params;
        let g = &mut self.grads;
        let mut pairs: Vec<(&mut Tensor<T>, &mut Tensor<T>)> = vec![
            (&mut p.conv_weights, &mut g.conv_weights),
            (&mut p.conv_bias, &mut g.conv_bias),
            (&mut p.gate_weights, &mut g.gate_weights),
            (&mut p.gate_bias, &mut g.gate_bias),
        ];
        if let (Some(a), Some(ga)) = (p.alpha.as_mut(), g.alpha.as_mut()) {
            pairs.push((a, ga));
        }
        for ((value, grad), (m, v)) in pairs.into_iter().zip(self.moments.iter_mut()) {
            f(value.data_mut(), grad.data_mut(), m, v);
        }
    }
}

#[derive(Clone, Debug)]
pub struct MaxPoolLayer {
    pub size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPoolLayer {
    pub fn new(size: usize) -> Self {
        Self { size, cache: None }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormLayer<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Real> BatchNormLayer<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        match mode {
            Mode::Eval => batchnorm_inference(
                &x,
                self.gamma.value.data(),
                self.beta.value.data(),
                &self.running_mean,
                &self.running_var,
                BN_EPSILON,
            ),
            Mode::Train => {
                let (y, cache, mean, var) =
                    batchnorm_forward(&x, self.gamma.value.data(), self.beta.value.data(), BN_EPSILON)?;
                let mom = T::from_f64(BN_MOMENTUM);
                let rest = T::one() - mom;
                for (r, m) in self.running_mean.iter_mut().zip(&mean) {
                    *r = mom * *r + rest * T::from_f64(*m);
                }
                for (r, v) in self.running_var.iter_mut().zip(&var) {
                    *r = mom * *r + rest * T::from_f64(*v);
                }
                self.cache = Some(cache);
                Ok(y)
            }
        }
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or_else(|| stale("batchnorm"))?;
        let (gx, dgamma, dbeta) = batchnorm_backward(grad, &cache, self.gamma.value.data())?;
        self.gamma.accumulate(&dgamma);
        self.beta.accumulate(&dbeta);
        Ok(gx)
    }
}

#[derive(Clone, Debug)]
pub struct DenseLayer<T> {
    pub weights: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Self {
        Self { weights: Param::new(weights), bias: Param::new(bias), cache: None }
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let y = dense_forward(&x, &self.weights.value, &self.bias.value)?;
        if mode == Mode::Train {
            self.cache = Some(x);
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.cache.take().ok_or_else(|| stale("dense"))?;
        let (gx, gw, gb) = dense_backward(grad, &x, &self.weights.value)?;
        self.weights.accumulate(gw.data());
        self.bias.accumulate(gb.data());
        Ok(gx)
    }
}

#[derive(Clone, Debug)]
pub struct ActivationLayer<T> {
    pub kind: Activation,
    pub alpha: Option<Param<T>>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> ActivationLayer<T> {
    pub fn new(kind: Activation, channels: usize) -> Self {
        let alpha = kind
            .has_parameters()
            .then(|| Param::new(Tensor::full(&[channels], T::from_f64(super::activation::PRELU_INIT))));
        Self { kind, alpha, cache: None }
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let y = activation_forward(self.kind, &x, self.alpha.as_ref().map(|a| a.value.data()))?;
        if mode == Mode::Train {
            self.cache = Some(x);
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.cache.take().ok_or_else(|| stale("activation"))?;
        let (gx, galpha) =
            activation_backward(self.kind, &x, self.alpha.as_ref().map(|a| a.value.data()), grad)?;
        if let (Some(a), Some(g)) = (self.alpha.as_mut(), galpha) {
            a.accumulate(&g);
        }
        Ok(gx)
    }
}

/// One stage of a [`super::Model`].
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Projection(ProjectionLayer<T>),
    Highway(HighwayLayer<T>),
    MaxPool(MaxPoolLayer),
    BatchNorm(BatchNormLayer<T>),
    Flatten(Option<Vec<usize>>),
    Dense(DenseLayer<T>),
    Activation(ActivationLayer<T>),
}

impl<T: Real> Layer<T> {
    pub fn name(&self) -> String {
        match self {
            Layer::Projection(_) => "projection1x1".into(),
            Layer::Highway(h) => {
                let (kh, kw) = h.params.kernel();
                format!("highway{kh}x{kw}/{}", h.activation.name())
            }
            Layer::MaxPool(p) => format!("maxpool{}", p.size),
            Layer::BatchNorm(_) => "batchnorm".into(),
            Layer::Flatten(_) => "flatten".into(),
            Layer::Dense(d) => format!("dense{}", d.weights.value.shape()[1]),
            Layer::Activation(a) => a.kind.name().to_lowercase(),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Projection(l) => l.forward(x, mode),
            Layer::Highway(l) => l.forward(x, mode),
            Layer::MaxPool(l) => {
                let (y, argmax) = maxpool_forward(&x, l.size)?;
                if mode == Mode::Train {
                    l.cache = Some((argmax, x.shape().to_vec()));
                }
                Ok(y)
            }
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Flatten(shape) => {
                let b = x.shape()[0];
                let rest = x.len() / b;
                if mode == Mode::Train {
                    *shape = Some(x.shape().to_vec());
                }
                x.reshape(&[b, rest])
            }
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Activation(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Projection(l) => l.backward(&grad),
            Layer::Highway(l) => l.backward(&grad),
            Layer::MaxPool(l) => {
                let (argmax, shape) = l.cache.take().ok_or_else(|| stale("maxpool"))?;
                maxpool_backward(&grad, &argmax, &shape)
            }
            Layer::BatchNorm(l) => l.backward(&grad),
            Layer::Flatten(shape) => {
                let shape = shape.take().ok_or_else(|| stale("flatten"))?;
                grad.reshape(&shape)
            }
            Layer::Dense(l) => l.backward(&grad),
            Layer::Activation(l) => l.backward(&grad),
        }
    }

    /// Calls `f(value, grad, m, v)` for every trainable tensor.
    pub fn for_each_param(&mut self, mut f: impl FnMut(&mut [T], &mut [T], &mut Vec<T>, &mut Vec<T>)) {
        let mut visit = |p: &mut Param<T>| f(p.value.data_mut(), p.grad.data_mut(), &mut p.m, &mut p.v);
        match self {
            Layer::Projection(l) => {
                visit(&mut l.weights);
                visit(&mut l.bias);
            }
            Layer::Highway(l) => l.for_each_param(f),
            Layer::BatchNorm(l) => {
                visit(&mut l.gamma);
                visit(&mut l.beta);
            }
            Layer::Dense(l) => {
                visit(&mut l.weights);
                visit(&mut l.bias);
            }
            Layer::Activation(l) => {
                if let Some(a) = l.alpha.as_mut() {
                    visit(a);
                }
            }
            Layer::MaxPool(_) | Layer::Flatten(_) => {}
        }
    }

    /// Every stored tensor in a fixed order: trainable values followed by
    /// running statistics. Used by the model file format.
    pub fn state_tensors(&self) -> Vec<Tensor<T>> {
        match self {
            Layer::Projection(l) => vec![l.weights.value.clone(), l.bias.value.clone()],
            Layer::Highway(l) => l.values().into_iter().cloned().collect(),
            Layer::BatchNorm(l) => {
                let c = l.running_mean.len();
                vec![
                    l.gamma.value.clone(),
                    l.beta.value.clone(),
                    Tensor::new(vec![c], l.running_mean.clone()).expect("channel stats"),
                    Tensor::new(vec![c], l.running_var.clone()).expect("channel stats"),
                ]
            }
            Layer::Dense(l) => vec![l.weights.value.clone(), l.bias.value.clone()],
            Layer::Activation(l) => l.alpha.iter().map(|a| a.value.clone()).collect(),
            Layer::MaxPool(_) | Layer::Flatten(_) => Vec::new(),
        }
    }

    /// Overwrites the tensors listed by [`Layer::state_tensors`].
    pub fn load_state(&mut self, tensors: Vec<Tensor<T>>) -> Result<(), NnError> {
        let current = self.state_tensors();
        if current.len() != tensors.len()
            || current.iter().zip(&tensors).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(NnError::Shape(format!(
                "{}: stored tensors do not match the layer",
                self.name()
            )));
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        match self {
            Layer::Projection(l) => {
                l.weights.value = next();
                l.bias.value = next();
            }
            Layer::Highway(l) => {
                l.params.conv_weights = next();
                l.params.conv_bias = next();
                l.params.gate_weights = next();
                l.params.gate_bias = next();
                if l.params.alpha.is_some() {
                    l.params.alpha = Some(next());
                }
            }
            Layer::BatchNorm(l) => {
                l.gamma.value = next();
                l.beta.value = next();
                l.running_mean = next().into_data();
                l.running_var = next().into_data();
            }
            Layer::Dense(l) => {
                l.weights.value = next();
                l.bias.value = next();
            }
            Layer::Activation(l) => {
                if let Some(a) = l.alpha.as_mut() {
                    a.value = next();
                }
            }
            Layer::MaxPool(_) | Layer::Flatten(_) => {}
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::BatchNorm(l) => l.gamma.len() + l.beta.len(),
            _ => self.state_tensors().iter().map(|t| t.len()).sum(),
        }
    }
}

/// Applies one Adam update to every parameter of `layers`.
pub(crate) fn adam_update<T: Real>(layers: &mut [Layer<T>], config: &AdamConfig, step: u64, lr: f64) {
    for layer in layers {
        layer.for_each_param(|value, grad, m, v| adam_step(config, value, grad, m, v, step, lr));
    }
}
