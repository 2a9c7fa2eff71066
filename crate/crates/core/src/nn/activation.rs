use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

/// Nonlinearities available to highway and dense layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    /// `x` for `x > 0`, `e^x - 1` otherwise (alpha = 1).
    #[serde(rename = "ELU")]
    Elu,
    #[serde(rename = "ReLU")]
    Relu,
    /// Leaky slope learned per channel, initialized to 0.25.
    #[serde(rename = "PReLU")]
    Prelu,
    /// `x / (|x| + 1)`.
    #[serde(rename = "Softsign")]
    Softsign,
}

pub const PRELU_INIT: f64 = 0.25;

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "ELU",
            Activation::Relu => "ReLU",
            Activation::Prelu => "PReLU",
            Activation::Softsign => "Softsign",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Activation::Elu,
            Activation::Relu,
            Activation::Prelu,
            Activation::Softsign,
        ]
        .into_iter()
        .find(|a| a.name().eq_ignore_ascii_case(name))
    }

    pub fn has_parameters(self) -> bool {
        self == Activation::Prelu
    }

    /// `alpha` is the PReLU slope; ignored by the other kinds.
    #[inline]
    pub fn apply<T: Real>(self, x: T, alpha: T) -> T {
        let zero = T::zero();
        match self {
            Activation::Elu => {
                if x > zero {
                    x
                } else {
                    x.exp_fast() - T::one()
                }
            }
            Activation::Relu => x.max(zero),
            Activation::Prelu => {
                if x > zero {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Softsign => x / (x.abs() + T::one()),
        }
    }

    /// Derivative with respect to the input.
    #[inline]
    pub fn derivative<T: Real>(self, x: T, alpha: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            Activation::Elu => {
                if x > zero {
                    one
                } else {
                    x.exp_fast()
                }
            }
            Activation::Relu => {
                if x > zero {
                    one
                } else {
                    zero
                }
            }
            Activation::Prelu => {
                if x > zero {
                    one
                } else {
                    alpha
                }
            }
            Activation::Softsign => {
                let d = x.abs() + one;
                one / (d * d)
            }
        }
    }

    /// Derivative of PReLU with respect to its slope.
    #[inline]
    pub fn alpha_derivative<T: Real>(self, x: T) -> T {
        if self == Activation::Prelu && x <= T::zero() {
            x
        } else {
            T::zero()
        }
    }
}

/// Evaluates `$body` with `$k` bound to a constant copy of `$act`, so hot
/// loops calling `$k.apply(..)` compile without a per-element match.
macro_rules! with_activation {
    ($act:expr, $k:ident => $body:expr) => {
        match $act {
            $crate::nn::Activation::Elu => {
                const $k: $crate::nn::Activation = $crate::nn::Activation::Elu;
                $body
            }
            $crate::nn::Activation::Relu => {
                const $k: $crate::nn::Activation = $crate::nn::Activation::Relu;
                $body
            }
            $crate::nn::Activation::Prelu => {
                const $k: $crate::nn::Activation = $crate::nn::Activation::Prelu;
                $body
            }
            $crate::nn::Activation::Softsign => {
                const $k: $crate::nn::Activation = $crate::nn::Activation::Softsign;
                $body
            }
        }
    };
}
pub(crate) use with_activation;

/// Number of elements sharing one channel slope in `shape`: 1 for
/// `[batch, features]`, `h*w` for `[batch, channels, h, w]`.
pub(crate) fn channel_layout(shape: &[usize]) -> Result<(usize, usize), NnError> {
    match *shape {
        [_, c] => Ok((c, 1)),
        [_, c, h, w] => Ok((c, h * w)),
        _ => Err(NnError::Shape(format!(
            "activation expects rank 2 or 4, got {shape:?}"
        ))),
    }
}

/// Applies `kind` elementwise; `alpha` holds one slope per channel.
pub fn activation_forward<T: Real>(
    kind: Activation,
    x: &Tensor<T>,
    alpha: Option<&[T]>,
) -> Result<Tensor<T>, NnError> {
    let (channels, inner) = channel_layout(x.shape())?;
    check_alpha(kind, alpha, channels)?;
    let mut y = x.clone();
    with_activation!(kind, K => {
        for (i, plane) in y.data_mut().chunks_mut(inner).enumerate() {
            let a = alpha.map_or(T::zero(), |a| a[i % channels]);
            plane.iter_mut().for_each(|v| *v = K.apply(*v, a));
        }
    });
    Ok(y)
}

/// Returns the input gradient and, for PReLU, the slope gradient.
pub fn activation_backward<T: Real>(
    kind: Activation,
    x: &Tensor<T>,
    alpha: Option<&[T]>,
    grad_y: &Tensor<T>,
) -> Result<(Tensor<T>, Option<Vec<T>>), NnError> {
    if grad_y.shape() != x.shape() {
        return Err(NnError::Shape(format!(
            "activation gradient {:?} vs input {:?}",
            grad_y.shape(),
            x.shape()
        )));
    }
    let (channels, inner) = channel_layout(x.shape())?;
    check_alpha(kind, alpha, channels)?;
    let mut gx = grad_y.clone();
    let mut galpha = alpha.map(|_| vec![T::zero(); channels]);
    let planes = gx.data_mut().chunks_mut(inner).zip(x.data().chunks(inner));
    with_activation!(kind, K => {
        for (i, (gp, xp)) in planes.enumerate() {
            let ch = i % channels;
            let a = alpha.map_or(T::zero(), |a| a[ch]);
            if let Some(ga) = galpha.as_mut() {
                ga[ch] += gp.iter().zip(xp).map(|(&g, &xv)| g * K.alpha_derivative(xv)).sum::<T>();
            }
            gp.iter_mut().zip(xp).for_each(|(g, &xv)| *g *= K.derivative(xv, a));
        }
    });
    Ok((gx, galpha))
}

fn check_alpha<T>(kind: Activation, alpha: Option<&[T]>, channels: usize) -> Result<(), NnError> {
    match (kind.has_parameters(), alpha) {
        (true, Some(a)) if a.len() == channels => Ok(()),
        (true, _) => Err(NnError::Shape(format!(
            "PReLU needs {channels} slopes"
        ))),
        (false, None) => Ok(()),
        (false, Some(_)) => Err(NnError::Shape(format!(
            "{} takes no parameters",
            kind.name()
        ))),
    }
}
