//! Convolutional highway layer:
//! `y = H(x)·T(x) + x·(1 − T(x))` with `H = act(conv(x, W_C) + b_C)` and
//! `T = sigmoid(conv(x, W_T) + b_T)`.
//!
//! Both convolutions read the same receptive field, so one im2col buffer and
//! one GEMM against the stacked weights `[W_C; W_T]` serve both paths.

use super::activation::with_activation;
use super::conv::{col2im_add, im2col, ConvGeometry};
use super::{matmul, Activation, NnError, Real, Tensor};

/// Parameters of one highway layer. The carry path needs as many input
/// channels as filters.
#[derive(Clone, Debug, PartialEq)]
pub struct HighwayParams<T> {
    /// `[F, F, kh, kw]`
    pub conv_weights: Tensor<T>,
    pub conv_bias: Tensor<T>,
    /// `[F, F, kh, kw]`
    pub gate_weights: Tensor<T>,
    pub gate_bias: Tensor<T>,
    /// PReLU slopes `[F]`, present only for [`Activation::Prelu`].
    pub alpha: Option<Tensor<T>>,
}

/// Gradients matching [`HighwayParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct HighwayGrads<T> {
    pub conv_weights: Tensor<T>,
    pub conv_bias: Tensor<T>,
    pub gate_weights: Tensor<T>,
    pub gate_bias: Tensor<T>,
    pub alpha: Option<Tensor<T>>,
}

/// Intermediates kept by [`highway_forward`].
#[derive(Clone, Debug)]
pub struct HighwayCache<T> {
    x: Tensor<T>,
    h_pre: Vec<T>,
    gate: Vec<T>,
    weight_shape: Vec<usize>,
}

impl<T> HighwayCache<T> {
    /// Input the cache was built from.
    pub fn input(&self) -> &Tensor<T> {
        &self.x
    }
}

impl<T: Real> HighwayParams<T> {
    pub fn filters(&self) -> usize {
        self.conv_weights.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.conv_weights.shape()[2], self.conv_weights.shape()[3])
    }

    pub fn validate(&self, act: Activation) -> Result<(), NnError> {
        let ws = self.conv_weights.shape();
        let f = ws[0];
        let ok = ws.len() == 4
            && ws[1] == f
            && self.gate_weights.shape() == ws
            && self.conv_bias.shape() == [f]
            && self.gate_bias.shape() == [f]
            && match (&self.alpha, act.has_parameters()) {
                (Some(a), true) => a.shape() == [f],
                (None, false) => true,
                _ => false,
            };
        if ok {
            Ok(())
        } else {
            Err(NnError::Shape(format!(
                "inconsistent highway parameters: W_C {:?}, W_T {:?}, activation {}",
                ws,
                self.gate_weights.shape(),
                act.name()
            )))
        }
    }

    fn stacked_weights(&self) -> Vec<T> {
        let mut w = Vec::with_capacity(2 * self.conv_weights.len());
        w.extend_from_slice(self.conv_weights.data());
        w.extend_from_slice(self.gate_weights.data());
        w
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp_fast())
}

/// Forward pass of one highway layer on `x [B, F, H, W]`.
pub fn highway_forward<T: Real>(
    x: Tensor<T>,
    params: &HighwayParams<T>,
    act: Activation,
) -> Result<(Tensor<T>, HighwayCache<T>), NnError> {
    params.validate(act)?;
    let (b, c, h, w) = x.dims4()?;
    let f = params.filters();
    if c != f {
        return Err(NnError::Shape(format!(
            "highway carry path needs {f} input channels, got {c}"
        )));
    }
    let (kh, kw) = params.kernel();
    let g = ConvGeometry { channels: c, height: h, width: w, kernel_h: kh, kernel_w: kw };
    let hw = h * w;
    let k = g.patch_len();
    let sample = f * hw;
    let stacked = params.stacked_weights();
    let alpha = params.alpha.as_ref().map(|a| a.data());

    let mut y = Tensor::zeros(x.shape());
    let mut h_pre = vec![T::zero(); b * sample];
    let mut gate = vec![T::zero(); b * sample];
    let pointwise = kh == 1 && kw == 1;
    let mut cols = vec![T::zero(); if pointwise { 0 } else { k * hw }];
    let mut pre = vec![T::zero(); 2 * sample];

    for s in 0..b {
        let xs = &x.data()[s * sample..(s + 1) * sample];
        let rhs = if pointwise {
            xs
        } else {
            im2col(xs, &g, &mut cols);
            &cols
        };
        matmul(2 * f, k, hw, &stacked, false, rhs, false, T::zero(), &mut pre);
        let (pre_h, pre_t) = pre.split_at(sample);
        let hs = &mut h_pre[s * sample..(s + 1) * sample];
        let ts = &mut gate[s * sample..(s + 1) * sample];
        let ys = &mut y.data_mut()[s * sample..(s + 1) * sample];
        with_activation!(act, K => {
            for fi in 0..f {
                let plane = fi * hw..(fi + 1) * hw;
                let cb = params.conv_bias.data()[fi];
                let tb = params.gate_bias.data()[fi];
                let a = alpha.map_or(T::zero(), |a| a[fi]);
                let it = hs[plane.clone()]
                    .iter_mut()
                    .zip(&mut ts[plane.clone()])
                    .zip(&mut ys[plane.clone()])
                    .zip(&pre_h[plane.clone()])
                    .zip(&pre_t[plane.clone()])
                    .zip(&xs[plane]);
                for (((((hv, tv), yv), &ph), &pt), &xv) in it {
                    let hp = ph + cb;
                    let t = sigmoid(pt + tb);
                    *hv = hp;
                    *tv = t;
                    *yv = K.apply(hp, a) * t + xv * (T::one() - t);
                }
            }
        });
    }
    let cache = HighwayCache {
        x,
        h_pre,
        gate,
        weight_shape: params.conv_weights.shape().to_vec(),
    };
    Ok((y, cache))
}

/// Reverse pass; `cache` must come from the forward call on `params`.
pub fn highway_backward<T: Real>(
    grad_y: &Tensor<T>,
    cache: &HighwayCache<T>,
    params: &HighwayParams<T>,
    act: Activation,
) -> Result<(Tensor<T>, HighwayGrads<T>), NnError> {
    if grad_y.shape() != cache.x.shape() || params.conv_weights.shape() != &cache.weight_shape[..]
    {
        return Err(NnError::StaleCache(format!(
            "gradient {:?} / weights {:?} do not match cached forward ({:?} / {:?})",
            grad_y.shape(),
            params.conv_weights.shape(),
            cache.x.shape(),
            cache.weight_shape
        )));
    }
    params.validate(act)?;
    let (b, c, h, w) = cache.x.dims4()?;
    let f = c;
    let (kh, kw) = params.kernel();
    let g = ConvGeometry { channels: c, height: h, width: w, kernel_h: kh, kernel_w: kw };
    let hw = h * w;
    let k = g.patch_len();
    let sample = f * hw;
    let stacked = params.stacked_weights();
    let alpha = params.alpha.as_ref().map(|a| a.data());

    let mut gx = Tensor::zeros(cache.x.shape());
    let mut g_stacked = vec![T::zero(); 2 * f * k];
    let mut g_conv_bias = vec![T::zero(); f];
    let mut g_gate_bias = vec![T::zero(); f];
    let mut g_alpha = alpha.map(|_| vec![T::zero(); f]);
    let pointwise = kh == 1 && kw == 1;
    let scratch = if pointwise { 0 } else { k * hw };
    let mut cols = vec![T::zero(); scratch];
    let mut gcols = vec![T::zero(); scratch];
    let mut gpre = vec![T::zero(); 2 * sample];

    for s in 0..b {
        let range = s * sample..(s + 1) * sample;
        let xs = &cache.x.data()[range.clone()];
        let gys = &grad_y.data()[range.clone()];
        let hs = &cache.h_pre[range.clone()];
        let ts = &cache.gate[range.clone()];
        let gxs = &mut gx.data_mut()[range];
        let (gpre_h, gpre_t) = gpre.split_at_mut(sample);
        with_activation!(act, K => {
            for fi in 0..f {
                let plane = fi * hw..(fi + 1) * hw;
                let a = alpha.map_or(T::zero(), |a| a[fi]);
                let (mut gb_c, mut gb_t, mut ga) = (T::zero(), T::zero(), T::zero());
                let it = gpre_h[plane.clone()]
                    .iter_mut()
                    .zip(&mut gpre_t[plane.clone()])
                    .zip(&mut gxs[plane.clone()])
                    .zip(&hs[plane.clone()])
                    .zip(&ts[plane.clone()])
                    .zip(&gys[plane.clone()])
                    .zip(&xs[plane]);
                for ((((((dh_out, dt_out), gxv), &hp), &t), &gy), &xv) in it {
                    let dh = gy * t;
                    let dh_pre = dh * K.derivative(hp, a);
                    let dt_pre = gy * (K.apply(hp, a) - xv) * t * (T::one() - t);
                    ga += dh * K.alpha_derivative(hp);
                    *dh_out = dh_pre;
                    *dt_out = dt_pre;
                    gb_c += dh_pre;
                    gb_t += dt_pre;
                    *gxv = gy * (T::one() - t);
                }
                g_conv_bias[fi] += gb_c;
                g_gate_bias[fi] += gb_t;
                if let Some(g) = g_alpha.as_mut() {
                    g[fi] += ga;
                }
            }
        });
        if pointwise {
            matmul(2 * f, hw, k, &gpre, false, xs, true, T::one(), &mut g_stacked);
            matmul(k, 2 * f, hw, &stacked, true, &gpre, false, T::one(), gxs);
        } else {
            im2col(xs, &g, &mut cols);
            matmul(2 * f, hw, k, &gpre, false, &cols, true, T::one(), &mut g_stacked);
            matmul(k, 2 * f, hw, &stacked, true, &gpre, false, T::zero(), &mut gcols);
            col2im_add(&gcols, &g, gxs);
        }
    }

    let half = f * k;
    let wshape = params.conv_weights.shape().to_vec();
    let gate_part = g_stacked.split_off(half);
    let grads = HighwayGrads {
        conv_weights: Tensor::new(wshape.clone(), g_stacked)?,
        conv_bias: Tensor::new(vec![f], g_conv_bias)?,
        gate_weights: Tensor::new(wshape, gate_part)?,
        gate_bias: Tensor::new(vec![f], g_gate_bias)?,
        alpha: g_alpha.map(|g| Tensor::new(vec![f], g)).transpose()?,
    };
    Ok((gx, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(f: usize, k: usize, gate_bias: f64, act: Activation) -> HighwayParams<f64> {
        HighwayParams {
            conv_weights: Tensor::from_fn(&[f, f, k, k], |i| ((i * 37) % 11) as f64 / 10.0 - 0.5),
            conv_bias: Tensor::from_fn(&[f], |i| 0.1 * i as f64),
            gate_weights: Tensor::zeros(&[f, f, k, k]),
            gate_bias: Tensor::full(&[f], gate_bias),
            alpha: act.has_parameters().then(|| Tensor::full(&[f], 0.25)),
        }
    }

    #[test]
    fn scalar_blend() {
        // x = 2, H = 3 (identity-weighted conv + bias), T = 0.25
        let p = HighwayParams {
            conv_weights: Tensor::from_f64(&[1, 1, 1, 1], &[1.0]).unwrap(),
            conv_bias: Tensor::from_f64(&[1], &[1.0]).unwrap(),
            gate_weights: Tensor::zeros(&[1, 1, 1, 1]),
            gate_bias: Tensor::from_f64(&[1], &[(0.25f64 / 0.75).ln()]).unwrap(),
            alpha: None,
        };
        let x = Tensor::<f64>::from_f64(&[1, 1, 1, 1], &[2.0]).unwrap();
        let (y, _) = highway_forward(x, &p, Activation::Relu).unwrap();
        assert!((y.data()[0] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn closed_gate_passes_input() {
        let x = Tensor::from_fn(&[2, 3, 4, 4], |i| (i as f64 * 0.3).sin());
        let (y, _) = highway_forward(x.clone(), &params(3, 3, f64::NEG_INFINITY, Activation::Elu), Activation::Elu).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 2, 3, 3]);
        let err = highway_forward(x, &params(3, 1, 0.0, Activation::Relu), Activation::Relu);
        assert!(matches!(err, Err(NnError::Shape(_))));
    }

    #[test]
    fn stale_cache_rejected() {
        let x = Tensor::from_fn(&[1, 2, 3, 3], |i| i as f64);
        let (_, cache) = highway_forward(x, &params(2, 3, 0.0, Activation::Relu), Activation::Relu).unwrap();
        let wrong = Tensor::zeros(&[1, 2, 4, 4]);
        assert!(matches!(
            highway_backward(&wrong, &cache, &params(2, 3, 0.0, Activation::Relu), Activation::Relu),
            Err(NnError::StaleCache(_))
        ));
        let ok = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(matches!(
            highway_backward(&ok, &cache, &params(2, 1, 0.0, Activation::Relu), Activation::Relu),
            Err(NnError::StaleCache(_))
        ));
    }

    #[test]
    fn closed_gate_gradient_is_identity() {
        let x = Tensor::from_fn(&[1, 2, 3, 3], |i| (i as f64).cos());
        let p = params(2, 3, f64::NEG_INFINITY, Activation::Softsign);
        let (_, cache) = highway_forward(x, &p, Activation::Softsign).unwrap();
        let gy = Tensor::from_fn(&[1, 2, 3, 3], |i| 1.0 + i as f64);
        let (gx, _) = highway_backward(&gy, &cache, &p, Activation::Softsign).unwrap();
        assert_eq!(gx.data(), gy.data());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let x = Tensor::from_fn(&[2, 2, 3, 3], |i| (i as f64 * 0.7).sin());
        let p = params(2, 2, 0.3, Activation::Prelu);
        let (_, cache) = highway_forward(x, &p, Activation::Prelu).unwrap();
        let (gx, g) = highway_backward(&Tensor::zeros(&[2, 2, 3, 3]), &cache, &p, Activation::Prelu).unwrap();
        for t in [&gx, &g.conv_weights, &g.conv_bias, &g.gate_weights, &g.gate_bias, g.alpha.as_ref().unwrap()] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }
}
