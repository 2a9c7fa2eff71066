use super::{NnError, Real, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Values kept from a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// `(Σa, Σa·b)` in f64 with independent partial sums, so the loop
/// vectorizes instead of serializing on one accumulator.
#[inline(always)]
fn lane_sum_prod<T: Real>(a: &[T], b: &[T]) -> (f64, f64) {
    let (mut s, mut p) = ([0.0f64; 8], [0.0f64; 8]);
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (mut ts, mut tp) = (0.0, 0.0);
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        ts += x.as_f64();
        tp += x.as_f64() * y.as_f64();
    }
    for (x8, y8) in ca.zip(cb) {
        for i in 0..8 {
            s[i] += x8[i].as_f64();
            p[i] += x8[i].as_f64() * y8[i].as_f64();
        }
    }
    (s.iter().sum::<f64>() + ts, p.iter().sum::<f64>() + tp)
}

/// Per-channel `(mean, biased variance)` over batch and spatial positions.
pub fn channel_moments<T: Real>(x: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let (_, c, h, w) = x.dims4()?;
    let hw = h * w;
    let count = (x.len() / c.max(1)) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    if hw == 0 || c == 0 {
        return Ok((mean, var));
    }
    // one pass: Σx and Σx² in f64, which keeps the cancellation harmless
    for (i, plane) in x.data().chunks_exact(hw).enumerate() {
        let (s, sq) = lane_sum_prod(plane, plane);
        mean[i % c] += s;
        var[i % c] += sq;
    }
    for (m, v) in mean.iter_mut().zip(var.iter_mut()) {
        *m /= count;
        *v = (*v / count - *m * *m).max(0.0);
    }
    Ok((mean, var))
}

/// Training-mode batch normalization of `x [B, C, H, W]` with batch
/// statistics; also returns the batch mean and variance.
pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>, Vec<f64>, Vec<f64>), NnError> {
    let (_, c, h, w) = x.dims4()?;
    check_params(c, gamma, beta)?;
    let (mean, var) = channel_moments(x)?;
    let inv_std: Vec<T> = var.iter().map(|v| T::from_f64(1.0 / (v + eps).sqrt())).collect();
    let hw = (h * w).max(1);
    let mut normalized = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let planes = x
        .data()
        .chunks_exact(hw)
        .zip(normalized.data_mut().chunks_exact_mut(hw))
        .zip(y.data_mut().chunks_exact_mut(hw));
    for (i, ((xp, np), yp)) in planes.enumerate() {
        let ch = i % c;
        let (m, is, g, bt) = (T::from_f64(mean[ch]), inv_std[ch], gamma[ch], beta[ch]);
        for ((&xv, nv), yv) in xp.iter().zip(np.iter_mut()).zip(yp.iter_mut()) {
            let n = (xv - m) * is;
            *nv = n;
            *yv = g * n + bt;
        }
    }
    Ok((y, BatchNormCache { normalized, inv_std }, mean, var))
}

/// Evaluation-mode normalization with fixed statistics.
pub fn batchnorm_inference<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: f64,
) -> Result<Tensor<T>, NnError> {
    let (_, c, h, w) = x.dims4()?;
    check_params(c, gamma, beta)?;
    let hw = (h * w).max(1);
    let scale: Vec<T> =
        (0..c).map(|ch| gamma[ch] / (var[ch] + T::from_f64(eps)).sqrt()).collect();
    let mut y = Tensor::zeros(x.shape());
    let planes = x.data().chunks_exact(hw).zip(y.data_mut().chunks_exact_mut(hw));
    for (i, (xp, yp)) in planes.enumerate() {
        let ch = i % c;
        let (sc, sh) = (scale[ch], beta[ch] - mean[ch] * scale[ch]);
        for (&xv, yv) in xp.iter().zip(yp.iter_mut()) {
            *yv = xv * sc + sh;
        }
    }
    Ok(y)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward<T: Real>(
    grad_y: &Tensor<T>,
    cache: &BatchNormCache<T>,
    gamma: &[T],
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), NnError> {
    if grad_y.shape() != cache.normalized.shape() {
        return Err(NnError::StaleCache(format!(
            "batchnorm gradient {:?} vs cached {:?}",
            grad_y.shape(),
            cache.normalized.shape()
        )));
    }
    let (_, c, h, w) = grad_y.dims4()?;
    let hw = (h * w).max(1);
    let count = T::from_f64((grad_y.len() / c.max(1)) as f64);
    let mut dgamma64 = vec![0.0f64; c];
    let mut dbeta64 = vec![0.0f64; c];
    let planes = grad_y.data().chunks_exact(hw).zip(cache.normalized.data().chunks_exact(hw));
    for (i, (gp, np)) in planes.enumerate() {
        let (sg, sgn) = lane_sum_prod(gp, np);
        dbeta64[i % c] += sg;
        dgamma64[i % c] += sgn;
    }
    let dgamma: Vec<T> = dgamma64.iter().map(|&v| T::from_f64(v)).collect();
    let dbeta: Vec<T> = dbeta64.iter().map(|&v| T::from_f64(v)).collect();
    let mut dx = Tensor::zeros(grad_y.shape());
    let planes = grad_y
        .data()
        .chunks_exact(hw)
        .zip(cache.normalized.data().chunks_exact(hw))
        .zip(dx.data_mut().chunks_exact_mut(hw));
    for (i, ((gp, np), dp)) in planes.enumerate() {
        let ch = i % c;
        // dx = gamma·inv_std/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
        let k = gamma[ch] * cache.inv_std[ch] / count;
        let (db, dg) = (dbeta[ch], dgamma[ch]);
        for ((&g, &n), d) in gp.iter().zip(np).zip(dp.iter_mut()) {
            *d = k * (count * g - db - n * dg);
        }
    }
    Ok((dx, dgamma, dbeta))
}

fn check_params<T>(c: usize, gamma: &[T], beta: &[T]) -> Result<(), NnError> {
    if gamma.len() != c || beta.len() != c {
        return Err(NnError::Shape(format!(
            "batchnorm over {c} channels got {} scales and {} shifts",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}
