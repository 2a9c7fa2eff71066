use super::{matmul, NnError, Real, Tensor};

/// `y = x·W + b` with `x [B, in]`, `weights [in, out]`, `bias [out]`.
pub fn dense_forward<T: Real>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (b, n_in) = x.dims2()?;
    let (w_in, n_out) = weights.dims2()?;
    if w_in != n_in || bias.len() != n_out {
        return Err(NnError::Shape(format!(
            "dense layer [{w_in} -> {n_out}] cannot take input {:?}",
            x.shape()
        )));
    }
    let mut y = Tensor::zeros(&[b, n_out]);
    for row in y.data_mut().chunks_mut(n_out) {
        row.copy_from_slice(bias.data());
    }
    matmul(b, n_in, n_out, x.data(), false, weights.data(), false, T::one(), y.data_mut());
    Ok(y)
}

/// Returns `(dx, dweights, dbias)`.
pub fn dense_backward<T: Real>(
    grad_y: &Tensor<T>,
    x: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let (b, n_in) = x.dims2()?;
    let (_, n_out) = weights.dims2()?;
    if grad_y.shape() != [b, n_out] {
        return Err(NnError::StaleCache(format!(
            "dense gradient {:?} vs expected [{b}, {n_out}]",
            grad_y.shape()
        )));
    }
    let mut gx = Tensor::zeros(&[b, n_in]);
    let mut gw = Tensor::zeros(&[n_in, n_out]);
    let mut gb = Tensor::zeros(&[n_out]);
    matmul(n_in, b, n_out, x.data(), true, grad_y.data(), false, T::zero(), gw.data_mut());
    matmul(b, n_out, n_in, grad_y.data(), false, weights.data(), true, T::zero(), gx.data_mut());
    for row in grad_y.data().chunks(n_out) {
        for (g, &v) in gb.data_mut().iter_mut().zip(row) {
            *g += v;
        }
    }
    Ok((gx, gw, gb))
}
