use super::{NnError, Real, Tensor};

/// Output spatial size of a `size`×`size`, stride-`size` max pool, or `None`
/// when a dimension would shrink below 1.
pub fn pooled_dims(h: usize, w: usize, size: usize) -> Option<(usize, usize)> {
    let (oh, ow) = (h / size, w / size);
    (size >= 1 && oh >= 1 && ow >= 1).then_some((oh, ow))
}

/// Non-overlapping max pooling. Returns the output and, per output element,
/// the flat input index of the selected maximum (first one on ties).
pub fn maxpool_forward<T: Real>(
    x: &Tensor<T>,
    size: usize,
) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    let (b, c, h, w) = x.dims4()?;
    let (oh, ow) = pooled_dims(h, w, size).ok_or_else(|| {
        NnError::Shape(format!("pool size {size} too large for {h}x{w} input"))
    })?;
    let mut y = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = vec![0usize; b * c * oh * ow];
    let xd = x.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (oy * size + dy) * w + ox * size + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                y.data_mut()[o] = xd[best];
                argmax[o] = best;
            }
        }
    }
    Ok((y, argmax))
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool_backward<T: Real>(
    grad_y: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>, NnError> {
    if grad_y.len() != argmax.len() {
        return Err(NnError::StaleCache(format!(
            "pool gradient has {} entries, cache {}",
            grad_y.len(),
            argmax.len()
        )));
    }
    let mut gx = Tensor::zeros(input_shape);
    for (&g, &i) in grad_y.data().iter().zip(argmax) {
        gx.data_mut()[i] += g;
    }
    Ok(gx)
}
