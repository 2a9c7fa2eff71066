use super::{NnError, Real, Tensor};

/// Row-wise softmax computed in double precision.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Vec<f64>, NnError> {
    let (_, classes) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(classes) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for v in row {
            let e = (v.as_f64() - max).exp();
            total += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= total);
    }
    Ok(out)
}

/// Mean cross-entropy of softmax(logits) against class indices and its
/// gradient `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>), NnError> {
    let (batch, classes) = logits.dims2()?;
    if labels.len() != batch {
        return Err(NnError::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if !logits.all_finite() {
        return Err(NnError::NonFinite("logits".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::Shape(format!("label {bad} outside {classes} classes")));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.data().chunks(classes).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let log_total = row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        loss -= row[label].as_f64() - max - log_total;
        for (j, v) in row.iter().enumerate() {
            let p = (v.as_f64() - max - log_total).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p - target) / batch as f64));
        }
    }
    Ok((loss / batch as f64, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Variant taking one-hot targets `[batch, classes]`.
pub fn softmax_cross_entropy_onehot<T: Real>(
    logits: &Tensor<T>,
    onehot: &Tensor<T>,
) -> Result<(f64, Tensor<T>), NnError> {
    if onehot.shape() != logits.shape() {
        return Err(NnError::Shape(format!(
            "targets {:?} vs logits {:?}",
            onehot.shape(),
            logits.shape()
        )));
    }
    let (_, classes) = onehot.dims2()?;
    let labels = onehot
        .data()
        .chunks(classes)
        .map(|row| {
            let ones: Vec<usize> = (0..classes).filter(|&j| row[j] == T::one()).collect();
            let zeros = row.iter().filter(|&&v| v == T::zero()).count();
            if ones.len() == 1 && zeros == classes - 1 {
                Ok(ones[0])
            } else {
                Err(NnError::Shape("target row is not one-hot".into()))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    softmax_cross_entropy(logits, &labels)
}
