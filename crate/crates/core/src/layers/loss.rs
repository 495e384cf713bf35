use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
///
/// Each row is shifted by its maximum before exponentiation. The gradient row
/// is `(softmax - onehot) / N`.
pub fn softmax_xent<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [n, k] = logits.dims()[..] else {
        return Err(Error::shape(format!("logits must be [N, K], got {}", logits.shape())));
    };
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidLabel { label, classes: k });
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut grad = logits.zeros_like();
    let mut total = T::zero();
    for ((row, grow), &label) in logits.data().chunks(k).zip(grad.data_mut().chunks_mut(k)).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for (g, &z) in grow.iter_mut().zip(row) {
            let e = (z - max).exp();
            *g = e;
            denom = denom + e;
        }
        // -log softmax[label] = log(denom) - (z_label - max)
        total = total + denom.ln() - (row[label] - max);
        for g in grow.iter_mut() {
            *g = *g / denom * inv_n;
        }
        grow[label] = grow[label] - inv_n;
    }
    Ok((total * inv_n, grad))
}
