use super::check_grad_shape;
use crate::error::Result;
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct ReluCache {
    positive: Vec<bool>,
    shape: Shape,
}

impl ReluCache {
    /// `true` where the input was strictly positive.
    pub fn active(&self) -> &[bool] {
        &self.positive
    }
}

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> (Tensor<T>, ReluCache) {
    let positive: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
    let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
    let cache = ReluCache {
        positive,
        shape: x.shape().clone(),
    };
    (y, cache)
}

/// Subgradient at exactly zero is taken as 0.
pub fn relu_backward<T: Element>(grad_out: &Tensor<T>, cache: &ReluCache) -> Result<Tensor<T>> {
    check_grad_shape(grad_out, &cache.shape, "relu")?;
    let mut g = grad_out.clone();
    for (v, &pos) in g.data_mut().iter_mut().zip(&cache.positive) {
        if !pos {
            *v = T::zero();
        }
    }
    Ok(g)
}
