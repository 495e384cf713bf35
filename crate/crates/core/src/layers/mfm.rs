//! Max-Feature-Map: elementwise maximum of two candidate feature maps.
//!
//! The forward pass keeps a per-element record of which candidate won. On a
//! tie the first candidate wins, so its gradient is the indicator
//! `first >= second` and the second candidate receives the complement.

use super::check_grad_shape;
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct MfmCache {
    first_wins: Vec<bool>,
    shape: Shape,
}

impl MfmCache {
    /// `true` where the first candidate was selected.
    pub fn first_wins(&self) -> &[bool] {
        &self.first_wins
    }
}

pub fn mfm_forward<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(Tensor<T>, MfmCache)> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "MFM candidates differ in shape: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let (out, first_wins): (Vec<T>, Vec<bool>) = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| if x >= y { (x, true) } else { (y, false) })
        .unzip();
    let cache = MfmCache {
        first_wins,
        shape: a.shape().clone(),
    };
    Ok((Tensor::from_parts(a.shape().clone(), out), cache))
}

/// Routes each upstream gradient element to the winning candidate only.
pub fn mfm_backward<T: Element>(grad_out: &Tensor<T>, cache: &MfmCache) -> Result<(Tensor<T>, Tensor<T>)> {
    check_grad_shape(grad_out, &cache.shape, "mfm")?;
    let mut ga = grad_out.zeros_like();
    let mut gb = grad_out.zeros_like();
    for (i, (&g, &first)) in grad_out.data().iter().zip(&cache.first_wins).enumerate() {
        if first {
            ga.data_mut()[i] = g;
        } else {
            gb.data_mut()[i] = g;
        }
    }
    Ok((ga, gb))
}
