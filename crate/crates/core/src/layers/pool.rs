//! Max pooling with ceiling-mode output sizing.
//!
//! The output extent is `ceil((size - k) / stride) + 1`; windows hanging over
//! the right or bottom border are clipped to the input. A window that would
//! start past the end of the input is dropped.

use super::check_grad_shape;
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Flat input index of the selected element, one per output element.
    argmax: Vec<usize>,
    in_shape: Shape,
    out_shape: Shape,
}

impl PoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn pool_output_size(size: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || kernel > size {
        return None;
    }
    let mut out = (size - kernel).div_ceil(stride) + 1;
    if (out - 1) * stride >= size {
        out -= 1;
    }
    Some(out)
}

pub fn maxpool_forward<T: Element>(x: &Tensor<T>, kernel: usize, stride: usize) -> Result<(Tensor<T>, PoolCache)> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidParameter(format!(
            "pooling kernel and stride must be >= 1 (got {kernel}/{stride})"
        )));
    }
    let (n, c, h, w) = x.shape().nchw()?;
    let (Some(oh), Some(ow)) = (pool_output_size(h, kernel, stride), pool_output_size(w, kernel, stride)) else {
        return Err(Error::shape(format!("pooling window {kernel} exceeds input {h}x{w}")));
    };
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let y0 = oy * stride;
            let y1 = (y0 + kernel).min(h);
            for ox in 0..ow {
                let x0 = ox * stride;
                let x1 = (x0 + kernel).min(w);
                let mut best = base + y0 * w + x0;
                for y in y0..y1 {
                    for xi in x0..x1 {
                        let i = base + y * w + xi;
                        // strict comparison keeps the lowest flat index on ties
                        if data[i] > data[best] {
                            best = i;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    let out_shape = Shape::new(vec![n, c, oh, ow])?;
    let cache = PoolCache {
        argmax,
        in_shape: x.shape().clone(),
        out_shape: out_shape.clone(),
    };
    Ok((Tensor::from_parts(out_shape, out), cache))
}

pub fn maxpool_backward<T: Element>(grad_out: &Tensor<T>, cache: &PoolCache) -> Result<Tensor<T>> {
    check_grad_shape(grad_out, &cache.out_shape, "maxpool")?;
    let mut dx = vec![T::zero(); cache.in_shape.numel()];
    for (&g, &i) in grad_out.data().iter().zip(&cache.argmax) {
        dx[i] = dx[i] + g;
    }
    Ok(Tensor::from_parts(cache.in_shape.clone(), dx))
}
