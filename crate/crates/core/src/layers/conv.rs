use rayon::prelude::*;

use super::check_grad_shape;
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// Weights `[out_ch, in_ch, kh, kw]`, bias `[out_ch]` and stride of a valid convolution.
#[derive(Debug, Clone)]
pub struct ConvParams<T: Element> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Element> ConvParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        check_conv_params(&weights, &bias, stride)?;
        Ok(ConvParams { weights, bias, stride })
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache<T: Element> {
    input: Tensor<T>,
    weights: Tensor<T>,
    stride: usize,
    out_shape: Shape,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Element> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Output extent of a valid convolution: `floor((size - kernel) / stride) + 1`.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || kernel > size {
        return None;
    }
    Some((size - kernel) / stride + 1)
}

fn check_conv_params<T: Element>(weights: &Tensor<T>, bias: &Tensor<T>, stride: usize) -> Result<()> {
    let (cout, _, _, _) = weights.shape().nchw()?;
    if stride == 0 {
        return Err(Error::InvalidParameter("convolution stride must be >= 1".into()));
    }
    if bias.dims() != [cout] {
        return Err(Error::shape(format!(
            "bias shape {} does not match {cout} output channels",
            bias.shape()
        )));
    }
    Ok(())
}

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one `[cin, h, w]` sample into a `[cin*kh*kw, oh*ow]` matrix.
    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.cin {
            for u in 0..self.kh {
                for v in 0..self.kw {
                    let row = (c * self.kh + u) * self.kw + v;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for y in 0..self.oh {
                        let src = (c * self.h + y * self.stride + u) * self.w + v;
                        for xo in 0..self.ow {
                            dst[y * self.ow + xo] = x[src + xo * self.stride];
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatters-and-adds columns back onto a sample.
    fn col2im<T: Element>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.positions();
        for c in 0..self.cin {
            for u in 0..self.kh {
                for v in 0..self.kw {
                    let row = (c * self.kh + u) * self.kw + v;
                    let src = &cols[row * p..(row + 1) * p];
                    for y in 0..self.oh {
                        let base = (c * self.h + y * self.stride + u) * self.w + v;
                        for xo in 0..self.ow {
                            let i = base + xo * self.stride;
                            dx[i] = dx[i] + src[y * self.ow + xo];
                        }
                    }
                }
            }
        }
    }
}

fn geometry<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, stride: usize) -> Result<Geometry> {
    let (_, cin, h, w) = input.shape().nchw()?;
    let (_, wcin, kh, kw) = weights.shape().nchw()?;
    if cin != wcin {
        return Err(Error::shape(format!(
            "convolution expects {wcin} input channels, got {cin}"
        )));
    }
    let (Some(oh), Some(ow)) = (conv_output_size(h, kh, stride), conv_output_size(w, kw, stride)) else {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} with stride {stride} does not fit a {h}x{w} input"
        )));
    };
    Ok(Geometry {
        cin,
        h,
        w,
        kh,
        kw,
        stride,
        oh,
        ow,
    })
}

pub fn conv2d_forward<T: Element>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
    conv2d(input, &p.weights, &p.bias, p.stride)
}

/// Valid (unpadded) 2-D cross-correlation:
/// `out[n,o,y,x] = bias[o] + sum_{c,u,v} in[n,c,y*s+u,x*s+v] * w[o,c,u,v]`.
///
/// Samples are processed in parallel via im2col + GEMM; each output element is
/// computed by exactly one task so results do not depend on thread count.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    check_conv_params(weights, bias, stride)?;
    let g = geometry(input, weights, stride)?;
    let (n, ..) = input.shape().nchw()?;
    let cout = weights.dims()[0];
    let (k, p) = (g.patch_len(), g.positions());

    let mut out = vec![T::zero(); n * cout * p];
    out.par_chunks_mut(cout * p)
        .zip(input.data().par_chunks(g.cin * g.h * g.w))
        .for_each(|(out_n, x_n)| {
            let mut cols = vec![T::zero(); k * p];
            g.im2col(x_n, &mut cols);
            for (o, row) in out_n.chunks_mut(p).enumerate() {
                row.fill(bias.data()[o]);
            }
            T::gemm(
                false,
                false,
                cout,
                p,
                k,
                T::one(),
                weights.data(),
                &cols,
                T::one(),
                out_n,
            );
        });

    let out_shape = Shape::new(vec![n, cout, g.oh, g.ow])?;
    let cache = ConvCache {
        input: input.clone(),
        weights: weights.clone(),
        stride,
        out_shape: out_shape.clone(),
    };
    Ok((Tensor::from_parts(out_shape, out), cache))
}

/// Gradients of a scalar loss w.r.t. input, weights and bias.
///
/// Per-sample weight/bias gradients are summed in sample order after the
/// parallel section, so the reduction order is fixed.
pub fn conv2d_backward<T: Element>(grad_out: &Tensor<T>, cache: &ConvCache<T>) -> Result<ConvGrads<T>> {
    check_grad_shape(grad_out, &cache.out_shape, "conv2d")?;
    let input = &cache.input;
    let weights = &cache.weights;
    let g = geometry(input, weights, cache.stride)?;
    let cout = weights.dims()[0];
    let (k, p) = (g.patch_len(), g.positions());

    let mut dx = input.zeros_like();
    let partials: Vec<(Vec<T>, Vec<T>)> = dx
        .data_mut()
        .par_chunks_mut(g.cin * g.h * g.w)
        .zip(grad_out.data().par_chunks(cout * p))
        .zip(input.data().par_chunks(g.cin * g.h * g.w))
        .map(|((dx_n, dy_n), x_n)| {
            let mut cols = vec![T::zero(); k * p];
            g.im2col(x_n, &mut cols);
            let mut dw = vec![T::zero(); cout * k];
            T::gemm(false, true, cout, k, p, T::one(), dy_n, &cols, T::zero(), &mut dw);
            let db = dy_n.chunks(p).map(|row| row.iter().copied().sum()).collect();

            let mut dcols = cols;
            T::gemm(
                true,
                false,
                k,
                p,
                cout,
                T::one(),
                weights.data(),
                dy_n,
                T::zero(),
                &mut dcols,
            );
            g.col2im(&dcols, dx_n);
            (dw, db)
        })
        .collect();

    let mut dw = weights.zeros_like();
    let mut db = vec![T::zero(); cout];
    for (dw_n, db_n) in &partials {
        for (a, &b) in dw.data_mut().iter_mut().zip(dw_n) {
            *a = *a + b;
        }
        for (a, &b) in db.iter_mut().zip(db_n) {
            *a = *a + b;
        }
    }
    Ok(ConvGrads {
        input: dx,
        weights: dw,
        bias: Tensor::from_vec(&[cout], db)?,
    })
}
