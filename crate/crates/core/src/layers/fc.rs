use super::check_grad_shape;
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct FcCache<T: Element> {
    input: Tensor<T>,
    weights: Tensor<T>,
    out_shape: Shape,
}

#[derive(Debug, Clone)]
pub struct FcGrads<T: Element> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `out = x * W^T + bias` for `x: [N, D]`, `W: [M, D]`, `bias: [M]`.
pub fn fc_forward<T: Element>(x: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(Tensor<T>, FcCache<T>)> {
    let [n, d] = x.dims()[..] else {
        return Err(Error::shape(format!(
            "fully connected input must be [N, D], got {}",
            x.shape()
        )));
    };
    let [m, wd] = weights.dims()[..] else {
        return Err(Error::shape(format!(
            "fully connected weights must be [M, D], got {}",
            weights.shape()
        )));
    };
    if wd != d {
        return Err(Error::shape(format!(
            "fully connected layer expects {wd} inputs, got {d}"
        )));
    }
    if bias.dims() != [m] {
        return Err(Error::shape(format!(
            "bias shape {} does not match {m} outputs",
            bias.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        false,
        true,
        n,
        m,
        d,
        T::one(),
        x.data(),
        weights.data(),
        T::one(),
        &mut out,
    );
    let out_shape = Shape::new(vec![n, m])?;
    let cache = FcCache {
        input: x.clone(),
        weights: weights.clone(),
        out_shape: out_shape.clone(),
    };
    Ok((Tensor::from_parts(out_shape, out), cache))
}

pub fn fc_backward<T: Element>(grad_out: &Tensor<T>, cache: &FcCache<T>) -> Result<FcGrads<T>> {
    check_grad_shape(grad_out, &cache.out_shape, "fc")?;
    let (n, d) = (cache.input.dims()[0], cache.input.dims()[1]);
    let m = cache.weights.dims()[0];
    let g = grad_out.data();

    let mut dx = cache.input.zeros_like();
    T::gemm(
        false,
        false,
        n,
        d,
        m,
        T::one(),
        g,
        cache.weights.data(),
        T::zero(),
        dx.data_mut(),
    );
    let mut dw = cache.weights.zeros_like();
    T::gemm(
        true,
        false,
        m,
        d,
        n,
        T::one(),
        g,
        cache.input.data(),
        T::zero(),
        dw.data_mut(),
    );
    let mut db = vec![T::zero(); m];
    for row in g.chunks(m) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    Ok(FcGrads {
        input: dx,
        weights: dw,
        bias: Tensor::from_vec(&[m], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_product() {
        let x = Tensor::<f64>::from_vec(&[1, 2], vec![1., 2.]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1., 1., 0., 1.]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0., 1.]).unwrap();
        let (y, _) = fc_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[3., 3.]);
    }

    #[test]
    fn identity_weights() {
        let x = Tensor::<f64>::from_vec(&[1, 3], vec![0.5, -1., 2.]).unwrap();
        let w = Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let (y, _) = fc_forward(&x, &w, &Tensor::zeros(&[3]).unwrap()).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn paper_fc1_shape() {
        let x = Tensor::<f32>::zeros(&[1, 4800]).unwrap();
        let w = Tensor::zeros(&[256, 4800]).unwrap();
        let (y, _) = fc_forward(&x, &w, &Tensor::zeros(&[256]).unwrap()).unwrap();
        assert_eq!(y.dims(), &[1, 256]);
    }

    #[test]
    fn backward_by_hand() {
        let x = Tensor::<f64>::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![0.5, -1.]).unwrap();
        let (_, cache) = fc_forward(&x, &w, &Tensor::zeros(&[1]).unwrap()).unwrap();
        let g = Tensor::from_vec(&[2, 1], vec![1., 2.]).unwrap();
        let grads = fc_backward(&g, &cache).unwrap();
        assert_eq!(grads.input.data(), &[0.5, -1., 1., -2.]);
        assert_eq!(grads.weights.data(), &[7., 10.]);
        assert_eq!(grads.bias.data(), &[3.]);
    }

    #[test]
    fn dimension_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 3]).unwrap();
        let w = Tensor::zeros(&[2, 4]).unwrap();
        assert!(matches!(
            fc_forward(&x, &w, &Tensor::zeros(&[2]).unwrap()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
