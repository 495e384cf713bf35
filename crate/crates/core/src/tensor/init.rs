//! Seeded weight initializers.
//!
//! All randomness comes from ChaCha8 seeded through `seed_from_u64`, which
//! yields the same stream on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Element, Shape, Tensor};
use crate::error::{Error, Result};

/// Standard deviation used for fully-connected weights unless configured otherwise.
pub const DEFAULT_FC_STD: f64 = 0.01;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Half-width of the Xavier uniform range for a `[out, in, kh, kw]` weight.
pub fn xavier_bound(shape: &Shape) -> Result<f64> {
    let [_, cin, kh, kw] = shape.dims()[..] else {
        return Err(Error::InvalidShape {
            dims: shape.dims().to_vec(),
            reason: "Xavier initialization expects [out_ch, in_ch, kh, kw]".into(),
        });
    };
    let fan_in = (cin * kh * kw) as f64;
    Ok((3.0 / fan_in).sqrt())
}

/// Uniform on `[-sqrt(3/fan_in), sqrt(3/fan_in)]` with `fan_in = in_ch * kh * kw`.
pub fn init_xavier<T: Element>(dims: &[usize], seed: u64) -> Result<Tensor<T>> {
    let shape = Shape::new(dims.to_vec())?;
    let bound = xavier_bound(&shape)?;
    let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let data = (0..shape.numel()).map(|_| T::of(dist.sample(&mut rng))).collect();
    Ok(Tensor::from_parts(shape, data))
}

/// I.i.d. `N(0, std^2)` values.
pub fn init_gaussian<T: Element>(dims: &[usize], std: f64, seed: u64) -> Result<Tensor<T>> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Gaussian std must be positive and finite, got {std}"
        )));
    }
    let shape = Shape::new(dims.to_vec())?;
    let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let data = (0..shape.numel()).map(|_| T::of(dist.sample(&mut rng))).collect();
    Ok(Tensor::from_parts(shape, data))
}
