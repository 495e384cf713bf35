use rand::Rng;

use super::{check_grad_shape, Mode};
use crate::error::{Error, Result};
use crate::tensor::{rng_from_seed, Element, Shape, Tensor};

/// Per-element multiplier: `0` for dropped units, `1 / (1 - ratio)` for survivors.
#[derive(Debug, Clone)]
pub struct DropoutCache<T: Element> {
    mask: Vec<T>,
    shape: Shape,
}

impl<T: Element> DropoutCache<T> {
    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&m| m != T::zero()).count()
    }
}

/// Inverted dropout. In eval mode (or with `ratio == 0`) this is the identity.
pub fn dropout_forward<T: Element>(
    x: &Tensor<T>,
    ratio: f64,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor<T>, DropoutCache<T>)> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!(
            "dropout ratio must be in [0, 1), got {ratio}"
        )));
    }
    let mask: Vec<T> = if mode == Mode::Eval || ratio == 0.0 {
        vec![T::one(); x.numel()]
    } else {
        let mut rng = rng_from_seed(seed);
        let keep = T::of(1.0 / (1.0 - ratio));
        (0..x.numel())
            .map(|_| if rng.random::<f64>() < ratio { T::zero() } else { keep })
            .collect()
    };
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    let cache = DropoutCache {
        mask,
        shape: x.shape().clone(),
    };
    Ok((Tensor::from_parts(x.shape().clone(), data), cache))
}

pub fn dropout_backward<T: Element>(grad_out: &Tensor<T>, cache: &DropoutCache<T>) -> Result<Tensor<T>> {
    check_grad_shape(grad_out, &cache.shape, "dropout")?;
    let data = grad_out.data().iter().zip(&cache.mask).map(|(&g, &m)| g * m).collect();
    Ok(Tensor::from_parts(cache.shape.clone(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_zero_ratio_are_identity() {
        let x = Tensor::<f64>::from_vec(&[4], vec![1., -2., 3., 0.5]).unwrap();
        let (y, _) = dropout_forward(&x, 0.7, Mode::Eval, 1).unwrap();
        assert_eq!(y.data(), x.data());
        let (y, cache) = dropout_forward(&x, 0.0, Mode::Train, 1).unwrap();
        assert_eq!(y.data(), x.data());
        assert_eq!(cache.kept(), 4);
    }

    #[test]
    fn survivor_fraction_within_binomial_band() {
        let n = 100_000;
        let x = Tensor::<f32>::full(&[n], 1.0).unwrap();
        let (_, cache) = dropout_forward(&x, 0.7, Mode::Train, 42).unwrap();
        let frac = cache.kept() as f64 / n as f64;
        assert!((0.29..=0.31).contains(&frac), "survivor fraction {frac}");
    }

    #[test]
    fn train_expectation_matches_eval() {
        let x = Tensor::<f64>::from_vec(&[1000], (0..1000).map(|i| 0.5 + (i as f64) / 1000.0).collect()).unwrap();
        let trials = 10_000;
        let mut acc = vec![0.0; x.numel()];
        for seed in 0..trials {
            let (y, _) = dropout_forward(&x, 0.7, Mode::Train, seed).unwrap();
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        let train_mean: f64 = acc.iter().sum::<f64>() / trials as f64;
        let eval_total = x.sum();
        assert!(
            ((train_mean - eval_total) / eval_total).abs() < 0.01,
            "{train_mean} vs {eval_total}"
        );
    }

    #[test]
    fn backward_applies_same_mask() {
        let x = Tensor::<f64>::full(&[32], 1.0).unwrap();
        let (y, cache) = dropout_forward(&x, 0.5, Mode::Train, 9).unwrap();
        let g = dropout_backward(&Tensor::full(&[32], 1.0).unwrap(), &cache).unwrap();
        assert_eq!(g.data(), y.data());
    }

    #[test]
    fn rejects_bad_ratio() {
        let x = Tensor::<f32>::zeros(&[2]).unwrap();
        assert!(matches!(
            dropout_forward(&x, 1.0, Mode::Train, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(dropout_forward(&x, -0.1, Mode::Train, 0).is_err());
    }
}
