use std::fmt::Write as _;

use crate::data::FaceDataset;
use crate::error::{Error, Result};
use crate::network::{Activation, ModelParams, NetworkConfig};
use crate::tensor::Element;
use crate::trainer::{train, HyperParams, TrainOptions};

/// Validation-accuracy curves of an MFM build and its ReLU twin.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationComparison {
    /// `(iteration, accuracy_mfm, accuracy_relu)`.
    pub rows: Vec<(usize, f64, f64)>,
}

impl ActivationComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,val_accuracy_mfm,val_accuracy_relu\n");
        for (it, m, r) in &self.rows {
            writeln!(out, "{it},{m},{r}").expect("String write");
        }
        out
    }
}

/// Trains both builds from the same seed on the same data order and aligns
/// their validation histories by iteration.
pub fn compare_activations<T: Element>(
    data: &FaceDataset<T>,
    mfm: &NetworkConfig,
    relu: &NetworkConfig,
    hp: &HyperParams,
) -> Result<ActivationComparison> {
    if mfm.activation() != Some(Activation::Mfm) || relu.activation() != Some(Activation::Relu) {
        return Err(Error::InvalidComparison("expected one MFM and one ReLU build".into()));
    }
    if &mfm.with_activation(Activation::Relu) != relu {
        return Err(Error::InvalidComparison("configs differ beyond the activation".into()));
    }
    let run = |config: &NetworkConfig| -> Result<Vec<(usize, f64)>> {
        let mut model = ModelParams::<T>::init(config.clone(), hp.seed)?;
        Ok(train(&mut model, data, hp, &TrainOptions::default())?.history)
    };
    let (a, b) = (run(mfm)?, run(relu)?);
    let rows = a
        .iter()
        .zip(&b)
        .map(|(&(ia, ma), &(ib, rb))| {
            debug_assert_eq!(ia, ib);
            (ia, ma, rb)
        })
        .collect();
    Ok(ActivationComparison { rows })
}
