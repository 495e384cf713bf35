//! Forward and backward passes for every layer kind in the face network.
//!
//! Each forward function returns its output together with a layer-specific
//! cache type; the matching backward function only accepts that cache type,
//! and checks the upstream gradient against the shape recorded in it.

mod augment;
mod conv;
mod dropout;
mod fc;
mod loss;
mod mfm;
mod pool;
mod relu;

pub use augment::{crop_mirror, crop_window, mirror_horizontal, CropSpec, CropWindow};
pub use conv::{conv2d, conv2d_backward, conv2d_forward, conv_output_size, ConvCache, ConvGrads, ConvParams};
pub use dropout::{dropout_backward, dropout_forward, DropoutCache};
pub use fc::{fc_backward, fc_forward, FcCache, FcGrads};
pub use loss::softmax_xent;
pub use mfm::{mfm_backward, mfm_forward, MfmCache};
pub use pool::{maxpool_backward, maxpool_forward, pool_output_size, PoolCache};
pub use relu::{relu_backward, relu_forward, ReluCache};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// Whether stochastic layers (dropout, random crop/mirror) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn check_grad_shape<T: Element>(grad: &Tensor<T>, expected: &Shape, layer: &str) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::shape(format!(
            "{layer} backward: gradient shape {} does not match forward output {expected}",
            grad.shape()
        )));
    }
    Ok(())
}
