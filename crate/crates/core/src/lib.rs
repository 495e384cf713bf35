//! Max-Feature-Map convolutional networks for face representation learning.
//!
//! The crate covers the full pipeline: landmark-based face alignment
//! ([`data`]), the layer kernels ([`layers`]), the network stack and its
//! checkpoint format ([`network`]), SGD training ([`trainer`]) and
//! verification metrics ([`eval`]). [`gradcheck`] validates every backward
//! pass against central finite differences.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use layers::Mode;
pub use network::{Activation, ModelParams, NetworkConfig};
pub use tensor::{Element, Shape, Tensor};
