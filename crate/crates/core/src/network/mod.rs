//! The face network: configuration, parameters, forward/backward passes and
//! checkpoint files.

mod config;
mod file;
mod forward;
mod model;

pub use config::{Activation, LayerKind, LayerSpec, NetworkConfig, TraceRow};
pub use file::{decode_model, encode_model, load_model, model_precision, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use forward::{
    backward, backward_with_input, extract_embedding, forward_logits, forward_trace, ForwardCache, ForwardTrace,
};
pub use model::{
    build_paper_network, count_params, DecayGroup, LayerParamCount, ModelParams, Param, ParamCount,
    PAPER_REPORTED_PARAMS,
};
