use std::fmt;

use rand::Rng;

use super::config::{Activation, LayerKind, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{init_gaussian, init_xavier, rng_from_seed, Element, Tensor};

/// Which weight-decay coefficient applies to a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayGroup {
    /// Convolution and embedding weights.
    Default,
    /// Weights of the final classifier layer.
    Classifier,
    /// Biases.
    Exempt,
}

impl DecayGroup {
    pub(crate) fn code(self) -> u8 {
        match self {
            DecayGroup::Default => 0,
            DecayGroup::Classifier => 1,
            DecayGroup::Exempt => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DecayGroup::Default),
            1 => Some(DecayGroup::Classifier),
            2 => Some(DecayGroup::Exempt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Param<T: Element> {
    pub name: String,
    pub value: Tensor<T>,
    pub decay: DecayGroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum InitKind {
    Xavier,
    Gaussian,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ParamSlot {
    pub name: String,
    pub dims: Vec<usize>,
    pub decay: DecayGroup,
    pub init: InitKind,
    /// Index into `NetworkConfig::layers` owning this tensor.
    pub layer: usize,
}

/// Parameter tensors required by `config`, in declaration order.
pub(crate) fn param_layout(config: &NetworkConfig) -> Result<Vec<ParamSlot>> {
    config.validate()?;
    let classifier = config.layers.len() - 1;
    let mut slots = Vec::new();
    let mut channels = 1;
    let (mut h, mut w) = config.crop_size;
    let mut flat: Option<usize> = None;
    let slot = |name: String, dims: Vec<usize>, decay, init, layer| ParamSlot {
        name,
        dims,
        decay,
        init,
        layer,
    };
    for (i, layer) in config.layers.iter().enumerate() {
        match layer.kind {
            LayerKind::ConvPairMfm {
                kernel,
                stride,
                channels: out,
            }
            | LayerKind::ReluConv {
                kernel,
                stride,
                channels: out,
            } => {
                let names: Vec<String> = if matches!(layer.kind, LayerKind::ConvPairMfm { .. }) {
                    vec![format!("{}_1", layer.name), format!("{}_2", layer.name)]
                } else {
                    vec![layer.name.clone()]
                };
                for n in names {
                    slots.push(slot(
                        format!("{n}.weight"),
                        vec![out, channels, kernel, kernel],
                        DecayGroup::Default,
                        InitKind::Xavier,
                        i,
                    ));
                    slots.push(slot(
                        format!("{n}.bias"),
                        vec![out],
                        DecayGroup::Exempt,
                        InitKind::Zero,
                        i,
                    ));
                }
                channels = out;
                h = (h - kernel) / stride + 1;
                w = (w - kernel) / stride + 1;
            }
            LayerKind::Maxpool { kernel, stride } => {
                h = crate::layers::pool_output_size(h, kernel, stride).expect("validated");
                w = crate::layers::pool_output_size(w, kernel, stride).expect("validated");
            }
            LayerKind::Fc { units } => {
                let inputs = flat.unwrap_or(channels * h * w);
                let decay = if i == classifier {
                    DecayGroup::Classifier
                } else {
                    DecayGroup::Default
                };
                slots.push(slot(
                    format!("{}.weight", layer.name),
                    vec![units, inputs],
                    decay,
                    InitKind::Gaussian,
                    i,
                ));
                slots.push(slot(
                    format!("{}.bias", layer.name),
                    vec![units],
                    DecayGroup::Exempt,
                    InitKind::Zero,
                    i,
                ));
                flat = Some(units);
            }
            LayerKind::Dropout { .. } => {}
        }
    }
    Ok(slots)
}

/// Named parameter tensors instantiating a [`NetworkConfig`].
#[derive(Debug, Clone)]
pub struct ModelParams<T: Element = f32> {
    pub(crate) config: NetworkConfig,
    pub(crate) params: Vec<Param<T>>,
}

impl<T: Element> ModelParams<T> {
    /// Convolution weights are Xavier-uniform, fully connected weights
    /// Gaussian with `config.fc_init_std`, biases zero.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let layout = param_layout(&config)?;
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(layout.len());
        for slot in layout {
            let tensor_seed: u64 = rng.random();
            let value = match slot.init {
                InitKind::Xavier => init_xavier(&slot.dims, tensor_seed)?,
                InitKind::Gaussian => init_gaussian(&slot.dims, config.fc_init_std, tensor_seed)?,
                InitKind::Zero => Tensor::zeros(&slot.dims)?,
            };
            params.push(Param {
                name: slot.name,
                value,
                decay: slot.decay,
            });
        }
        Ok(ModelParams { config, params })
    }

    /// Assembles a model from existing tensors, checking them against the config.
    pub fn from_params(config: NetworkConfig, params: Vec<Param<T>>) -> Result<Self> {
        let layout = param_layout(&config)?;
        if layout.len() != params.len() {
            return Err(Error::ShapeInconsistency(format!(
                "config requires {} tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        for (slot, p) in layout.iter().zip(&params) {
            if slot.name != p.name || slot.dims != p.value.dims() || slot.decay != p.decay {
                return Err(Error::ShapeInconsistency(format!(
                    "expected {} {:?}, found {} {}",
                    slot.name,
                    slot.dims,
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(ModelParams { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn set_dropout(&mut self, ratio: f64) -> Result<()> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidParameter(format!(
                "dropout ratio must be in [0, 1), got {ratio}"
            )));
        }
        self.config.set_dropout(ratio);
        Ok(())
    }

    pub fn count_params(&self) -> ParamCount {
        count_params(&self.config).expect("model config was validated at construction")
    }

    /// Same weights in another precision.
    pub fn cast<U: Element>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    decay: p.decay,
                })
                .collect(),
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.decay == b.decay && a.value.bit_eq(&b.value))
    }
}

/// Builds the full face network with `num_classes` outputs.
pub fn build_paper_network<T: Element>(
    num_classes: usize,
    activation: Activation,
    seed: u64,
) -> Result<ModelParams<T>> {
    ModelParams::init(NetworkConfig::paper(num_classes, activation), seed)
}

/// Parameter count reported alongside the derived total.
pub const PAPER_REPORTED_PARAMS: &str = "4153K";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParamCount {
    pub layer: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<LayerParamCount>,
    pub total: usize,
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.per_layer {
            writeln!(f, "{:<8} {:>10}", row.layer, row.count)?;
        }
        writeln!(f, "{:<8} {:>10}", "total", self.total)?;
        write!(
            f,
            "derived total {:.2}M parameters; originally reported figure: {PAPER_REPORTED_PARAMS} (not expected to match)",
            self.total as f64 / 1e6
        )
    }
}

/// Exact weight and bias element counts, itemized per parametric layer.
pub fn count_params(config: &NetworkConfig) -> Result<ParamCount> {
    let layout = param_layout(config)?;
    let mut per_layer: Vec<LayerParamCount> = Vec::new();
    for slot in &layout {
        let name = &config.layers[slot.layer].name;
        let n: usize = slot.dims.iter().product();
        match per_layer.last_mut() {
            Some(last) if &last.layer == name => last.count += n,
            _ => per_layer.push(LayerParamCount {
                layer: name.clone(),
                count: n,
            }),
        }
    }
    let total = per_layer.iter().map(|l| l.count).sum();
    Ok(ParamCount { per_layer, total })
}
