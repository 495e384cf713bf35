use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{conv_output_size, pool_output_size};
use crate::tensor::DEFAULT_FC_STD;

/// Nonlinearity applied after each convolution block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Mfm,
    Relu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Mfm => "mfm",
            Activation::Relu => "relu",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfm" => Ok(Activation::Mfm),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidParameter(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    /// Two parallel convolutions with `channels` outputs each, merged by Max-Feature-Map.
    ConvPairMfm {
        kernel: usize,
        stride: usize,
        channels: usize,
    },
    /// Single convolution followed by ReLU (baseline variant).
    ReluConv {
        kernel: usize,
        stride: usize,
        channels: usize,
    },
    Maxpool {
        kernel: usize,
        stride: usize,
    },
    Fc {
        units: usize,
    },
    Dropout {
        ratio: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    fn new(name: &str, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind,
        }
    }
}

/// Declarative description of the network stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Aligned image extent `(height, width)`.
    pub input_size: (usize, usize),
    /// Extent fed to the first convolution after cropping.
    pub crop_size: (usize, usize),
    pub num_classes: usize,
    #[serde(default = "default_fc_std")]
    pub fc_init_std: f64,
    pub layers: Vec<LayerSpec>,
}

fn default_fc_std() -> f64 {
    DEFAULT_FC_STD
}

/// One row of the per-layer shape table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub name: String,
    pub kind: &'static str,
    /// `(kernel, stride)` for convolution and pooling rows.
    pub filter: Option<(usize, usize)>,
    /// `[C, H, W]` for feature maps, `[units]` after flattening.
    pub output: Vec<usize>,
}

impl TraceRow {
    fn new(name: impl Into<String>, kind: &'static str, filter: Option<(usize, usize)>, output: Vec<usize>) -> Self {
        TraceRow {
            name: name.into(),
            kind,
            filter,
            output,
        }
    }

    /// `HxWxC` for feature maps, the unit count otherwise.
    pub fn output_label(&self) -> String {
        match self.output[..] {
            [c, h, w] => format!("{h}x{w}x{c}"),
            [units] => units.to_string(),
            _ => format!("{:?}", self.output),
        }
    }
}

fn conv(name: &str, kernel: usize, channels: usize, activation: Activation) -> LayerSpec {
    let kind = match activation {
        Activation::Mfm => LayerKind::ConvPairMfm {
            kernel,
            stride: 1,
            channels,
        },
        Activation::Relu => LayerKind::ReluConv {
            kernel,
            stride: 1,
            channels,
        },
    };
    LayerSpec::new(name, kind)
}

fn pool(name: &str) -> LayerSpec {
    LayerSpec::new(name, LayerKind::Maxpool { kernel: 2, stride: 2 })
}

fn fc(name: &str, units: usize) -> LayerSpec {
    LayerSpec::new(name, LayerKind::Fc { units })
}

fn dropout(ratio: f64) -> LayerSpec {
    LayerSpec::new("drop1", LayerKind::Dropout { ratio })
}

impl NetworkConfig {
    /// The full face network: four convolution blocks on 128x128 crops of
    /// 144x144 inputs, a 256-unit embedding and a `num_classes` classifier.
    pub fn paper(num_classes: usize, activation: Activation) -> Self {
        NetworkConfig {
            input_size: (144, 144),
            crop_size: (128, 128),
            num_classes,
            fc_init_std: DEFAULT_FC_STD,
            layers: vec![
                conv("conv1", 9, 48, activation),
                pool("pool1"),
                conv("conv2", 5, 96, activation),
                pool("pool2"),
                conv("conv3", 5, 128, activation),
                pool("pool3"),
                conv("conv4", 4, 192, activation),
                pool("pool4"),
                fc("fc1", 256),
                dropout(0.7),
                fc("fc2", num_classes),
            ],
        }
    }

    /// Scaled-down stack for desk-scale experiments: 36x36 inputs, 32x32 crops,
    /// two convolution blocks and a 64-unit embedding.
    pub fn toy(num_classes: usize, activation: Activation) -> Self {
        NetworkConfig {
            input_size: (36, 36),
            crop_size: (32, 32),
            num_classes,
            fc_init_std: DEFAULT_FC_STD,
            layers: vec![
                conv("conv1", 5, 6, activation),
                pool("pool1"),
                conv("conv2", 3, 12, activation),
                pool("pool2"),
                fc("fc1", 64),
                dropout(0.7),
                fc("fc2", num_classes),
            ],
        }
    }

    /// Smallest stack used for end-to-end finite-difference checks: 16x16
    /// inputs, two convolution blocks, `num_classes` outputs.
    pub fn tiny(num_classes: usize, activation: Activation) -> Self {
        NetworkConfig {
            input_size: (16, 16),
            crop_size: (16, 16),
            num_classes,
            fc_init_std: 0.3,
            layers: vec![
                conv("conv1", 3, 2, activation),
                pool("pool1"),
                conv("conv2", 3, 3, activation),
                pool("pool2"),
                fc("fc1", 5),
                dropout(0.5),
                fc("fc2", num_classes),
            ],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: NetworkConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("network config always serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    /// The activation shared by every convolution block, if uniform.
    pub fn activation(&self) -> Option<Activation> {
        let mut found = None;
        for layer in &self.layers {
            let act = match layer.kind {
                LayerKind::ConvPairMfm { .. } => Activation::Mfm,
                LayerKind::ReluConv { .. } => Activation::Relu,
                _ => continue,
            };
            match found {
                None => found = Some(act),
                Some(prev) if prev != act => return None,
                _ => {}
            }
        }
        found
    }

    /// Same stack with every convolution block switched to `activation`.
    pub fn with_activation(&self, activation: Activation) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.kind = match layer.kind {
                LayerKind::ConvPairMfm {
                    kernel,
                    stride,
                    channels,
                }
                | LayerKind::ReluConv {
                    kernel,
                    stride,
                    channels,
                } => match activation {
                    Activation::Mfm => LayerKind::ConvPairMfm {
                        kernel,
                        stride,
                        channels,
                    },
                    Activation::Relu => LayerKind::ReluConv {
                        kernel,
                        stride,
                        channels,
                    },
                },
                ref other => other.clone(),
            };
        }
        out
    }

    pub fn set_dropout(&mut self, ratio: f64) {
        for layer in &mut self.layers {
            if let LayerKind::Dropout { ratio: r } = &mut layer.kind {
                *r = ratio;
            }
        }
    }

    /// Index into `layers` of the embedding layer: the last fully connected
    /// layer before the classifier.
    pub fn embedding_layer(&self) -> Option<usize> {
        let mut fcs = self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l.kind, LayerKind::Fc { .. }))
            .map(|(i, _)| i)
            .rev();
        fcs.next();
        fcs.next()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_layer().map(|i| match self.layers[i].kind {
            LayerKind::Fc { units } => units,
            _ => unreachable!(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if !(self.fc_init_std > 0.0 && self.fc_init_std.is_finite()) {
            return bad(format!("fc_init_std must be positive, got {}", self.fc_init_std));
        }
        let mut names = HashSet::new();
        for layer in &self.layers {
            if layer.name.is_empty() || layer.name.contains(char::is_whitespace) {
                return bad(format!("invalid layer name {:?}", layer.name));
            }
            if !names.insert(layer.name.as_str()) {
                return bad(format!("duplicate layer name {:?}", layer.name));
            }
            if let LayerKind::Dropout { ratio } = layer.kind {
                if !(0.0..1.0).contains(&ratio) {
                    return bad(format!("dropout ratio {ratio} outside [0, 1)"));
                }
            }
        }
        match self.layers.last() {
            Some(LayerSpec {
                kind: LayerKind::Fc { units },
                ..
            }) if *units == self.num_classes => {}
            _ => {
                return bad(format!(
                    "the final layer must be fully connected with num_classes = {} units",
                    self.num_classes
                ))
            }
        }
        if self.embedding_layer().is_none() {
            return bad("an embedding layer (fully connected, before the classifier) is required".into());
        }
        self.shape_trace().map(|_| ())
    }

    /// Static shape propagation through the whole stack, including the input,
    /// crop and loss rows.
    pub fn shape_trace(&self) -> Result<Vec<TraceRow>> {
        let bad = |msg: String| Error::InvalidConfig(msg);
        let (ih, iw) = self.input_size;
        let (ch, cw) = self.crop_size;
        if ih == 0 || iw == 0 || ch == 0 || cw == 0 || ch > ih || cw > iw {
            return Err(bad(format!(
                "crop {:?} must be non-empty and fit input {:?}",
                self.crop_size, self.input_size
            )));
        }
        let mut rows = vec![
            TraceRow::new("input", "-", None, vec![1, ih, iw]),
            TraceRow::new("crop", "-", None, vec![1, ch, cw]),
        ];
        let mut cur = vec![1, ch, cw];
        let mut block = 0;
        for layer in &self.layers {
            let name = layer.name.as_str();
            match layer.kind {
                LayerKind::ConvPairMfm {
                    kernel,
                    stride,
                    channels,
                }
                | LayerKind::ReluConv {
                    kernel,
                    stride,
                    channels,
                } => {
                    let [_, h, w] = cur[..] else {
                        return Err(bad(format!("{name}: convolution after flattening")));
                    };
                    if channels == 0 {
                        return Err(bad(format!("{name}: zero channels")));
                    }
                    let (Some(oh), Some(ow)) =
                        (conv_output_size(h, kernel, stride), conv_output_size(w, kernel, stride))
                    else {
                        return Err(bad(format!("{name}: kernel {kernel}/{stride} does not fit {h}x{w}")));
                    };
                    block += 1;
                    cur = vec![channels, oh, ow];
                    let filter = Some((kernel, stride));
                    if matches!(layer.kind, LayerKind::ConvPairMfm { .. }) {
                        rows.push(TraceRow::new(format!("{name}_1"), "convolution", filter, cur.clone()));
                        rows.push(TraceRow::new(format!("{name}_2"), "convolution", filter, cur.clone()));
                        rows.push(TraceRow::new(format!("mfm{block}"), "MFM", None, cur.clone()));
                    } else {
                        rows.push(TraceRow::new(name, "convolution", filter, cur.clone()));
                        rows.push(TraceRow::new(format!("relu{block}"), "ReLU", None, cur.clone()));
                    }
                }
                LayerKind::Maxpool { kernel, stride } => {
                    let [c, h, w] = cur[..] else {
                        return Err(bad(format!("{name}: pooling after flattening")));
                    };
                    let (Some(oh), Some(ow)) =
                        (pool_output_size(h, kernel, stride), pool_output_size(w, kernel, stride))
                    else {
                        return Err(bad(format!("{name}: window {kernel}/{stride} does not fit {h}x{w}")));
                    };
                    cur = vec![c, oh, ow];
                    rows.push(TraceRow::new(name, "max pooling", Some((kernel, stride)), cur.clone()));
                }
                LayerKind::Fc { units } => {
                    if units == 0 {
                        return Err(bad(format!("{name}: zero units")));
                    }
                    cur = vec![units];
                    rows.push(TraceRow::new(name, "fully connected", None, cur.clone()));
                }
                LayerKind::Dropout { .. } => {
                    rows.push(TraceRow::new(name, "dropout", None, cur.clone()));
                }
            }
        }
        rows.push(TraceRow::new("loss", "softmax", None, vec![self.num_classes]));
        Ok(rows)
    }
}
