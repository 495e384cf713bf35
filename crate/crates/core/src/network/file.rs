//! Self-describing model checkpoints.
//!
//! ```text
//! "MFMM" | version u8 | bytes-per-element u8
//! config length u32 LE | config as TOML (UTF-8)
//! tensor count u32 LE
//! per tensor: name length u16 LE | name | decay group u8 | tensor record ("MFMT" format)
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use super::config::NetworkConfig;
use super::model::{param_layout, DecayGroup, ModelParams, Param};
use crate::error::{Error, Result};
use crate::tensor::{read_tensor_from, write_tensor_to, Element};

pub const MODEL_MAGIC: &[u8; 4] = b"MFMM";
pub const MODEL_VERSION: u8 = 1;

pub fn encode_model<T: Element>(model: &ModelParams<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.push(MODEL_VERSION);
    buf.push(T::BYTES);
    let config = model.config.to_toml_string();
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(config.as_bytes());
    buf.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for p in &model.params {
        buf.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(p.decay.code());
        write_tensor_to(&p.value, &mut buf).expect("writing to a Vec cannot fail");
    }
    buf
}

pub fn save_model<T: Element>(model: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

fn take<'a>(input: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::Truncated(format!("while reading {what}")));
    }
    let (head, rest) = input.split_at(n);
    *input = rest;
    Ok(head)
}

struct Header<'a> {
    precision: u8,
    rest: &'a [u8],
}

fn read_header(bytes: &[u8]) -> Result<Header<'_>> {
    let mut input = bytes;
    let magic = take(&mut input, 4, "model magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::MagicMismatch {
            expected: String::from_utf8_lossy(MODEL_MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = take(&mut input, 1, "model version")?[0];
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let precision = take(&mut input, 1, "model precision")?[0];
    Ok(Header { precision, rest: input })
}

/// Bytes per element (4 or 8) stored in a model file.
pub fn model_precision(path: impl AsRef<Path>) -> Result<u8> {
    let path = path.as_ref();
    let mut head = Vec::with_capacity(6);
    fs::File::open(path)
        .and_then(|f| f.take(6).read_to_end(&mut head))
        .map_err(|e| Error::io(path, e))?;
    Ok(read_header(&head)?.precision)
}

pub fn decode_model<T: Element>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let header = read_header(bytes)?;
    if header.precision != T::BYTES {
        return Err(Error::PrecisionMismatch {
            expected: T::BYTES,
            found: header.precision,
        });
    }
    let mut input = header.rest;
    let len = u32::from_le_bytes(take(&mut input, 4, "config length")?.try_into().unwrap()) as usize;
    let text = std::str::from_utf8(take(&mut input, len, "config")?)
        .map_err(|e| Error::InvalidConfig(format!("config is not UTF-8: {e}")))?;
    let config = NetworkConfig::from_toml_str(text)?;
    let layout = param_layout(&config)?;

    let count = u32::from_le_bytes(take(&mut input, 4, "tensor count")?.try_into().unwrap()) as usize;
    if count != layout.len() {
        return Err(Error::ShapeInconsistency(format!(
            "config requires {} tensors, file holds {count}",
            layout.len()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for slot in &layout {
        let name_len = u16::from_le_bytes(take(&mut input, 2, "tensor name length")?.try_into().unwrap()) as usize;
        let name = String::from_utf8_lossy(take(&mut input, name_len, "tensor name")?).into_owned();
        let decay = DecayGroup::from_code(take(&mut input, 1, "decay group")?[0])
            .ok_or_else(|| Error::InvalidInput(format!("unknown decay group for {name}")))?;
        let value = read_tensor_from(&mut input)?;
        if name != slot.name || value.dims() != slot.dims.as_slice() || decay != slot.decay {
            return Err(Error::ShapeInconsistency(format!(
                "config expects {} {:?}, file holds {name} {}",
                slot.name,
                slot.dims,
                value.shape()
            )));
        }
        params.push(Param { name, value, decay });
    }
    if !input.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} trailing bytes after model",
            input.len()
        )));
    }
    Ok(ModelParams { config, params })
}

pub fn load_model<T: Element>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetworkConfig};

    fn toy() -> ModelParams<f32> {
        ModelParams::init(NetworkConfig::toy(10, Activation::Mfm), 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = toy();
        let back: ModelParams<f32> = decode_model(&encode_model(&m)).unwrap();
        assert!(m.bit_eq(&back));
        assert_eq!(m.count_params(), back.count_params());
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = encode_model(&toy());
        bytes[1] = b'?';
        assert!(matches!(decode_model::<f32>(&bytes), Err(Error::MagicMismatch { .. })));
    }

    #[test]
    fn version_and_precision() {
        let mut bytes = encode_model(&toy());
        bytes[4] = 9;
        assert!(matches!(
            decode_model::<f32>(&bytes),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        let bytes = encode_model(&toy());
        assert!(matches!(
            decode_model::<f64>(&bytes),
            Err(Error::PrecisionMismatch { .. })
        ));
    }

    #[test]
    fn truncated_file() {
        let bytes = encode_model(&toy());
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_model::<f32>(&bytes[..cut]), Err(Error::Truncated(_))),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn edited_num_classes_is_inconsistent() {
        let m = toy();
        let mut edited = m.config.clone();
        edited.num_classes = 12;
        if let Some(last) = edited.layers.last_mut() {
            last.kind = crate::network::LayerKind::Fc { units: 12 };
        }
        let mut bytes = encode_model(&m);
        let old = m.config.to_toml_string();
        let new = edited.to_toml_string();
        let start = 6 + 4;
        let mut patched = bytes[..6].to_vec();
        patched.extend_from_slice(&(new.len() as u32).to_le_bytes());
        patched.extend_from_slice(new.as_bytes());
        patched.extend_from_slice(&bytes.split_off(start + old.len()));
        assert!(matches!(
            decode_model::<f32>(&patched),
            Err(Error::ShapeInconsistency(_))
        ));
    }
}
