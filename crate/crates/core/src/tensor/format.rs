//! Binary tensor format.
//!
//! ```text
//! "MFMT" | version u8 | bytes-per-element u8 (4|8) | rank u8 | rank x dim u32 LE | data LE
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Element, Shape, Tensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"MFMT";
pub const TENSOR_VERSION: u8 = 1;

/// Appends the encoded tensor to `out`.
pub fn write_tensor_to<T: Element, W: Write>(tensor: &Tensor<T>, out: &mut W) -> std::io::Result<()> {
    let dims = tensor.dims();
    let rank = u8::try_from(dims.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "rank exceeds 255"))?;
    let mut buf = Vec::with_capacity(7 + 4 * dims.len() + tensor.numel() * T::BYTES as usize);
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.push(TENSOR_VERSION);
    buf.push(T::BYTES);
    buf.push(rank);
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)
}

pub fn write_tensor<T: Element>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tensor_to(tensor, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!("while reading {what}")),
        _ => Error::io("<stream>", e),
    })
}

/// Decodes one tensor from the stream, leaving the reader just past it.
pub fn read_tensor_from<T: Element, R: Read>(input: &mut R) -> Result<Tensor<T>> {
    let mut head = [0u8; 7];
    read_exact(input, &mut head, "tensor header")?;
    if &head[..4] != TENSOR_MAGIC {
        return Err(Error::MagicMismatch {
            expected: String::from_utf8_lossy(TENSOR_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&head[..4]).into_owned(),
        });
    }
    if head[4] != TENSOR_VERSION {
        return Err(Error::VersionMismatch {
            expected: TENSOR_VERSION,
            found: head[4],
        });
    }
    if head[5] != T::BYTES {
        return Err(Error::PrecisionMismatch {
            expected: T::BYTES,
            found: head[5],
        });
    }
    let rank = head[6] as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut d = [0u8; 4];
        read_exact(input, &mut d, "tensor dims")?;
        dims.push(u32::from_le_bytes(d) as usize);
    }
    let shape = Shape::new(dims)?;
    let width = T::BYTES as usize;
    let mut raw = vec![0u8; shape.numel() * width];
    read_exact(input, &mut raw, "tensor data")?;
    let data = raw.chunks_exact(width).map(T::read_le).collect();
    Ok(Tensor::from_parts(shape, data))
}

pub fn read_tensor<T: Element>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = &bytes[..];
    let t = read_tensor_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: {} trailing bytes after tensor",
            path.display(),
            cursor.len()
        )));
    }
    Ok(t)
}
