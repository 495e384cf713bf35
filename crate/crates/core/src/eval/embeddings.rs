use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor_from, write_tensor_to, Element, Tensor};

/// Companion file listing one sample name per record: `<path>.index`.
pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

/// Writes the embeddings as back-to-back tensor records to `path` and their
/// names, one per line and in the same order, to [`index_path`].
pub fn write_embeddings<T: Element>(path: impl AsRef<Path>, items: &[(String, Tensor<T>)]) -> Result<()> {
    let path = path.as_ref();
    let mut data = Vec::new();
    let mut index = String::new();
    for (name, t) in items {
        if name.contains('\n') {
            return Err(Error::InvalidInput(format!("sample name {name:?} contains a newline")));
        }
        write_tensor_to(t, &mut data).expect("writing to a Vec cannot fail");
        index.push_str(name);
        index.push('\n');
    }
    fs::write(path, data).map_err(|e| Error::io(path, e))?;
    let ipath = index_path(path);
    fs::write(&ipath, index).map_err(|e| Error::io(&ipath, e))
}

pub fn read_embeddings<T: Element>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    let path = path.as_ref();
    let ipath = index_path(path);
    let index = fs::read_to_string(&ipath).map_err(|e| Error::io(&ipath, e))?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    for name in index.lines() {
        out.push((name.to_string(), read_tensor_from(&mut reader)?));
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::InvalidInput(format!(
            "{} holds more records than its index lists",
            path.display()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.bin");
        let items = vec![
            (
                "a/1.pgm".to_string(),
                Tensor::<f32>::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap(),
            ),
            (
                "a/1.pgm".to_string(),
                Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap(),
            ),
        ];
        write_embeddings(&p, &items).unwrap();
        assert!(index_path(&p).ends_with("emb.bin.index"));
        let back = read_embeddings::<f32>(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[1].1.bit_eq(&items[1].1));

        write_embeddings::<f32>(&p, &[]).unwrap();
        assert!(read_embeddings::<f32>(&p).unwrap().is_empty());
    }

    #[test]
    fn index_longer_than_data() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.bin");
        write_embeddings::<f32>(&p, &[]).unwrap();
        fs::write(index_path(&p), "x\n").unwrap();
        assert!(matches!(read_embeddings::<f32>(&p), Err(Error::Truncated(_))));
    }
}
