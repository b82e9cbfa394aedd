//! Binary embedding store kept next to a corpus file.
//!
//! Layout: `b"EMB1"`, `u32` count, `u32` dim, then `count * dim` little-endian
//! `f32`s. A JSON index maps each `image_id` to the byte offset of its vector.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::CorpusError;

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug)]
pub struct EmbeddingSidecar {
    data: Vec<u8>,
    count: usize,
    dim: usize,
    index: BTreeMap<String, u64>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl EmbeddingSidecar {
    pub fn open(bin_path: &Path, index_path: &Path) -> Result<Self, CorpusError> {
        let data = fs::read(bin_path).map_err(|e| io_err(bin_path, e))?;
        if data.len() < HEADER_LEN || &data[..4] != MAGIC {
            return Err(CorpusError::Sidecar(format!(
                "{} is not an EMB1 file",
                bin_path.display()
            )));
        }
        let count = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
        if data.len() != HEADER_LEN + count * dim * 4 {
            return Err(CorpusError::Sidecar(format!(
                "{}: header declares {count} x {dim} floats but payload is {} bytes",
                bin_path.display(),
                data.len() - HEADER_LEN
            )));
        }
        let raw = fs::read_to_string(index_path).map_err(|e| io_err(index_path, e))?;
        let index: BTreeMap<String, u64> = serde_json::from_str(&raw)
            .map_err(|e| CorpusError::Sidecar(format!("{}: {e}", index_path.display())))?;
        Ok(EmbeddingSidecar {
            data,
            count,
            dim,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn get(&self, image_id: &str) -> Result<Vec<f32>, CorpusError> {
        let offset = *self
            .index
            .get(image_id)
            .ok_or_else(|| CorpusError::Sidecar(format!("no entry for image `{image_id}`")))?
            as usize;
        let end = offset + self.dim * 4;
        if offset < HEADER_LEN || (offset - HEADER_LEN) % 4 != 0 || end > self.data.len() {
            return Err(CorpusError::Sidecar(format!(
                "offset {offset} for image `{image_id}` is out of bounds"
            )));
        }
        Ok(self.data[offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

/// Writes `items` as an EMB1 file plus its JSON index.
pub fn write_sidecar<'a, I>(
    bin_path: &Path,
    index_path: &Path,
    dim: usize,
    items: I,
) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
{
    let mut payload = Vec::new();
    let mut index = BTreeMap::new();
    let mut count = 0u32;
    for (id, v) in items {
        if v.len() != dim {
            return Err(CorpusError::Sidecar(format!(
                "image `{id}` has dimension {}, expected {dim}",
                v.len()
            )));
        }
        index.insert(id.to_string(), (HEADER_LEN + payload.len()) as u64);
        for x in v {
            payload.extend_from_slice(&x.to_le_bytes());
        }
        count += 1;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    fs::write(bin_path, out).map_err(|e| io_err(bin_path, e))?;
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(index_path, json).map_err(|e| io_err(index_path, e))?;
    Ok(())
}
