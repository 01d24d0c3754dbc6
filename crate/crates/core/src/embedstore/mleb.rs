//! MLEB: a little-endian binary container for multi-layer token embeddings.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MLEB"
//! 4       4     u32 version (= 1)
//! 8       4     u32 number of layers L
//! 12      4     u32 dimension D
//! 16      8     u64 sentence count
//! 24      ...   per sentence:
//!                 u32 token count n
//!                 n x (u16 byte length, UTF-8 token bytes)
//!                 L*n*D f32 values, layer-major, then token, then dimension
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{EmbeddingDataset, SentenceEmbedding};
use crate::error::{Error, ShapeError};

pub const MAGIC: [u8; 4] = *b"MLEB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic {found:?} at offset 0 (expected \"MLEB\")")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {version} at offset {offset}")]
    UnsupportedVersion { version: u32, offset: u64 },
    #[error("truncated at offset {offset}: need {expected} bytes, file has {actual}")]
    Truncated { offset: u64, expected: u64, actual: u64 },
    #[error("non-finite value {value} at offset {offset}")]
    NonFinite { offset: u64, value: f32 },
    #[error("non-finite value at payload index {index}")]
    NonFiniteValue { index: usize },
    #[error("token at offset {offset} is not valid UTF-8")]
    BadUtf8 { offset: u64 },
    #[error("invalid header field `{field}` = {value} at offset {offset}")]
    BadHeader { field: &'static str, value: u64, offset: u64 },
    #[error("{extra} trailing bytes after payload at offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("token of {len} bytes exceeds the u16 length field")]
    TokenTooLong { len: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Serializes a dataset to MLEB bytes. Output is a pure function of the dataset.
pub fn encode_embeddings(dataset: &EmbeddingDataset) -> Result<Vec<u8>, FormatError> {
    let payload: usize = dataset
        .sentences()
        .iter()
        .map(|s| 4 + s.tokens().iter().map(|t| 2 + t.len()).sum::<usize>() + 4 * s.data().len())
        .sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&header_u32("layers", dataset.num_layers())?.to_le_bytes());
    out.extend_from_slice(&header_u32("dim", dataset.dim())?.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for sentence in dataset.sentences() {
        out.extend_from_slice(&header_u32("token count", sentence.len())?.to_le_bytes());
        for token in sentence.tokens() {
            let len = u16::try_from(token.len()).map_err(|_| FormatError::TokenTooLong { len: token.len() })?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(token.as_bytes());
        }
        for v in sentence.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn header_u32(field: &'static str, value: usize) -> Result<u32, FormatError> {
    u32::try_from(value).map_err(|_| FormatError::BadHeader { field, value: value as u64, offset: 0 })
}

pub fn write_embeddings(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> crate::Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(dataset)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> crate::Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_embeddings(&bytes)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated {
                offset: self.pos as u64,
                expected: self.pos as u64 + n as u64,
                actual: self.bytes.len() as u64,
            }),
        }
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingDataset, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { version, offset: 4 });
    }
    let layers = r.u32()? as usize;
    if layers == 0 {
        return Err(FormatError::BadHeader { field: "layers", value: 0, offset: 8 });
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(FormatError::BadHeader { field: "dim", value: 0, offset: 12 });
    }
    let count = r.u64()?;

    let mut dataset = EmbeddingDataset::new(layers, dim).expect("layers and dim checked above");
    for _ in 0..count {
        let n = r.u32()? as usize;
        let mut tokens = Vec::with_capacity(n.min(bytes.len()));
        for _ in 0..n {
            let len = r.u16()? as usize;
            let offset = r.offset();
            let raw = r.take(len)?;
            let token = std::str::from_utf8(raw).map_err(|_| FormatError::BadUtf8 { offset })?;
            tokens.push(token.to_owned());
        }
        let values = layers * n * dim;
        let offset = r.offset();
        let raw = r.take(values.checked_mul(4).ok_or(FormatError::Truncated {
            offset,
            expected: u64::MAX,
            actual: bytes.len() as u64,
        })?)?;
        let mut data = Vec::with_capacity(values);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let value = f32::from_le_bytes(chunk.try_into().unwrap());
            if !value.is_finite() {
                return Err(FormatError::NonFinite { offset: offset + 4 * i as u64, value });
            }
            data.push(value);
        }
        let sentence = SentenceEmbedding::new(tokens, layers, dim, data)?;
        dataset.push(sentence)?;
    }
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes { offset: r.offset(), extra: (bytes.len() - r.pos) as u64 });
    }
    Ok(dataset)
}
