//! The IDX container used by the MNIST distribution.
//!
//! Layout: a big-endian `u32` magic `0x0000TTNN` (element type `TT`, `NN`
//! dimensions), `NN` big-endian `u32` sizes, then the payload in row-major
//! order. Only unsigned-byte payloads (`TT = 0x08`) are supported.

use std::path::Path;

use super::{read_bytes, DataError};

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self, DataError> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(DataError::Invalid(format!(
                "IDX dims {dims:?} need {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Result<usize, DataError> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| DataError::Invalid("IDX dimensions overflow".into()))
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic >> 16 != 0 {
        return Err(DataError::BadMagic(magic));
    }
    let kind = (magic >> 8) as u8;
    if kind != UBYTE {
        return Err(DataError::UnsupportedType(kind));
    }
    let ndim = (magic & 0xff) as usize;
    if ndim == 0 {
        return Err(DataError::BadMagic(magic));
    }
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let header = 4 + 4 * ndim;
    let count = element_count(&dims)?;
    let expected = header
        .checked_add(count)
        .ok_or_else(|| DataError::Invalid("IDX dimensions overflow".into()))?;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes {
            found: bytes.len() - expected,
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn write_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&[0, 0, UBYTE, tensor.dims.len() as u8]);
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

/// Reads an IDX file, transparently inflating gzip.
pub fn read_idx_file(path: &Path) -> Result<IdxTensor, DataError> {
    parse_idx(&read_bytes(path)?)
}
