//! `MECT` dense tensor container.
//!
//! ```text
//! offset  size       field
//! 0       4          magic  b"MECT"
//! 4       1          version (1)
//! 5       1          dtype   (0 = f32)
//! 6       1          ndim
//! 7       4 * ndim   dims, u32 little-endian
//! ...     4 * prod   payload, f32 little-endian, row-major
//! ```
//!
//! No padding and no trailing bytes.

use std::fs;
use std::path::Path;

use crate::error::{MecError, Result};
use crate::model::Matrix;

pub const MAGIC: &[u8; 4] = b"MECT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
const FIXED_HEADER: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(MecError::Index(format!("dims {dims:?} not representable")));
        }
        if expected != data.len() {
            return Err(MecError::Index(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_matrix(self) -> Option<Matrix> {
        match self.dims[..] {
            [r, c] => Matrix::new(r, c, self.data).ok(),
            _ => None,
        }
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Tensor {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(t.dims.len() as u8);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode a tensor; `path` is only used to label errors.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let format = |message: String| MecError::Format {
        path: path.to_path_buf(),
        message,
    };
    let truncated = |message: String| MecError::Truncation {
        path: path.to_path_buf(),
        message,
    };

    if bytes.len() < 4 {
        return Err(truncated(format!("{} header bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(format(format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(truncated(format!("{} header bytes", bytes.len())));
    }
    if bytes[4] != VERSION {
        return Err(format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(format(format!("unsupported dtype {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    let header_len = FIXED_HEADER + 4 * ndim;
    if bytes.len() < header_len {
        return Err(truncated(format!(
            "header needs {header_len} bytes, file has {}",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = bytes[FIXED_HEADER..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format(format!("dims {dims:?} overflow")))?;
    let payload_len = count
        .checked_mul(4)
        .ok_or_else(|| format(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[header_len..];
    if payload.len() < payload_len {
        return Err(truncated(format!(
            "payload needs {payload_len} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > payload_len {
        return Err(format(format!(
            "{} trailing bytes after payload",
            payload.len() - payload_len
        )));
    }
    let mut data = Vec::with_capacity(count);
    for (index, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(MecError::Value {
                path: path.to_path_buf(),
                index,
            });
        }
        data.push(v);
    }
    Ok(Tensor { dims, data })
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| MecError::io(path, e))?;
    decode_tensor(&bytes, path)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| MecError::io(path, e))
}
