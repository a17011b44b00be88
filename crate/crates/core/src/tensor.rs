//! Dense `f32` tensors and the `FTNS` binary container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                               |
//! |--------------|---------------------------------------|
//! | 4            | magic `46 54 4E 53` ("FTNS")          |
//! | 1            | format version, `1`                   |
//! | 1            | dtype, `1` = f32 little-endian        |
//! | 1            | number of dimensions                  |
//! | 4 × ndim     | dimensions as `u32`                   |
//! | 4 × Π dims   | row-major payload                     |

use std::path::Path;

use crate::error::{Error, Result, TensorError};

pub const MAGIC: [u8; 4] = *b"FTNS";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Checks that `dims` are positive, match `data.len()`, and every value is finite.
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> std::result::Result<Self, TensorError> {
        if dims.contains(&0) {
            return Err(TensorError::ZeroDim(dims));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                dims,
                expected,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub fn vector(data: Vec<f32>) -> std::result::Result<Self, TensorError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Contiguous sub-slice along the leading axis (`row(i)` of an `[n, ...]` tensor).
    pub fn row(&self, i: usize) -> &[f32] {
        let stride = self.data.len() / self.dims[0];
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn to_bytes(&self) -> std::result::Result<Vec<u8>, TensorError> {
        write_tensor(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, TensorError> {
        read_tensor(bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        read_tensor(&bytes).map_err(|source| Error::Tensor {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = write_tensor(self).map_err(|source| Error::Tensor {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

pub fn read_tensor(bytes: &[u8]) -> std::result::Result<Tensor, TensorError> {
    let header = |need: usize| {
        if bytes.len() < need {
            Err(TensorError::Truncated {
                expected: need,
                found: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    header(7)?;
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(TensorError::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(TensorError::UnsupportedDtype(bytes[5]));
    }
    let ndim = bytes[6] as usize;
    let payload_start = 7 + 4 * ndim;
    header(payload_start)?;
    let dims: Vec<usize> = bytes[7..payload_start]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(TensorError::ZeroDim(dims));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(TensorError::Truncated {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    let expected = count
        .checked_mul(4)
        .and_then(|p| p.checked_add(payload_start))
        .unwrap_or(usize::MAX);
    header(expected)?;
    if bytes.len() > expected {
        return Err(TensorError::TrailingBytes(bytes.len() - expected));
    }
    let data: Vec<f32> = bytes[payload_start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims, data)
}

pub fn write_tensor(t: &Tensor) -> std::result::Result<Vec<u8>, TensorError> {
    if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite(i));
    }
    let ndim = u8::try_from(t.dims.len()).map_err(|_| TensorError::DimTooLarge(t.dims.len()))?;
    let mut out = Vec::with_capacity(7 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.push(DTYPE_F32);
    out.push(ndim);
    for &d in &t.dims {
        let d = u32::try_from(d).map_err(|_| TensorError::DimTooLarge(d))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}
