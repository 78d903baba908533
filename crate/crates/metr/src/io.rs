//! Binary tensor file format.
//!
//! Little-endian layout, no padding, no checksum:
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 4    | magic `METR`                                 |
//! | 4      | 2    | format version, `u16` = 1                    |
//! | 6      | 1    | dtype, `u8`: 0 = real f64, 1 = complex f64   |
//! | 7      | 1    | ndim, `u8` = 3                               |
//! | 8      | 12   | dims, 3 x `u32` (C, H, W)                    |
//! | 20     | ...  | payload, row-major f64; complex interleaved  |
//!
//! Round trips are bit-exact for both dtypes.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::tensor::{LatentTensor, Spectrum};

const MAGIC: [u8; 4] = *b"METR";
const VERSION: u16 = 1;
const DTYPE_REAL: u8 = 0;
const DTYPE_COMPLEX: u8 = 1;
const NDIM: u8 = 3;
const HEADER_LEN: usize = 20;

/// Either tensor flavour, as stored on disk.
#[derive(Debug, Clone)]
pub enum TensorData {
    Real(LatentTensor),
    Complex(Spectrum),
}

impl From<LatentTensor> for TensorData {
    fn from(t: LatentTensor) -> Self {
        TensorData::Real(t)
    }
}

impl From<Spectrum> for TensorData {
    fn from(s: Spectrum) -> Self {
        TensorData::Complex(s)
    }
}

impl TensorData {
    pub fn as_real(&self) -> Result<&LatentTensor> {
        match self {
            TensorData::Real(t) => Ok(t),
            TensorData::Complex(_) => Err(Error::invalid("expected a real tensor file")),
        }
    }

    pub fn as_complex(&self) -> Result<&Spectrum> {
        match self {
            TensorData::Complex(s) => Ok(s),
            TensorData::Real(_) => Err(Error::invalid("expected a complex tensor file")),
        }
    }

    pub fn into_real(self) -> Result<LatentTensor> {
        match self {
            TensorData::Real(t) => Ok(t),
            TensorData::Complex(_) => Err(Error::invalid("expected a real tensor file")),
        }
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

/// Serializes a tensor to the on-disk byte layout.
pub fn encode_tensor(tensor: &TensorData) -> Vec<u8> {
    let (dtype, (c, h, w), payload_len) = match tensor {
        TensorData::Real(t) => (DTYPE_REAL, t.shape(), t.data().len() * 8),
        TensorData::Complex(s) => (DTYPE_COMPLEX, s.shape(), s.data().len() * 16),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype);
    out.push(NDIM);
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    match tensor {
        TensorData::Real(t) => {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        TensorData::Complex(s) => {
            for v in s.data() {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    out
}

/// Parses the on-disk byte layout, reporting the byte offset of anything
/// malformed.
pub fn decode_tensor(bytes: &[u8]) -> Result<TensorData> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected \"METR\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let dtype = bytes[6];
    if dtype != DTYPE_REAL && dtype != DTYPE_COMPLEX {
        return Err(format_err(6, format!("unknown dtype {dtype}")));
    }
    let ndim = bytes[7];
    if ndim != NDIM {
        return Err(format_err(7, format!("expected 3 dims, got {ndim}")));
    }
    let c = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if c == 0 || h == 0 || w == 0 {
        return Err(format_err(8, format!("dims must be positive, got {c}x{h}x{w}")));
    }
    let elems = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| format_err(8, format!("dims {c}x{h}x{w} overflow")))?;
    let elem_size = if dtype == DTYPE_REAL { 8 } else { 16 };
    let payload_len = elems
        .checked_mul(elem_size)
        .ok_or_else(|| format_err(8, format!("dims {c}x{h}x{w} overflow payload size")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != payload_len {
        return Err(format_err(
            HEADER_LEN + payload.len().min(payload_len),
            format!("payload is {} bytes, expected {payload_len}", payload.len()),
        ));
    }
    let mut f64s = Vec::with_capacity(payload_len / 8);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + i * 8, "non-finite value in payload"));
        }
        f64s.push(v);
    }
    if dtype == DTYPE_REAL {
        Ok(TensorData::Real(LatentTensor::new(c, h, w, f64s)?))
    } else {
        let complex: Vec<Complex<f64>> = f64s
            .chunks_exact(2)
            .map(|p| Complex::new(p[0], p[1]))
            .collect();
        Ok(TensorData::Complex(Spectrum::new(c, h, w, complex)?))
    }
}

pub fn write_tensor(path: &Path, tensor: &TensorData) -> Result<()> {
    fs::write(path, encode_tensor(tensor))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<TensorData> {
    let bytes = fs::read(path)?;
    decode_tensor(&bytes)
}
