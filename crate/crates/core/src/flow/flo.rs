use std::fs;
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

/// Magic float at the head of every Middlebury `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

/// Write a Middlebury `.flo` file; components are narrowed to `f32`.
pub fn write_flo(f: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(f)?).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub(crate) fn encode_flo(f: &FlowField) -> Result<Vec<u8>> {
    let w = i32::try_from(f.width()).map_err(|_| Error::invalid("flow too wide for .flo"))?;
    let h = i32::try_from(f.height()).map_err(|_| Error::invalid("flow too tall for .flo"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * f.u().len());
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&w.to_le_bytes());
    buf.extend_from_slice(&h.to_le_bytes());
    for (u, v) in f.u().iter().zip(f.v()) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub(crate) fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 {
        return Err(Error::MalformedHeader("file shorter than the .flo magic".into()));
    }
    let magic = f32::from_le_bytes(bytes[..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!("bad .flo magic {magic}, expected {FLO_MAGIC}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader("truncated .flo header".into()));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::MalformedHeader(format!("non-positive .flo size {w}x{h}")));
    }
    let n = (w as usize).checked_mul(h as usize).ok_or(Error::DimensionOverflow {
        channels: 2,
        height: h as u64,
        width: w as u64,
    })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 8 {
        return Err(Error::MalformedHeader(format!(
            ".flo header declares {w}x{h} ({} bytes), payload has {} bytes",
            n * 8,
            payload.len()
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for pair in payload.chunks_exact(8) {
        u.push(f64::from(f32::from_le_bytes(pair[..4].try_into().unwrap())));
        v.push(f64::from(f32::from_le_bytes(pair[4..].try_into().unwrap())));
    }
    FlowField::new(h as usize, w as usize, u, v).map_err(|e| Error::Format(format!("invalid flow payload: {e}")))
}
