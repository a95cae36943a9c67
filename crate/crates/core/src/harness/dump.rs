//! Raw perturbation dumps: `RUPT`, a version byte, height, width and
//! channels as little-endian `u32`, then the values as little-endian `f64`
//! in tensor order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

pub const DUMP_MAGIC: &[u8; 4] = b"RUPT";
pub const DUMP_VERSION: u8 = 1;
const HEADER: usize = 4 + 1 + 12;

pub fn encode_perturbation(u: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * u.len());
    out.extend_from_slice(DUMP_MAGIC);
    out.push(DUMP_VERSION);
    for d in [u.height(), u.width(), u.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in u.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_perturbation(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 4 || &bytes[..4] != DUMP_MAGIC {
        return Err(Error::BadMagic);
    }
    match bytes.get(4) {
        None => return Err(Error::Truncated),
        Some(&DUMP_VERSION) => {}
        Some(&v) => return Err(Error::UnsupportedVersion(v)),
    }
    if bytes.len() < HEADER {
        return Err(Error::Truncated);
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2));
    let body = &bytes[HEADER..];
    if body.len() != 8 * shape.len() {
        return Err(Error::Truncated);
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageTensor::from_shape(shape, data)
}

pub fn save_perturbation(u: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_perturbation(u)).map_err(|e| Error::io(path, e))
}

pub fn load_perturbation(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_perturbation(&bytes).map_err(|e| e.context(path.display().to_string()))
}
