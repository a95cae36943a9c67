//! Binary checkpoint, little-endian:
//!
//! ```text
//! "RUAP" | version u8 = 1 | layer count u16
//! per layer: kind u8 | rank u8 | dims u32 * rank
//!            | weight count u64 | f64 * count | bias count u64 | f64 * count
//! CRC32 (IEEE) of all preceding bytes, u32
//! ```
//!
//! Layer dims: Conv3x3 `[in, out, h, w]`, ReLU its activation dims,
//! MaxPool2x2 and Flatten `[c, h, w]`, Dense `[in, out]`.

use std::fs;
use std::path::Path;

use super::layers::{Layer, LayerKind};
use super::Classifier;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RUAP";
const VERSION: u8 = 1;

pub fn write_model(model: &Classifier) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(model.layers().len() as u16).to_le_bytes());
    for layer in model.layers() {
        let dims: Vec<usize> = match layer {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
                ..
            } => vec![*in_channels, *out_channels, *height, *width],
            Layer::Relu { dims } => dims.clone(),
            Layer::MaxPool2x2 {
                channels,
                height,
                width,
            }
            | Layer::Flatten {
                channels,
                height,
                width,
            } => vec![*channels, *height, *width],
            Layer::Dense { inputs, outputs, .. } => vec![*inputs, *outputs],
        };
        out.push(layer.kind() as u8);
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let (w, b) = layer.params();
        for arr in [w, b] {
            out.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for v in arr {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = usize::try_from(self.u64()?).map_err(|_| Error::Truncated)?;
        let bytes = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_model(bytes: &[u8]) -> Result<Classifier> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u16()?;
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let kind_byte = r.u8()?;
        let kind = LayerKind::from_u8(kind_byte)
            .ok_or_else(|| Error::ShapeChain(format!("unknown layer kind {kind_byte}")))?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let weights = r.f64s()?;
        let bias = r.f64s()?;
        let bad_rank = || Error::ShapeChain(format!("{kind:?} with dims {dims:?}"));
        let layer = match (kind, dims.as_slice()) {
            (LayerKind::Conv3x3, &[in_channels, out_channels, height, width]) => Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
                weights,
                bias,
            },
            (LayerKind::Relu, d) if !d.is_empty() => Layer::Relu { dims: d.to_vec() },
            (LayerKind::MaxPool2x2, &[channels, height, width]) => Layer::MaxPool2x2 {
                channels,
                height,
                width,
            },
            (LayerKind::Flatten, &[channels, height, width]) => Layer::Flatten {
                channels,
                height,
                width,
            },
            (LayerKind::Dense, &[inputs, outputs]) => Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            },
            _ => return Err(bad_rank()),
        };
        layers.push(layer);
    }
    let body_len = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::ShapeChain(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Classifier::new(layers)
}

pub fn save_model(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}
