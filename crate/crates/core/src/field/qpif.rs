//! QPIF binary container.
//!
//! Little-endian layout:
//!
//! ```text
//! "QPIF" | version u16 = 1 | reserved u16 = 0 | width u32 | height u32
//! | channels u32 | dtype u32 = 0 (float32) | meta_len u32 | meta (UTF-8 JSON)
//! | payload: channels x height x width float32, row-major, channel-planar
//! ```
//!
//! Fields use two channels (amplitude plane, then phase plane). Holograms use
//! one channel and volumes use one channel per z-slice.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ComplexField, FieldMeta};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QPIF";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u32 = 0;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
}

impl Header {
    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn payload_len(&self) -> usize {
        self.plane_len() * self.channels as usize * 4
    }
}

/// Decoded container: header, metadata object, and planes in file order.
#[derive(Debug, Clone)]
pub struct Container {
    pub header: Header,
    pub meta: Value,
    pub planes: Vec<Vec<f32>>,
}

impl Container {
    pub fn plane(&self, index: usize) -> Array2<f64> {
        let h = self.header.height as usize;
        let w = self.header.width as usize;
        Array2::from_shape_fn((h, w), |(r, c)| self.planes[index][r * w + c] as f64)
    }
}

fn to_f32_plane(grid: &Array2<f64>, what: &str) -> Result<Vec<f32>> {
    grid.iter()
        .map(|&v| {
            let x = v as f32;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::InvalidField(format!("{what} value {v} is not a finite float32")))
            }
        })
        .collect()
}

pub fn encode(header: Header, meta: &Value, planes: &[Vec<f32>]) -> Result<Vec<u8>> {
    if planes.len() != header.channels as usize {
        return Err(Error::Format(format!(
            "header declares {} channels but {} planes were supplied",
            header.channels,
            planes.len()
        )));
    }
    let meta_bytes = serde_json::to_vec(meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + meta_bytes.len() + header.payload_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&header.width.to_le_bytes());
    out.extend_from_slice(&header.height.to_le_bytes());
    out.extend_from_slice(&header.channels.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    for plane in planes {
        if plane.len() != header.plane_len() {
            return Err(Error::Format(format!(
                "plane holds {} samples, expected {}",
                plane.len(),
                header.plane_len()
            )));
        }
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let got = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::Format(format!("bad magic {got:?}, expected \"QPIF\"")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: expected {HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let header = Header {
        width: u32_at(bytes, 8),
        height: u32_at(bytes, 12),
        channels: u32_at(bytes, 16),
    };
    let dtype = u32_at(bytes, 20);
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {dtype}")));
    }
    let meta_len = u32_at(bytes, 24) as usize;
    let payload_start = HEADER_LEN + meta_len;
    let expected = payload_start + header.payload_len();
    if bytes.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "trailing data: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let meta: Value = serde_json::from_slice(&bytes[HEADER_LEN..payload_start])
        .map_err(|e| Error::Format(format!("metadata is not valid JSON: {e}")))?;
    let plane_bytes = header.plane_len() * 4;
    let planes = (0..header.channels as usize)
        .map(|ch| {
            let start = payload_start + ch * plane_bytes;
            bytes[start..start + plane_bytes]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect()
        })
        .collect();
    Ok(Container { header, meta, planes })
}

pub fn write_container(path: &Path, header: Header, meta: &Value, planes: &[Vec<f32>]) -> Result<()> {
    let bytes = encode(header, meta, planes)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// JSON header for two-channel field files.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldHeaderJson {
    #[serde(flatten)]
    meta: FieldMeta,
    pixel_size: f64,
    wavelength: f64,
    wrapped: bool,
}

pub fn encode_field(field: &ComplexField, meta: &FieldMeta) -> Result<Vec<u8>> {
    field.validate()?;
    let header = Header {
        width: field.width() as u32,
        height: field.height() as u32,
        channels: 2,
    };
    let json = serde_json::to_value(FieldHeaderJson {
        meta: meta.clone(),
        pixel_size: field.pixel_size,
        wavelength: field.wavelength,
        wrapped: field.wrapped,
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    let planes = vec![
        to_f32_plane(&field.amplitude, "amplitude")?,
        to_f32_plane(&field.phase, "phase")?,
    ];
    encode(header, &json, &planes)
}

pub fn decode_field(bytes: &[u8]) -> Result<(ComplexField, FieldMeta)> {
    let container = decode(bytes)?;
    if container.header.channels != 2 {
        return Err(Error::Format(format!(
            "field files carry 2 channels, found {}",
            container.header.channels
        )));
    }
    let json: FieldHeaderJson = serde_json::from_value(container.meta.clone())
        .map_err(|e| Error::Format(format!("field metadata: {e}")))?;
    let field = ComplexField {
        amplitude: container.plane(0),
        phase: container.plane(1),
        pixel_size: json.pixel_size,
        wavelength: json.wavelength,
        wrapped: json.wrapped,
    };
    Ok((field, json.meta))
}

/// Stores the field as float32; values are rounded to the nearest float32.
pub fn write_field(field: &ComplexField, meta: &FieldMeta, path: &Path) -> Result<()> {
    let bytes = encode_field(field, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<(ComplexField, FieldMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes)
}

/// Single-channel mask file; nonzero samples are selected.
pub fn read_mask(path: &Path) -> Result<Array2<bool>> {
    let c = read_container(path)?;
    if c.header.channels < 1 {
        return Err(Error::Format("mask file has no channels".into()));
    }
    Ok(c.plane(0).mapv(|v| v != 0.0))
}

pub fn write_mask(mask: &Array2<bool>, path: &Path) -> Result<()> {
    let header = Header {
        width: mask.ncols() as u32,
        height: mask.nrows() as u32,
        channels: 1,
    };
    let plane = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    write_container(path, header, &serde_json::json!({ "role": "raw", "mask": true }), &[plane])
}
