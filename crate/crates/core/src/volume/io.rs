//! On-disk volume format: a JSON header `{dims, spacing_mm, dtype}` next to a
//! raw little-endian payload with the same stem and a `.raw` extension.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BinaryGrid, Element, RealGrid, VoxelGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Uint8,
    Float32,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::Uint8 => 1,
            Dtype::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: Dtype,
}

/// A volume of either element kind, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Binary(BinaryGrid),
    Real(RealGrid),
}

/// Path of the payload belonging to a header path.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn header_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "raw") {
        path.with_extension("json")
    } else {
        path.to_path_buf()
    }
}

fn encode<T: Element>(grid: &VoxelGrid<T>, bytes: &mut Vec<u8>) {
    match T::DTYPE {
        Dtype::Uint8 => bytes.extend(grid.as_slice().iter().map(|v| v.to_f64() as u8)),
        Dtype::Float32 => {
            for v in grid.as_slice() {
                bytes.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
        }
    }
}

/// Writes `grid` to `path` (header) and its sibling `.raw` payload.
pub fn save_volume<T: Element>(grid: &VoxelGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    grid.validate()?;
    let header_path = header_path(path.as_ref());
    let header = VolumeHeader {
        dims: grid.dims(),
        spacing_mm: grid.spacing(),
        dtype: T::DTYPE,
    };
    let mut payload = Vec::with_capacity(grid.len() * T::DTYPE.width());
    encode(grid, &mut payload);
    let json = serde_json::to_string_pretty(&header)?;
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    let payload_path = payload_path(&header_path);
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    Ok(())
}

pub fn read_header(path: impl AsRef<Path>) -> Result<VolumeHeader> {
    let path = header_path(path.as_ref());
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Header {
        path: path.clone(),
        message: e.to_string(),
    })
}

/// Reads a volume of whichever element kind its header declares.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let header_path = header_path(path.as_ref());
    let header = read_header(&header_path)?;
    let payload_path = payload_path(&header_path);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let count = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Header {
            path: header_path.clone(),
            message: format!("dims {:?} overflow", header.dims),
        })?;
    let expected = count * header.dtype.width();
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    match header.dtype {
        Dtype::Uint8 => Ok(Volume::Binary(VoxelGrid::from_vec(
            header.dims,
            header.spacing_mm,
            bytes,
        )?)),
        Dtype::Float32 => {
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Volume::Real(VoxelGrid::from_vec(
                header.dims,
                header.spacing_mm,
                data,
            )?))
        }
    }
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<BinaryGrid> {
    match load_volume(path.as_ref())? {
        Volume::Binary(g) => Ok(g),
        Volume::Real(_) => Err(Error::Header {
            path: path.as_ref().to_path_buf(),
            message: "expected a uint8 (binary) volume".into(),
        }),
    }
}

pub fn load_real(path: impl AsRef<Path>) -> Result<RealGrid> {
    match load_volume(path.as_ref())? {
        Volume::Real(g) => Ok(g),
        Volume::Binary(_) => Err(Error::Header {
            path: path.as_ref().to_path_buf(),
            message: "expected a float32 volume".into(),
        }),
    }
}
