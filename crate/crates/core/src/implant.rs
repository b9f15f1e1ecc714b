//! Implant extraction (completed minus defective, then cleaned) and
//! ensemble statistics.

use crate::error::{Error, Result};
use crate::volume::{binary_opening, boolean_subtract, median_filter3, BinaryGrid, RealGrid};

pub const OPENING_RADIUS: usize = 1;

/// `S_c − S_d`, median filtered, then opened with radius 1.
pub fn generate_implant(s_c: &BinaryGrid, s_d: &BinaryGrid) -> Result<BinaryGrid> {
    let raw = boolean_subtract(s_c, s_d)?;
    Ok(binary_opening(&median_filter3(&raw), OPENING_RADIUS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n: usize,
    pub mean: RealGrid,
    pub variance: RealGrid,
    pub mean_implant: BinaryGrid,
}

/// Voxel-wise mean, population variance and the ≥ 0.5 majority implant.
pub fn ensemble_stats(implants: &[BinaryGrid]) -> Result<EnsembleStats> {
    let first = implants
        .first()
        .ok_or_else(|| Error::invalid("ensemble is empty"))?;
    for g in &implants[1..] {
        first.require_same_geometry(g)?;
    }
    let n = implants.len();
    let len = first.len();
    let mut sum = vec![0u32; len];
    for g in implants {
        for (s, &v) in sum.iter_mut().zip(g.as_slice()) {
            *s += v as u32;
        }
    }
    let inv = 1.0 / n as f64;
    let mut mean = Vec::with_capacity(len);
    let mut var = Vec::with_capacity(len);
    let mut majority = Vec::with_capacity(len);
    for &s in &sum {
        // Members are binary, so the sum of squares equals the sum.
        let m = s as f64 * inv;
        let v = (s as f64 * inv - m * m).max(0.0);
        mean.push(m as f32);
        var.push(v as f32);
        majority.push((m >= 0.5) as u8);
    }
    let (dims, spacing) = (first.dims(), first.spacing());
    Ok(EnsembleStats {
        n,
        mean: RealGrid::from_vec(dims, spacing, mean)?,
        variance: RealGrid::from_vec(dims, spacing, var)?,
        mean_implant: BinaryGrid::from_vec(dims, spacing, majority)?,
    })
}
