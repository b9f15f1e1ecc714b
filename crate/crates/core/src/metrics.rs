//! Segmentation metrics: Dice, boundary Dice at a physical tolerance, HD95.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::spatial::KdTree;
use crate::volume::BinaryGrid;

pub const DEFAULT_TOLERANCE_MM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dsc: f64,
    pub bdsc: f64,
    pub hd95: f64,
    pub tolerance_mm: f64,
    pub spacing_mm: [f64; 3],
}

/// 2|A∩B| / (|A| + |B|).
pub fn dsc(a: &BinaryGrid, b: &BinaryGrid) -> Result<f64> {
    a.require_same_geometry(b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        na += x as usize;
        nb += y as usize;
        both += (x & y) as usize;
    }
    if na + nb == 0 {
        return Err(Error::invalid("Dice of two empty masks is undefined"));
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Foreground voxels with a background (or out-of-volume) face neighbour,
/// as physical positions `index * spacing`.
pub fn boundary_points(a: &BinaryGrid) -> Vec<Vec3> {
    let [nx, ny, nz] = a.dims();
    let s = a.spacing();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if a.get(x, y, z) == 0 {
                    continue;
                }
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                let edge = [
                    (xi - 1, yi, zi),
                    (xi + 1, yi, zi),
                    (xi, yi - 1, zi),
                    (xi, yi + 1, zi),
                    (xi, yi, zi - 1),
                    (xi, yi, zi + 1),
                ]
                .iter()
                .any(|&(p, q, r)| a.get_or_default(p, q, r) == 0);
                if edge {
                    out.push([x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]]);
                }
            }
        }
    }
    out
}

/// Distance from each query point to its nearest target point.
fn nearest_distances(queries: &[Vec3], targets: &[Vec3]) -> Vec<f64> {
    let tree = KdTree::new(targets);
    queries
        .iter()
        .map(|q| tree.nearest(*q).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .collect()
}

/// (matched_A + matched_B) / (|∂A| + |∂B|), where a boundary voxel is
/// matched if the other boundary lies within `tolerance_mm`.
pub fn boundary_dsc(a: &BinaryGrid, b: &BinaryGrid, tolerance_mm: f64) -> Result<f64> {
    a.require_same_geometry(b)?;
    if !(tolerance_mm >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let ba = boundary_points(a);
    let bb = boundary_points(b);
    if ba.is_empty() && bb.is_empty() {
        return Err(Error::invalid("both masks have empty boundaries"));
    }
    let matched = |q: &[Vec3], t: &[Vec3]| {
        nearest_distances(q, t).iter().filter(|&&d| d <= tolerance_mm).count()
    };
    let m = matched(&ba, &bb) + matched(&bb, &ba);
    Ok(m as f64 / (ba.len() + bb.len()) as f64)
}

/// Linear interpolation between order statistics at rank `q·(n−1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Pooled boundary-to-boundary nearest distances in both directions.
pub fn boundary_distances(a: &BinaryGrid, b: &BinaryGrid) -> Result<Vec<f64>> {
    a.require_same_geometry(b)?;
    let ba = boundary_points(a);
    let bb = boundary_points(b);
    if ba.is_empty() || bb.is_empty() {
        return Err(Error::invalid("distance metrics need two nonempty masks"));
    }
    let mut d = nearest_distances(&ba, &bb);
    d.extend(nearest_distances(&bb, &ba));
    Ok(d)
}

/// 95th percentile of the pooled boundary distances, in mm.
pub fn hd95(a: &BinaryGrid, b: &BinaryGrid) -> Result<f64> {
    let mut d = boundary_distances(a, b)?;
    d.sort_by(f64::total_cmp);
    Ok(percentile(&d, 0.95))
}

pub fn evaluate(pred: &BinaryGrid, truth: &BinaryGrid, tolerance_mm: f64) -> Result<MetricReport> {
    Ok(MetricReport {
        dsc: dsc(pred, truth)?,
        bdsc: boundary_dsc(pred, truth, tolerance_mm)?,
        hd95: hd95(pred, truth)?,
        tolerance_mm,
        spacing_mm: pred.spacing(),
    })
}
