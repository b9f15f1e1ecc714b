use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{bounding_box, Vec3};

/// Half-width of the normalized coordinate box.
pub const HALF_EXTENT: f64 = 3.0;

/// Isotropic map `y = scale · (p − offset)` from millimetres into the
/// diffusion frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub offset: Vec3,
}

impl NormalizationTransform {
    pub fn forward(&self, p: Vec3) -> Vec3 {
        [
            self.scale * (p[0] - self.offset[0]),
            self.scale * (p[1] - self.offset[1]),
            self.scale * (p[2] - self.offset[2]),
        ]
    }

    pub fn inverse(&self, y: Vec3) -> Vec3 {
        [
            y[0] / self.scale + self.offset[0],
            y[1] / self.scale + self.offset[1],
            y[2] / self.scale + self.offset[2],
        ]
    }
}

/// Centres the bounding box at the origin and scales its longest side to
/// span `[-3, 3]`.
pub fn fit_normalization(cloud: &PointCloud) -> Result<NormalizationTransform> {
    let (lo, hi) = bounding_box(&cloud.points)
        .ok_or_else(|| Error::Degenerate("cannot normalize an empty cloud".into()))?;
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::Degenerate("cloud has zero extent".into()));
    }
    Ok(NormalizationTransform {
        scale: 2.0 * HALF_EXTENT / extent,
        offset: [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ],
    })
}

/// Maps every point forward (or back with `inverse`). Normals are unchanged
/// by an isotropic positive scaling.
pub fn apply_normalization(
    cloud: &PointCloud,
    transform: &NormalizationTransform,
    inverse: bool,
) -> PointCloud {
    let map = |p: &Vec3| {
        if inverse {
            transform.inverse(*p)
        } else {
            transform.forward(*p)
        }
    };
    PointCloud {
        points: cloud.points.iter().map(map).collect(),
        split: cloud.split,
        normals: cloud.normals.clone(),
    }
}
