//! Synthetic training data: ellipsoidal shells with a cone-shaped defect.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::rng_from_seed;
use crate::error::{Error, Result};
use crate::geom::{dot, normalize, Vec3};
use crate::volume::{boolean_subtract, BinaryGrid};

const MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Outer ellipsoid semi-axes, in voxels.
    pub radii: Vec3,
    /// Shell thickness, in voxels.
    pub thickness: f64,
    pub defect_direction: Vec3,
    /// Half-angle of the removed cone, in degrees.
    pub defect_angle_deg: f64,
    /// Drives the sub-voxel placement of the centre.
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64; 3],
            spacing_mm: [1.0; 3],
            radii: [16.0, 18.0, 16.0],
            thickness: 6.0,
            defect_direction: [0.0, 0.0, 1.0],
            defect_angle_deg: 40.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Centre of the shell in voxel coordinates.
    pub fn center(&self) -> Vec3 {
        let mut rng = rng_from_seed(self.seed);
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = (self.dims[a] as f64 - 1.0) / 2.0 + rng.random_range(-0.5..0.5);
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) || self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("phantom dims and spacing must be positive"));
        }
        if !(self.thickness > 0.0) || self.radii.iter().any(|&r| !(r > self.thickness)) {
            return Err(Error::invalid("radii must exceed a positive thickness"));
        }
        let c = self.center();
        for a in 0..3 {
            if c[a] - self.radii[a] < MARGIN || c[a] + self.radii[a] > self.dims[a] as f64 - 1.0 - MARGIN {
                return Err(Error::invalid(format!(
                    "shell does not fit in {:?} with a {MARGIN}-voxel margin",
                    self.dims
                )));
            }
        }
        if normalize(self.defect_direction).is_none() {
            return Err(Error::invalid("defect direction must be nonzero"));
        }
        if !(self.defect_angle_deg > 0.0 && self.defect_angle_deg < 180.0) {
            return Err(Error::invalid("defect angle must lie in (0, 180) degrees"));
        }
        Ok(())
    }
}

/// A complete shell, its defective version, and the missing part.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub complete: BinaryGrid,
    pub defective: BinaryGrid,
    pub implant: BinaryGrid,
}

fn ellipsoid_level(q: Vec3, radii: Vec3) -> f64 {
    (0..3).map(|a| (q[a] / radii[a]).powi(2)).sum()
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let c = spec.center();
    let inner = spec.radii.map(|r| r - spec.thickness);
    let dir = normalize(spec.defect_direction).unwrap();
    let cos = spec.defect_angle_deg.to_radians().cos();
    let complete = BinaryGrid::from_fn(spec.dims, spec.spacing_mm, |x, y, z| {
        let q = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
        (ellipsoid_level(q, spec.radii) <= 1.0 && ellipsoid_level(q, inner) > 1.0) as u8
    })?;
    let implant = BinaryGrid::from_fn(spec.dims, spec.spacing_mm, |x, y, z| {
        if complete.get(x, y, z) == 0 {
            return 0;
        }
        let q = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
        normalize(q).is_some_and(|u| dot(u, dir) >= cos) as u8
    })?;
    let defective = boolean_subtract(&complete, &implant)?;
    if implant.count_ones() == 0 {
        return Err(Error::invalid("defect removes nothing"));
    }
    if defective.count_ones() == 0 {
        return Err(Error::invalid("defect removes the whole shell"));
    }
    Ok(Phantom {
        complete,
        defective,
        implant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub base: PhantomSpec,
    pub specs: Vec<PhantomSpec>,
}

/// Spread of the per-phantom randomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    /// Defect directions fall in a cone of this half-angle about the base direction.
    pub direction_spread_deg: f64,
    /// Relative jitter of the defect angle.
    pub angle_jitter: f64,
    /// Relative jitter of each radius.
    pub radius_jitter: f64,
}

impl Default for Variation {
    fn default() -> Self {
        Variation {
            direction_spread_deg: 45.0,
            angle_jitter: 0.15,
            radius_jitter: 0.06,
        }
    }
}

/// Draws `n` specs around `base`; deterministic in `seed`.
pub fn dataset_specs(n: usize, base: &PhantomSpec, variation: &Variation, seed: u64) -> Vec<PhantomSpec> {
    let mut rng = rng_from_seed(seed);
    let axis = normalize(base.defect_direction).unwrap_or([0.0, 0.0, 1.0]);
    // Orthonormal frame around the base direction.
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize(crate::geom::cross(axis, helper)).unwrap();
    let v = crate::geom::cross(axis, u);
    let cos_max = variation.direction_spread_deg.to_radians().cos();
    (0..n)
        .map(|i| {
            // Uniform on the spherical cap around `axis`.
            let cz: f64 = rng.random_range(cos_max..=1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - cz * cz).max(0.0).sqrt();
            let mut dir = [0.0; 3];
            for a in 0..3 {
                dir[a] = cz * axis[a] + s * (phi.cos() * u[a] + phi.sin() * v[a]);
            }
            let mut spec = base.clone();
            spec.defect_direction = dir;
            spec.defect_angle_deg =
                base.defect_angle_deg * (1.0 + rng.random_range(-variation.angle_jitter..=variation.angle_jitter));
            for a in 0..3 {
                spec.radii[a] =
                    base.radii[a] * (1.0 + rng.random_range(-variation.radius_jitter..=variation.radius_jitter));
            }
            spec.seed = seed.wrapping_add(i as u64);
            spec
        })
        .collect()
}

/// `n` phantoms plus the manifest that reproduces them.
pub fn make_dataset(
    n: usize,
    base: &PhantomSpec,
    variation: &Variation,
    seed: u64,
) -> Result<(Vec<Phantom>, DatasetManifest)> {
    use rayon::prelude::*;
    let specs = dataset_specs(n, base, variation, seed);
    let phantoms = specs.par_iter().map(make_phantom).collect::<Result<Vec<_>>>()?;
    Ok((
        phantoms,
        DatasetManifest {
            seed,
            base: base.clone(),
            specs,
        },
    ))
}
