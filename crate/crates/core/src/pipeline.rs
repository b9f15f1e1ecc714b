//! End-to-end wiring: defective volume → condition cloud → completion →
//! normals → Poisson indicator → completed volume → implant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{complete, DiffusionSchedule, NoisePredictor};
use crate::dpsr::{rasterize_oriented_points, spectral_poisson_solve, IndicatorGrid, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::spatial::KdTree;
use crate::implant::{ensemble_stats, generate_implant, EnsembleStats};
use crate::surface::{
    estimate_normals, fit_normalization, marching_cubes, poisson_disk_sample, NormalizationTransform, PointCloud,
};
use crate::volume::BinaryGrid;

pub const DEFAULT_TRIM_VOXELS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub points_n: usize,
    pub points_m: usize,
    /// Neighbourhood size for normal estimation.
    pub normal_k: usize,
    /// Spectral smoothing, in Poisson-grid cells.
    pub sigma: f64,
    /// Poisson grid size per axis; defaults to the next power of two of the volume.
    pub grid: Option<usize>,
    /// Drop reconstructed voxels farther than this many voxels from every
    /// generated point (density trimming); `None` keeps the whole solid.
    pub trim_voxels: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            points_n: 512,
            points_m: 64,
            normal_k: 8,
            sigma: DEFAULT_SIGMA,
            grid: None,
            trim_voxels: Some(DEFAULT_TRIM_VOXELS),
        }
    }
}

/// The condition cloud of a defective volume in both frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCloud {
    pub points_mm: Vec<Vec3>,
    pub normalized: Vec<Vec3>,
    pub transform: NormalizationTransform,
}

pub fn surface_sample(grid: &BinaryGrid, count: usize, seed: u64) -> Result<Vec<Vec3>> {
    let mesh = marching_cubes(grid, 0.5)?;
    Ok(poisson_disk_sample(&mesh, count, seed)?.points)
}

/// Samples `n` points on the surface of `s_d` and normalizes them.
pub fn condition_cloud(s_d: &BinaryGrid, n: usize, seed: u64) -> Result<ConditionCloud> {
    let points_mm = surface_sample(s_d, n, seed)?;
    let transform = fit_normalization(&PointCloud::new(points_mm.clone()))?;
    let normalized = points_mm.iter().map(|p| transform.forward(*p)).collect();
    Ok(ConditionCloud {
        points_mm,
        normalized,
        transform,
    })
}

/// A normalized training cloud: defective-surface points as condition,
/// implant-surface points as free points, in the frame fitted to the condition.
pub fn training_cloud(s_d: &BinaryGrid, implant: &BinaryGrid, n: usize, m: usize, seed: u64) -> Result<PointCloud> {
    let cond = condition_cloud(s_d, n, seed)?;
    let free: Vec<Vec3> = surface_sample(implant, m, seed ^ 0x5eed)?
        .iter()
        .map(|p| cond.transform.forward(*p))
        .collect();
    Ok(PointCloud::from_parts(&cond.normalized, &free))
}

/// Training clouds for `(defective, implant)` pairs, `variants` independent
/// surface samples each. Cloud `v` of pair `i` uses seed `seed + i·variants + v`.
pub fn training_set(
    pairs: &[(&BinaryGrid, &BinaryGrid)],
    n: usize,
    m: usize,
    variants: usize,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    (0..pairs.len() * variants)
        .into_par_iter()
        .map(|k| {
            let (s_d, implant) = pairs[k / variants];
            training_cloud(s_d, implant, n, m, seed.wrapping_add(k as u64))
        })
        .collect()
}

fn poisson_dims(volume: [usize; 3], grid: Option<usize>) -> [usize; 3] {
    match grid {
        Some(g) => [g; 3],
        None => volume.map(usize::next_power_of_two),
    }
}

/// Oriented points (in mm) → indicator sampled at every voxel of a volume
/// with `dims`/`spacing`. Poisson grids smaller than the volume cover it at a
/// coarser cell size.
pub fn indicator_for_volume(
    oriented: &PointCloud,
    dims: [usize; 3],
    spacing: [f64; 3],
    config: &PipelineConfig,
) -> Result<IndicatorGrid> {
    let pdims = poisson_dims(dims, config.grid);
    let factor: [f64; 3] = std::array::from_fn(|a| (pdims[a] as f64 / dims[a] as f64).min(1.0));
    let to_grid = |p: Vec3| -> Vec3 { std::array::from_fn(|a| (p[a] / spacing[a] + 0.5) * factor[a] - 0.5) };
    let mut cloud = oriented.clone();
    for p in &mut cloud.points {
        *p = to_grid(*p);
        for a in 0..3 {
            p[a] = p[a].clamp(-0.5, pdims[a] as f64 - 0.5);
        }
    }
    let field = rasterize_oriented_points(&cloud, pdims)?;
    let chi = spectral_poisson_solve(&field, config.sigma)?;
    let mut values = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let q = [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]];
                values.push(chi.sample(to_grid(q)));
            }
        }
    }
    Ok(IndicatorGrid {
        dims,
        spacing,
        values,
    })
}

/// Clears voxels of `grid` farther than `distance` (mm) from every point.
pub fn trim_to_points(grid: &mut BinaryGrid, points: &[Vec3], distance: f64) {
    let tree = KdTree::new(points);
    let limit = distance * distance;
    for i in 0..grid.len() {
        if grid.as_slice()[i] == 0 {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        let far = tree.nearest(grid.position(x, y, z)).is_none_or(|(_, d2)| d2 > limit);
        if far {
            grid.as_mut_slice()[i] = 0;
        }
    }
}

/// Solid enclosed by the generated free points, trimmed to their
/// neighbourhood and united with `s_d`.
pub fn completed_volume(s_d: &BinaryGrid, free_mm: &[Vec3], config: &PipelineConfig) -> Result<BinaryGrid> {
    let oriented = estimate_normals(&PointCloud::new(free_mm.to_vec()), config.normal_k)?;
    let chi = indicator_for_volume(&oriented, s_d.dims(), s_d.spacing(), config)?;
    let mut filled = crate::dpsr::voxelize(&chi)?;
    if let Some(t) = config.trim_voxels {
        let voxel = s_d.spacing().into_iter().fold(0.0, f64::max);
        trim_to_points(&mut filled, free_mm, t * voxel);
    }
    s_d.union(&filled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub seed: u64,
    /// Condition and generated points, in mm.
    pub cloud_mm: PointCloud,
    pub completed: BinaryGrid,
    pub implant: BinaryGrid,
}

/// One stochastic completion of `s_d`.
pub fn complete_defect(
    s_d: &BinaryGrid,
    cond: &ConditionCloud,
    denoiser: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Completion> {
    let out = complete(&cond.normalized, config.points_m, denoiser, sched, seed)?;
    let free_mm: Vec<Vec3> = out.free().iter().map(|p| cond.transform.inverse(*p)).collect();
    let completed = completed_volume(s_d, &free_mm, config)?;
    let implant = generate_implant(&completed, s_d)?;
    Ok(Completion {
        seed,
        cloud_mm: PointCloud::from_parts(&cond.points_mm, &free_mm),
        completed,
        implant,
    })
}

/// `n` completions with seeds `seed + i`, and their ensemble statistics.
pub fn complete_ensemble(
    s_d: &BinaryGrid,
    denoiser: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    config: &PipelineConfig,
    seed: u64,
    n: usize,
) -> Result<(Vec<Completion>, EnsembleStats)> {
    if n == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    let cond = condition_cloud(s_d, config.points_n, seed)?;
    let members = (0..n as u64)
        .into_par_iter()
        .map(|i| complete_defect(s_d, &cond, denoiser, sched, config, seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let implants: Vec<BinaryGrid> = members.iter().map(|m| m.implant.clone()).collect();
    let stats = ensemble_stats(&implants)?;
    Ok((members, stats))
}
