//! Area-weighted surface sampling and blue-noise sample elimination.
//!
//! Blue-noise sets are produced by weighted sample elimination: draw
//! `OVERSAMPLING * count` uniform candidates, weight each by its close
//! neighbours, and repeatedly drop the most crowded one.

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, TriMesh};
use crate::error::{Error, Result};
use crate::geom::{add, scale, Vec3};
use crate::spatial::KdTree;

const OVERSAMPLING: usize = 4;
const WEIGHT_EXPONENT: i32 = 8;

/// A point on a mesh together with the triangle it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub triangle: usize,
}

fn cumulative_areas(mesh: &TriMesh) -> Result<Vec<f64>> {
    mesh.validate()?;
    let mut acc = 0.0;
    let cdf: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| {
            acc += mesh.triangle_area(t);
            acc
        })
        .collect();
    if !(acc > 0.0 && acc.is_finite()) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    Ok(cdf)
}

fn draw(mesh: &TriMesh, cdf: &[f64], rng: &mut impl Rng) -> SurfacePoint {
    let total = *cdf.last().unwrap();
    let target = rng.random::<f64>() * total;
    let triangle = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
    let [a, b, c] = mesh.triangle(triangle);
    let r1 = rng.random::<f64>().sqrt();
    let r2 = rng.random::<f64>();
    let position = add(
        add(scale(a, 1.0 - r1), scale(b, r1 * (1.0 - r2))),
        scale(c, r1 * r2),
    );
    SurfacePoint { position, triangle }
}

/// `count` independent area-uniform points.
pub fn uniform_sample_faces(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<SurfacePoint>> {
    let cdf = cumulative_areas(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| draw(mesh, &cdf, &mut rng)).collect())
}

#[derive(PartialEq)]
struct Entry {
    weight: f64,
    index: usize,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.index.cmp(&other.index))
    }
}

/// Blue-noise sample of exactly `count` surface points with their source triangles.
pub fn poisson_disk_sample_faces(
    mesh: &TriMesh,
    count: usize,
    seed: u64,
) -> Result<Vec<SurfacePoint>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let cdf = cumulative_areas(mesh)?;
    let area = *cdf.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<SurfacePoint> = (0..OVERSAMPLING * count)
        .map(|_| draw(mesh, &cdf, &mut rng))
        .collect();
    let positions: Vec<Vec3> = candidates.iter().map(|c| c.position).collect();

    // Maximal Poisson-disk radius for `count` points on a surface of this area.
    let r_max = (area / (2.0 * 3f64.sqrt() * count as f64)).sqrt();
    let reach = 2.0 * r_max;
    let tree = KdTree::new(&positions);

    let mut neighbours: Vec<Vec<(usize, f64)>> = Vec::with_capacity(positions.len());
    let mut weights = vec![0.0; positions.len()];
    let mut scratch = Vec::new();
    for (i, &p) in positions.iter().enumerate() {
        tree.within_with_distance(p, reach * reach, &mut scratch);
        scratch.sort_unstable_by_key(|e| e.0);
        let list: Vec<(usize, f64)> = scratch
            .iter()
            .filter(|&&(j, _)| j != i)
            .map(|&(j, d2)| (j, (1.0 - d2.sqrt() / reach).powi(WEIGHT_EXPONENT)))
            .collect();
        weights[i] = list.iter().map(|e| e.1).sum();
        neighbours.push(list);
    }

    let mut alive = vec![true; positions.len()];
    let mut heap: BinaryHeap<Entry> = weights
        .iter()
        .enumerate()
        .map(|(index, &weight)| Entry { weight, index })
        .collect();
    let mut remaining = positions.len();
    while remaining > count {
        let Entry { weight, index } = heap.pop().expect("heap holds every live sample");
        if !alive[index] || weight != weights[index] {
            continue;
        }
        alive[index] = false;
        remaining -= 1;
        for &(j, w) in &neighbours[index] {
            if alive[j] {
                weights[j] -= w;
                heap.push(Entry {
                    weight: weights[j],
                    index: j,
                });
            }
        }
    }
    Ok(candidates
        .into_iter()
        .zip(alive)
        .filter_map(|(c, keep)| keep.then_some(c))
        .collect())
}

/// Blue-noise sample of exactly `count` points on `mesh` (all free, no normals).
pub fn poisson_disk_sample(mesh: &TriMesh, count: usize, seed: u64) -> Result<PointCloud> {
    let samples = poisson_disk_sample_faces(mesh, count, seed)?;
    Ok(PointCloud::new(samples.into_iter().map(|s| s.position).collect()))
}

/// Distance from `p` to the plane of triangle `[a, b, c]` together with the
/// most negative barycentric coordinate of its projection.
#[cfg(test)]
pub(crate) fn barycentric_residual(p: Vec3, [a, b, c]: [Vec3; 3]) -> (f64, f64) {
    use crate::geom::{cross, dot, sub};
    let n = cross(sub(b, a), sub(c, a));
    let nn = dot(n, n);
    let off = dot(sub(p, a), n) / nn.sqrt();
    let q = sub(p, scale(n, dot(sub(p, a), n) / nn));
    let u = dot(cross(sub(c, b), sub(q, b)), n) / nn;
    let v = dot(cross(sub(a, c), sub(q, c)), n) / nn;
    let w = 1.0 - u - v;
    (off.abs(), u.min(v).min(w))
}
