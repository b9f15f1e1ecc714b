//! Surfaces and point clouds: iso-surface extraction, blue-noise sampling,
//! normal estimation, and the mapping into the diffusion coordinate frame.

mod marching_cubes;
mod mc_table;
mod normalization;
mod normals;
mod ply;
mod sampling;

pub use marching_cubes::marching_cubes;
pub use normalization::{apply_normalization, fit_normalization, NormalizationTransform};
pub use normals::{estimate_normals, winding_number};
pub use ply::{read_point_cloud_ply, write_mesh_ply, write_point_cloud_ply};
pub use sampling::{poisson_disk_sample, poisson_disk_sample_faces, uniform_sample_faces, SurfacePoint};

use crate::error::{Error, Result};
use crate::geom::{cross, norm, sub, Vec3};

/// Indexed triangle mesh with coordinates in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn validate(&self) -> Result<()> {
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::Degenerate(format!("triangle {t} indexes past the vertex list")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Degenerate(format!("triangle {t} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume (divergence theorem); positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                crate::geom::dot(p, cross(q, r)) / 6.0
            })
            .sum()
    }

    /// Undirected edges with the number of triangles using each.
    pub fn edge_valence(&self) -> std::collections::HashMap<(usize, usize), usize> {
        let mut edges = std::collections::HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_valence().values().all(|&n| n == 2)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_valence().len() as i64 + self.triangles.len() as i64
    }
}

/// Ordered points: the first `split` are condition points, the rest free points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub split: usize,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    /// A cloud whose points are all free (`split = 0`).
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            split: 0,
            normals: None,
        }
    }

    /// Concatenates condition points and free points.
    pub fn from_parts(condition: &[Vec3], free: &[Vec3]) -> Self {
        let mut points = Vec::with_capacity(condition.len() + free.len());
        points.extend_from_slice(condition);
        points.extend_from_slice(free);
        PointCloud {
            points,
            split: condition.len(),
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn condition(&self) -> &[Vec3] {
        &self.points[..self.split]
    }

    pub fn free(&self) -> &[Vec3] {
        &self.points[self.split..]
    }

    pub fn validate(&self) -> Result<()> {
        if self.split > self.points.len() {
            return Err(Error::invalid(format!(
                "split {} exceeds point count {}",
                self.split,
                self.points.len()
            )));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::shape(format!(
                    "{} normals for {} points",
                    normals.len(),
                    self.points.len()
                )));
            }
            if normals.iter().any(|n| (norm(*n) - 1.0).abs() > 1e-6) {
                return Err(Error::invalid("normals must have unit length"));
            }
        }
        Ok(())
    }
}
