use std::collections::HashMap;

use super::mc_table::{CORNERS, EDGES, TRI_TABLE};
use super::TriMesh;
use crate::error::{Error, Result};
use crate::volume::BinaryGrid;

/// Extracts the `iso` level set of a binary grid with linear edge interpolation.
///
/// Voxels outside the grid are treated as background, so the surface of a
/// shape touching the border is still closed. Vertex coordinates are
/// `index * spacing`, i.e. voxel centres sit on the lattice points.
pub fn marching_cubes(grid: &BinaryGrid, iso: f64) -> Result<TriMesh> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(Error::invalid(format!("iso level {iso} must lie in (0, 1)")));
    }
    let ones = grid.count_ones();
    if ones == 0 || ones == grid.len() {
        return Err(Error::NoSurface);
    }
    let [nx, ny, nz] = grid.dims().map(|d| d as i64);
    let spacing = grid.spacing();
    let value = |p: [i64; 3]| grid.get_or_default(p[0] as isize, p[1] as isize, p[2] as isize) as f64;

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut edge_vertex: HashMap<([i64; 3], usize), usize> = HashMap::new();

    for z in -1..nz {
        for y in -1..ny {
            for x in -1..nx {
                let mut corner_values = [0.0; 8];
                let mut config = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let v = value([x + off[0], y + off[1], z + off[2]]);
                    corner_values[c] = v;
                    if v < iso {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }
                let row = &TRI_TABLE[config];
                let mut local = [usize::MAX; 12];
                for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                    let mut ids = [0usize; 3];
                    for (k, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if local[e] == usize::MAX {
                            let [ca, cb] = EDGES[e];
                            let pa = [x + CORNERS[ca][0], y + CORNERS[ca][1], z + CORNERS[ca][2]];
                            let pb = [x + CORNERS[cb][0], y + CORNERS[cb][1], z + CORNERS[cb][2]];
                            // Canonical key: lower lattice point plus axis.
                            let (lo, hi, va, vb) = if pa <= pb {
                                (pa, pb, corner_values[ca], corner_values[cb])
                            } else {
                                (pb, pa, corner_values[cb], corner_values[ca])
                            };
                            let axis = (0..3).find(|&a| lo[a] != hi[a]).unwrap();
                            local[e] = *edge_vertex.entry((lo, axis)).or_insert_with(|| {
                                let t = (iso - va) / (vb - va);
                                let mut p = [0.0; 3];
                                for a in 0..3 {
                                    p[a] = (lo[a] as f64 + t * (hi[a] - lo[a]) as f64) * spacing[a];
                                }
                                vertices.push(p);
                                vertices.len() - 1
                            });
                        }
                        ids[k] = local[e];
                    }
                    triangles.push(ids);
                }
            }
        }
    }
    let mesh = TriMesh { vertices, triangles };
    debug_assert!(mesh.validate().is_ok());
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(n: usize, r: f64) -> BinaryGrid {
        let c = (n as f64 - 1.0) / 2.0;
        BinaryGrid::from_fn([n; 3], [1.0; 3], |x, y, z| {
            let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
            (d2 <= r * r) as u8
        })
        .unwrap()
    }

    #[test]
    fn single_voxel_is_a_closed_sphere() {
        let mut g = BinaryGrid::zeros([5; 3], [1.0; 3]).unwrap();
        g.set(2, 2, 2, 1);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        mesh.validate().unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler_characteristic(), 2);
        assert_eq!(mesh.vertices.len(), 6);
        assert_eq!(mesh.triangles.len(), 8);
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn empty_and_full_grids_have_no_surface() {
        let zeros = BinaryGrid::zeros([4; 3], [1.0; 3]).unwrap();
        assert!(matches!(marching_cubes(&zeros, 0.5), Err(Error::NoSurface)));
        let ones = BinaryGrid::filled([4; 3], [1.0; 3], 1).unwrap();
        assert!(matches!(marching_cubes(&ones, 0.5), Err(Error::NoSurface)));
    }

    #[test]
    fn digitized_sphere_volume_and_watertightness() {
        let g = ball(64, 10.0);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert!(mesh.is_watertight());
        let expected = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        let vol = mesh.signed_volume();
        assert!((vol - expected).abs() / expected < 0.05, "volume {vol}");
    }

    #[test]
    fn spacing_scales_coordinates() {
        let mut g = BinaryGrid::zeros([3, 3, 3], [0.5, 1.0, 2.0]).unwrap();
        g.set(1, 1, 1, 1);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        let (lo, hi) = crate::geom::bounding_box(&mesh.vertices).unwrap();
        assert_eq!(lo, [0.25, 0.5, 1.0]);
        assert_eq!(hi, [0.75, 1.5, 3.0]);
    }

    #[test]
    fn border_touching_shapes_are_closed() {
        let g = BinaryGrid::from_fn([6; 3], [1.0; 3], |x, _, _| (x < 3) as u8).unwrap();
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert!(mesh.is_watertight());
        let v = mesh.signed_volume();
        // Box edges and corners are chamfered by half a voxel.
        assert!(v < 108.0 && v > 108.0 - 0.25 * 4.0 * 3.0 - 0.25 * 8.0 * 6.0, "volume {v}");
    }

    #[test]
    fn random_masks_produce_closed_manifold_edges() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = BinaryGrid::from_fn([8; 3], [1.0; 3], |_, _, _| rng.random_bool(0.5) as u8)
                .unwrap();
            let mesh = marching_cubes(&g, 0.5).unwrap();
            let valence = mesh.edge_valence();
            assert!(valence.values().all(|&n| n % 2 == 0), "seed {seed}: boundary edge");
        }
    }
}
