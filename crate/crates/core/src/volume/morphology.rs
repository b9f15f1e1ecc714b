//! Binary morphology on 3D masks. Voxels outside the grid count as background.

use super::BinaryGrid;

const FACE_NEIGHBOURS: [[isize; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Majority vote over the 3×3×3 neighbourhood (at least 14 of 27 set).
pub fn median_filter3(grid: &BinaryGrid) -> BinaryGrid {
    let [nx, ny, nz] = grid.dims();
    let src = grid.as_slice();
    // Separable box sums: x, then y, then z.
    let mut sx = vec![0u8; src.len()];
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            for x in 0..nx {
                let mut s = src[row + x];
                if x > 0 {
                    s += src[row + x - 1];
                }
                if x + 1 < nx {
                    s += src[row + x + 1];
                }
                sx[row + x] = s;
            }
        }
    }
    let mut sy = vec![0u8; src.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                let mut s = sx[i];
                if y > 0 {
                    s += sx[i - nx];
                }
                if y + 1 < ny {
                    s += sx[i + nx];
                }
                sy[i] = s;
            }
        }
    }
    let plane = nx * ny;
    let mut out = grid.clone();
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        let z = i / plane;
        let mut s = sy[i];
        if z > 0 {
            s += sy[i - plane];
        }
        if z + 1 < nz {
            s += sy[i + plane];
        }
        *o = (s >= 14) as u8;
    }
    out
}

fn erode_once(grid: &BinaryGrid) -> BinaryGrid {
    let mut out = grid.clone();
    let [nx, ny, nz] = grid.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid.get(x, y, z) == 0 {
                    continue;
                }
                let keep = FACE_NEIGHBOURS.iter().all(|d| {
                    grid.get_or_default(x as isize + d[0], y as isize + d[1], z as isize + d[2])
                        == 1
                });
                if !keep {
                    out.set(x, y, z, 0);
                }
            }
        }
    }
    out
}

fn dilate_once(grid: &BinaryGrid) -> BinaryGrid {
    let mut out = grid.clone();
    let [nx, ny, nz] = grid.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid.get(x, y, z) == 1 {
                    continue;
                }
                let hit = FACE_NEIGHBOURS.iter().any(|d| {
                    grid.get_or_default(x as isize + d[0], y as isize + d[1], z as isize + d[2])
                        == 1
                });
                if hit {
                    out.set(x, y, z, 1);
                }
            }
        }
    }
    out
}

/// Erosion by the 6-connected discrete ball `{o : |o|₁ ≤ radius}`.
///
/// The ball of radius `r` is the `r`-fold Minkowski sum of the face cross,
/// so erosion by it is `r` successive cross erosions.
pub fn binary_erode(grid: &BinaryGrid, radius: usize) -> BinaryGrid {
    (0..radius).fold(grid.clone(), |g, _| erode_once(&g))
}

/// Dilation by the same ball as [`binary_erode`], clipped to the grid.
pub fn binary_dilate(grid: &BinaryGrid, radius: usize) -> BinaryGrid {
    (0..radius).fold(grid.clone(), |g, _| dilate_once(&g))
}

/// Erosion followed by dilation. The result is a subset of the input.
pub fn binary_opening(grid: &BinaryGrid, radius: usize) -> BinaryGrid {
    binary_dilate(&binary_erode(grid, radius), radius)
}
