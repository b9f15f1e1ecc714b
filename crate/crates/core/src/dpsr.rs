//! Spectral Poisson voxelization of oriented point clouds.
//!
//! Points are given in grid-index coordinates: cell `i` is centred at `i`, so
//! the periodic domain of an axis with `n` cells is `[-0.5, n - 0.5)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::surface::PointCloud;
use crate::volume::{BinaryGrid, RealGrid};

pub const DEFAULT_SIGMA: f64 = 1.0;

/// Tolerance for points that stray just outside the domain.
const DOMAIN_SLACK: f64 = 1e-6;

/// Splatted normal mass per cell, plus the splatted sample positions.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub dims: [usize; 3],
    pub values: Vec<Vec3>,
    pub samples: Vec<Vec3>,
}

impl VectorField {
    pub fn zeros(dims: [usize; 3]) -> Self {
        VectorField {
            dims,
            values: vec![[0.0; 3]; dims.iter().product()],
            samples: Vec::new(),
        }
    }

    pub fn total(&self) -> Vec3 {
        let mut s = [0.0; 3];
        for v in &self.values {
            for a in 0..3 {
                s[a] += v[a];
            }
        }
        s
    }
}

/// Real scalar field χ on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl IndicatorGrid {
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    /// Periodic trilinear interpolation at a grid-index position.
    pub fn sample(&self, p: Vec3) -> f64 {
        let mut total = 0.0;
        for_each_corner(self.dims, p, |i, w| total += w * self.values[i]);
        total
    }

    pub fn to_real_grid(&self) -> Result<RealGrid> {
        RealGrid::from_vec(
            self.dims,
            self.spacing,
            self.values.iter().map(|&v| v as f32).collect(),
        )
    }
}

fn flat(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// Calls `f(cell, weight)` for the 8 periodic trilinear neighbours of `p`.
fn for_each_corner(dims: [usize; 3], p: Vec3, mut f: impl FnMut(usize, f64)) {
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let fl = p[a].floor();
        base[a] = fl as i64;
        frac[a] = p[a] - fl;
    }
    for corner in 0..8 {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let bit = (corner >> a) & 1;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            idx[a] = (base[a] + bit as i64).rem_euclid(dims[a] as i64) as usize;
        }
        if w != 0.0 {
            f(flat(dims, idx[0], idx[1], idx[2]), w);
        }
    }
}

/// Trilinear splat of every unit normal onto the periodic grid.
pub fn rasterize_oriented_points(cloud: &PointCloud, dims: [usize; 3]) -> Result<VectorField> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::invalid("rasterization needs oriented points"))?;
    if normals.len() != cloud.len() {
        return Err(Error::shape("normal count differs from point count"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid("grid dimensions must be positive"));
    }
    let mut field = VectorField::zeros(dims);
    field.samples.reserve(cloud.len());
    for (p, n) in cloud.points.iter().zip(normals) {
        let mut q = *p;
        for a in 0..3 {
            let hi = dims[a] as f64 - 0.5;
            if !(q[a] >= -0.5 - DOMAIN_SLACK && q[a] <= hi + DOMAIN_SLACK) {
                return Err(Error::invalid(format!(
                    "point {p:?} lies outside the grid domain [-0.5, {hi}] on axis {a}"
                )));
            }
            q[a] = q[a].clamp(-0.5, hi);
        }
        for_each_corner(dims, q, |i, w| {
            for a in 0..3 {
                field.values[i][a] += w * n[a];
            }
        });
        field.samples.push(q);
    }
    Ok(field)
}

/// Angular wavenumbers `2π·fftfreq(n)`.
pub fn wavenumbers(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let j = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * j / n as f64
        })
        .collect()
}

fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::new();
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let mut line = vec![Complex::new(0.0, 0.0); n];
        for start in 0..data.len() {
            // Lines start at cells whose coordinate along `axis` is zero.
            if (start / stride) % n != 0 {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
}

/// The spectral transfer of the solve at one frequency:
/// χ̂ = (i k·v̂)/(−|k|²) · exp(−σ²|k|²/2), and 0 at k = 0.
pub fn spectral_transfer(k: Vec3, v_hat: [Complex<f64>; 3], sigma: f64) -> Complex<f64> {
    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if k2 == 0.0 {
        return Complex::new(0.0, 0.0);
    }
    let div = Complex::new(0.0, 1.0) * (v_hat[0] * k[0] + v_hat[1] * k[1] + v_hat[2] * k[2]);
    div * (-(-0.5 * sigma * sigma * k2).exp() / k2)
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&n| n == 0 || !n.is_power_of_two()) {
        return Err(Error::invalid(format!("grid dims {dims:?} must be powers of two")));
    }
    Ok(())
}

/// Periodic solve of ∇²χ = ∇·v without level-set calibration; χ has zero mean.
pub fn solve_periodic(v: &VectorField, sigma: f64) -> Result<IndicatorGrid> {
    check_dims(v.dims)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be finite and non-negative"));
    }
    let dims = v.dims;
    let n = v.values.len();
    let mut comps: Vec<Vec<Complex<f64>>> = (0..3)
        .map(|a| v.values.iter().map(|x| Complex::new(x[a], 0.0)).collect())
        .collect();
    for c in &mut comps {
        fft3(c, dims, false);
    }
    let kx = wavenumbers(dims[0]);
    let ky = wavenumbers(dims[1]);
    let kz = wavenumbers(dims[2]);
    let mut chi = vec![Complex::new(0.0, 0.0); n];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = flat(dims, x, y, z);
                chi[i] = spectral_transfer(
                    [kx[x], ky[y], kz[z]],
                    [comps[0][i], comps[1][i], comps[2][i]],
                    sigma,
                );
            }
        }
    }
    fft3(&mut chi, dims, true);
    let scale = 1.0 / n as f64;
    Ok(IndicatorGrid {
        dims,
        spacing: [1.0; 3],
        values: chi.iter().map(|c| c.re * scale).collect(),
    })
}

/// [`solve_periodic`], then shifted so χ averages to zero over the splatted
/// sample positions.
pub fn spectral_poisson_solve(v: &VectorField, sigma: f64) -> Result<IndicatorGrid> {
    let mut chi = solve_periodic(v, sigma)?;
    if !v.samples.is_empty() {
        let mean = v.samples.iter().map(|p| chi.sample(*p)).sum::<f64>() / v.samples.len() as f64;
        for c in &mut chi.values {
            *c -= mean;
        }
    }
    Ok(chi)
}

/// 1 where χ ≤ 0.
pub fn voxelize(chi: &IndicatorGrid) -> Result<BinaryGrid> {
    BinaryGrid::from_vec(
        chi.dims,
        chi.spacing,
        chi.values.iter().map(|&c| (c <= 0.0) as u8).collect(),
    )
}

/// −0.5 inside `s`, +0.5 outside.
pub fn gt_indicator(s: &BinaryGrid) -> IndicatorGrid {
    IndicatorGrid {
        dims: s.dims(),
        spacing: s.spacing(),
        values: s.as_slice().iter().map(|&v| if v == 1 { -0.5 } else { 0.5 }).collect(),
    }
}

/// Mean squared difference over all cells.
pub fn indicator_loss(chi_hat: &IndicatorGrid, chi: &IndicatorGrid) -> Result<f64> {
    if chi_hat.dims != chi.dims {
        return Err(Error::shape(format!("{:?} vs {:?}", chi_hat.dims, chi.dims)));
    }
    let sum: f64 = chi_hat
        .values
        .iter()
        .zip(&chi.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / chi.values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oriented(points: Vec<Vec3>, normals: Vec<Vec3>) -> PointCloud {
        let mut c = PointCloud::new(points);
        c.normals = Some(normals);
        c
    }

    #[test]
    fn splat_at_centre_and_corner() {
        let f = rasterize_oriented_points(&oriented(vec![[2.0, 3.0, 1.0]], vec![[0.0, 0.0, 1.0]]), [4; 3]).unwrap();
        assert_eq!(f.values[flat([4; 3], 2, 3, 1)], [0.0, 0.0, 1.0]);
        assert_eq!(f.values.iter().filter(|v| **v != [0.0; 3]).count(), 1);
        let g = rasterize_oriented_points(&oriented(vec![[1.5, 1.5, 1.5]], vec![[1.0, 0.0, 0.0]]), [4; 3]).unwrap();
        let hits: Vec<&Vec3> = g.values.iter().filter(|v| **v != [0.0; 3]).collect();
        assert_eq!(hits.len(), 8);
        assert!(hits.iter().all(|v| v[0] == 0.125));
    }

    #[test]
    fn splat_conserves_mass_and_wraps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| [rng.random_range(-0.5..7.5), rng.random_range(-0.5..7.5), rng.random_range(-0.5..15.5)])
            .collect();
        let nrm: Vec<Vec3> = (0..500)
            .map(|_| crate::geom::normalize([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3]).unwrap())
            .collect();
        let f = rasterize_oriented_points(&oriented(pts, nrm.clone()), [8, 8, 16]).unwrap();
        let mut oracle = [0.0; 3];
        for n in &nrm {
            for a in 0..3 {
                oracle[a] += n[a];
            }
        }
        let total = f.total();
        for a in 0..3 {
            assert!((total[a] - oracle[a]).abs() < 1e-9);
        }
        let outside = oriented(vec![[9.0, 0.0, 0.0]], vec![[1.0, 0.0, 0.0]]);
        assert!(rasterize_oriented_points(&outside, [8; 3]).is_err());
        assert!(rasterize_oriented_points(&PointCloud::new(vec![[0.0; 3]]), [8; 3]).is_err());
    }

    #[test]
    fn zero_source_and_dims() {
        let chi = spectral_poisson_solve(&VectorField::zeros([8, 4, 16]), 1.0).unwrap();
        assert!(chi.values.iter().all(|&v| v == 0.0));
        assert!(solve_periodic(&VectorField::zeros([6, 8, 8]), 1.0).is_err());
    }

    #[test]
    fn translation_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = [8, 8, 8];
        let mut v = VectorField::zeros(dims);
        for x in &mut v.values {
            *x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        }
        let mut shifted = VectorField::zeros(dims);
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    shifted.values[flat(dims, (x + 3) % 8, (y + 1) % 8, z)] = v.values[flat(dims, x, y, z)];
                }
            }
        }
        let a = solve_periodic(&v, 0.7).unwrap();
        let b = solve_periodic(&shifted, 0.7).unwrap();
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    assert!((b.get((x + 3) % 8, (y + 1) % 8, z) - a.get(x, y, z)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sphere_indicator_signs() {
        let n = 32usize;
        let c = 15.5;
        let r = 9.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        let mut nrm = Vec::new();
        for _ in 0..4000 {
            let d = loop {
                let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let l = crate::geom::norm(q);
                if l > 0.1 && l <= 1.0 {
                    break crate::geom::scale(q, 1.0 / l);
                }
            };
            pts.push([c + r * d[0], c + r * d[1], c + r * d[2]]);
            nrm.push(d);
        }
        let f = rasterize_oriented_points(&oriented(pts, nrm), [n; 3]).unwrap();
        let chi = spectral_poisson_solve(&f, DEFAULT_SIGMA).unwrap();
        let (mut inside_ok, mut inside, mut outside_ok, mut outside) = (0, 0, 0, 0);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
                    if d < r - 2.0 {
                        inside += 1;
                        inside_ok += (chi.get(x, y, z) < 0.0) as usize;
                    } else if d > r + 2.0 {
                        outside += 1;
                        outside_ok += (chi.get(x, y, z) > 0.0) as usize;
                    }
                }
            }
        }
        assert!(inside_ok as f64 >= 0.95 * inside as f64, "{inside_ok}/{inside}");
        assert!(outside_ok as f64 >= 0.95 * outside as f64, "{outside_ok}/{outside}");
    }

    #[test]
    fn indicator_laws() {
        let s = BinaryGrid::from_fn([4, 5, 6], [0.4, 0.4, 0.5], |x, y, z| ((x * 7 + y * 3 + z) % 3 == 0) as u8).unwrap();
        assert_eq!(voxelize(&gt_indicator(&s)).unwrap(), s);
        let ones = BinaryGrid::filled([2; 3], [1.0; 3], 1).unwrap();
        assert!(gt_indicator(&ones).values.iter().all(|&v| v == -0.5));
        let mut chi = gt_indicator(&ones);
        chi.values[0] = 0.0;
        chi.values[1] = 0.5;
        let v = voxelize(&chi).unwrap();
        assert_eq!(v.as_slice()[0], 1);
        assert_eq!(v.as_slice()[1], 0);
        let a = gt_indicator(&ones);
        let mut b = a.clone();
        assert_eq!(indicator_loss(&a, &b).unwrap(), 0.0);
        for x in &mut b.values {
            *x += 0.5;
        }
        assert_eq!(indicator_loss(&a, &b).unwrap(), 0.25);
    }
}
