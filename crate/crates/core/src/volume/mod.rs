//! Dense voxel grids with physical spacing.
//!
//! Grids are stored x-fastest: the voxel `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`. Binary grids use `u8` elements restricted to
//! `{0, 1}`; real-valued grids (indicator functions, ensemble statistics)
//! use `f32`, which is also their on-disk width.

mod io;
mod morphology;

pub use io::{
    load_binary, load_real, load_volume, payload_path, read_header, save_volume, Dtype, Volume,
    VolumeHeader,
};
pub use morphology::{binary_dilate, binary_erode, binary_opening, median_filter3};

use crate::error::{Error, Result};

/// Element type of a [`VoxelGrid`].
pub trait Element: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    const DTYPE: Dtype;

    fn is_valid(self) -> bool;
    fn to_f64(self) -> f64;
}

impl Element for u8 {
    const DTYPE: Dtype = Dtype::Uint8;

    #[inline]
    fn is_valid(self) -> bool {
        self <= 1
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::Float32;

    #[inline]
    fn is_valid(self) -> bool {
        self.is_finite()
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

/// Binary mask (`0` background, `1` foreground).
pub type BinaryGrid = VoxelGrid<u8>;
/// Real-valued field.
pub type RealGrid = VoxelGrid<f32>;

fn check_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!(
            "spacing must be positive and finite, got {spacing:?}"
        )));
    }
    Ok(())
}

impl<T: Element> VoxelGrid<T> {
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self> {
        check_geometry(dims, spacing)?;
        if !value.is_valid() {
            return Err(Error::NonBinary {
                index: 0,
                value: value.to_f64(),
            });
        }
        Ok(Self {
            dims,
            spacing,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::filled(dims, spacing, T::default())
    }

    pub fn from_vec(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} values for dims {dims:?} ({expected} voxels)",
                data.len()
            )));
        }
        let grid = Self {
            dims,
            spacing,
            data,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Builds a grid by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        check_geometry(dims, spacing)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::from_vec(dims, spacing, data)
    }

    /// Checks the element invariant (binary grids hold only 0/1, real grids are finite).
    pub fn validate(&self) -> Result<()> {
        if let Some(index) = self.data.iter().position(|v| !v.is_valid()) {
            return Err(Error::NonBinary {
                index,
                value: self.data[index].to_f64(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Raw mutable access. Callers can break the element invariant through
    /// this; [`save_volume`] re-validates before writing.
    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let yz = index / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    /// Value at signed coordinates; `T::default()` outside the grid.
    #[inline]
    pub fn get_or_default(&self, x: isize, y: isize, z: isize) -> T {
        if x < 0
            || y < 0
            || z < 0
            || x as usize >= self.dims[0]
            || y as usize >= self.dims[1]
            || z as usize >= self.dims[2]
        {
            T::default()
        } else {
            self.get(x as usize, y as usize, z as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    /// Physical position (mm) of a voxel centre.
    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            x as f64 * self.spacing[0],
            y as f64 * self.spacing[1],
            z as f64 * self.spacing[2],
        ]
    }

    pub fn same_geometry<U>(&self, other: &VoxelGrid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub(crate) fn require_same_geometry<U>(&self, other: &VoxelGrid<U>) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }

    /// New grid with the same geometry and per-voxel mapped values.
    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Result<VoxelGrid<U>> {
        VoxelGrid::from_vec(self.dims, self.spacing, self.data.iter().map(|&v| f(v)).collect())
    }
}

impl BinaryGrid {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Voxel-wise `a ⊆ b`.
    pub fn is_subset_of(&self, other: &BinaryGrid) -> bool {
        self.same_geometry(other)
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn union(&self, other: &BinaryGrid) -> Result<BinaryGrid> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &BinaryGrid) -> Result<BinaryGrid> {
        self.zip_with(other, |a, b| a & b)
    }

    fn zip_with(&self, other: &BinaryGrid, f: impl Fn(u8, u8) -> u8) -> Result<BinaryGrid> {
        self.require_same_geometry(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            data,
        })
    }
}

/// `out(i) = 1` iff `a(i) = 1` and `b(i) = 0`.
pub fn boolean_subtract(a: &BinaryGrid, b: &BinaryGrid) -> Result<BinaryGrid> {
    a.zip_with(b, |x, y| x & (1 - y.min(1)))
}
