//! Shape completion in point-cloud space with a conditional denoising
//! diffusion model, and conversion of completed shapes back to voxel implants.
//!
//! Pipeline: binary defective volume → marching cubes → blue-noise surface
//! sample → normalized condition cloud → reverse diffusion of free points →
//! normals → spectral Poisson indicator → voxels → Boolean implant, with
//! ensembling and segmentation metrics on top.

pub mod denoiser;
pub mod diffusion;
pub mod dpsr;
pub mod error;
pub mod geom;
pub mod implant;
pub mod metrics;
pub mod pipeline;
pub mod spatial;
pub mod surface;
pub mod synthetic;
pub mod volume;

pub use error::{Error, Result};
pub use geom::Vec3;
pub use surface::{PointCloud, TriMesh};
pub use volume::{boolean_subtract, BinaryGrid, RealGrid, VoxelGrid};
