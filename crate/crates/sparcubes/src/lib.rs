//! Watertight remeshing through a sparse deformable marching cubes grid.
//!
//! The pipeline converts an arbitrary triangle mesh (open surfaces, soup,
//! multiple components) into a watertight surface: it samples unsigned
//! distances on a sparse narrow-band cube grid, flood-fills inside/outside
//! labels from the domain corners, optimizes per-corner deformations so the
//! zero level set hugs the input, optionally refines against multi-view
//! depth/normal renderings, extracts the isosurface with crack-free sparse
//! marching cubes, and closes any residual holes by ear filling.

pub mod bvh;
pub mod deform;
pub mod error;
pub mod geom;
pub mod grid;
pub mod holes;
pub mod io;
pub mod mc;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod shapes;
pub mod sign;
pub mod spc3;

pub use bvh::{build_bvh, Bvh};
pub use error::{Error, Result};
pub use geom::Vec3;
pub use grid::{extract_active_voxels, grid_from_parts, CornerKey, SparseGrid};
pub use mesh::{denormalize, normalize, NormTransform, TriMesh};
