//! Bit-exact little-endian serialization of the sparse grid.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "SPC3"
//! u32     version, currently 1
//! u32     R (cells per axis inside the canonical cube)
//! u32     band * 1000, rounded
//! u64     cube count
//! u64     corner count
//! cubes   n_cubes  x 3 x i32   padded lattice coordinates
//! corners n_cubes  x 8 x u64   corner indices per cube
//! coords  n_corners x 3 x i32  corner lattice coordinates
//! phi     n_corners x f32      signed distance
//! delta   n_corners x 3 x f32  deformation
//! ```
//!
//! The guard-cell padding is implied by the band field
//! (`pad = ceil(band) + 1`), so readers can reconstruct positions.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::{grid_from_parts, pad_from_band_millis, SparseGrid};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SPC3";
pub const VERSION: u32 = 1;

pub fn write_grid(grid: &SparseGrid, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(grid.resolution)?;
    w.write_u32::<LittleEndian>((grid.band * 1000.0).round() as u32)?;
    w.write_u64::<LittleEndian>(grid.cubes.len() as u64)?;
    w.write_u64::<LittleEndian>(grid.corners.len() as u64)?;
    for c in &grid.cubes {
        for &v in c {
            w.write_i32::<LittleEndian>(v)?;
        }
    }
    for ids in &grid.cube_corners {
        for &id in ids {
            w.write_u64::<LittleEndian>(id as u64)?;
        }
    }
    for c in &grid.corners {
        for &v in c {
            w.write_i32::<LittleEndian>(v)?;
        }
    }
    for &p in &grid.phi {
        w.write_f32::<LittleEndian>(p as f32)?;
    }
    for d in &grid.delta {
        w.write_f32::<LittleEndian>(d.x as f32)?;
        w.write_f32::<LittleEndian>(d.y as f32)?;
        w.write_f32::<LittleEndian>(d.z as f32)?;
    }
    Ok(())
}

pub fn read_grid(r: &mut impl Read) -> Result<SparseGrid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::GridFormat(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::GridFormat(format!("unsupported version {version}")));
    }
    let resolution = r.read_u32::<LittleEndian>()?;
    let band_millis = r.read_u32::<LittleEndian>()?;
    let band = band_millis as f64 / 1000.0;
    let n_cubes = r.read_u64::<LittleEndian>()? as usize;
    let n_corners = r.read_u64::<LittleEndian>()? as usize;

    let mut cubes = Vec::with_capacity(n_cubes);
    for _ in 0..n_cubes {
        let mut c = [0i32; 3];
        for v in &mut c {
            *v = r.read_i32::<LittleEndian>()?;
        }
        cubes.push(c);
    }
    let mut cube_corners = Vec::with_capacity(n_cubes);
    for _ in 0..n_cubes {
        let mut ids = [0u32; 8];
        for id in &mut ids {
            let raw = r.read_u64::<LittleEndian>()?;
            if raw >= n_corners as u64 {
                return Err(Error::MissingCorner(raw));
            }
            *id = raw as u32;
        }
        cube_corners.push(ids);
    }
    let mut corners = Vec::with_capacity(n_corners);
    for _ in 0..n_corners {
        let mut c = [0i32; 3];
        for v in &mut c {
            *v = r.read_i32::<LittleEndian>()?;
        }
        corners.push(c);
    }
    let mut phi = Vec::with_capacity(n_corners);
    for _ in 0..n_corners {
        phi.push(r.read_f32::<LittleEndian>()? as f64);
    }
    let mut delta = Vec::with_capacity(n_corners);
    for _ in 0..n_corners {
        let x = r.read_f32::<LittleEndian>()? as f64;
        let y = r.read_f32::<LittleEndian>()? as f64;
        let z = r.read_f32::<LittleEndian>()? as f64;
        delta.push(Vec3::new(x, y, z));
    }

    grid_from_parts(
        resolution,
        band,
        pad_from_band_millis(band_millis),
        cubes,
        cube_corners,
        corners,
        phi,
        delta,
    )
}

pub fn save_grid(grid: &SparseGrid, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(grid, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<SparseGrid> {
    let mut r = BufReader::new(File::open(path)?);
    read_grid(&mut r)
}

/// Serialize to an in-memory buffer (handy for bit-exactness checks).
pub fn grid_to_bytes(grid: &SparseGrid) -> Vec<u8> {
    let mut buf = Vec::new();
    write_grid(grid, &mut buf).expect("in-memory write cannot fail");
    buf
}
