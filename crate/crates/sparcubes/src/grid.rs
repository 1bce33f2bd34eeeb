//! The sparse cube grid: active narrow-band cubes, a deduplicated corner
//! lattice and the per-corner fields (unsigned distance, inside/outside
//! label, signed distance, deformation).
//!
//! Lattice frame: the canonical cube [-0.95, 0.95]^3 is tiled with `R`
//! cells of size `h = 1.9 / R` per axis, plus `pad = ceil(band) + 1` guard
//! cells on every side so the bounding-box corner cells can never fall
//! inside the narrow band. Lattice indices are 0-based in the padded frame;
//! index `pad` maps to coordinate -0.95.

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::geom::{tri_aabb_overlap, Vec3};
use crate::mesh::CANONICAL_HALF;
use rayon::prelude::*;

/// Packed lattice coordinate used as the corner (and cube) dedup key.
/// Packing is injective for coordinates below 2^21.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CornerKey(pub u64);

impl CornerKey {
    pub fn pack(i: u32, j: u32, k: u32) -> CornerKey {
        debug_assert!(i < (1 << 21) && j < (1 << 21) && k < (1 << 21));
        CornerKey((i as u64) | ((j as u64) << 21) | ((k as u64) << 42))
    }

    pub fn unpack(self) -> [u32; 3] {
        const MASK: u64 = (1 << 21) - 1;
        [
            (self.0 & MASK) as u32,
            ((self.0 >> 21) & MASK) as u32,
            ((self.0 >> 42) & MASK) as u32,
        ]
    }
}

/// Offset of corner `c` within its cube; bit 0 selects +x, bit 1 +y, bit 2 +z.
#[inline]
pub fn corner_offset(c: usize) -> [u32; 3] {
    [(c & 1) as u32, ((c >> 1) & 1) as u32, ((c >> 2) & 1) as u32]
}

#[derive(Debug, Clone)]
pub struct SparseGrid {
    /// Cells per axis inside the canonical cube (without padding).
    pub resolution: u32,
    /// Narrow-band half width in multiples of `h`.
    pub band: f64,
    /// Guard cells added on each side of the canonical cube.
    pub pad: u32,
    /// Active cube lattice coordinates, sorted by packed key.
    pub cubes: Vec<[i32; 3]>,
    /// Eight corner indices per cube, in the bit order of [`corner_offset`].
    pub cube_corners: Vec<[u32; 8]>,
    /// Whether the input surface actually crosses this cube.
    pub stabbed: Vec<bool>,
    /// Deduplicated corner lattice coordinates, sorted by packed key.
    pub corners: Vec<[i32; 3]>,
    corner_keys: Vec<u64>,
    /// Unsigned distance at each corner (normalized units).
    pub udf: Vec<f64>,
    /// Inside/outside label per corner: 0 exterior, 1 interior.
    pub sign: Vec<u8>,
    /// Signed distance `(1 - 2*sign) * udf`, assembled by the sign stage.
    pub phi: Vec<f64>,
    /// Corner deformation, clamped to half a cell per axis.
    pub delta: Vec<Vec3>,
}

impl SparseGrid {
    /// Cell edge length in normalized units.
    pub fn h(&self) -> f64 {
        2.0 * CANONICAL_HALF / self.resolution as f64
    }

    /// Cells per axis including padding.
    pub fn cells_per_axis(&self) -> u32 {
        self.resolution + 2 * self.pad
    }

    /// Position of lattice index 0.
    pub fn origin(&self) -> f64 {
        -CANONICAL_HALF - self.pad as f64 * self.h()
    }

    pub fn corner_pos(&self, corner: usize) -> Vec3 {
        let [i, j, k] = self.corners[corner];
        let h = self.h();
        let o = self.origin();
        Vec3::new(o + i as f64 * h, o + j as f64 * h, o + k as f64 * h)
    }

    /// Deformed corner position.
    pub fn corner_pos_deformed(&self, corner: usize) -> Vec3 {
        self.corner_pos(corner) + self.delta[corner]
    }

    pub fn corner_index(&self, key: CornerKey) -> Option<u32> {
        self.corner_keys
            .binary_search(&key.0)
            .ok()
            .map(|i| i as u32)
    }

    /// Write a deformation, clamping each component to half a cell so the
    /// deformed lattice can never invert.
    pub fn set_delta(&mut self, corner: usize, d: Vec3) {
        let lim = 0.5 * self.h();
        self.delta[corner] = Vec3::new(
            d.x.clamp(-lim, lim),
            d.y.clamp(-lim, lim),
            d.z.clamp(-lim, lim),
        );
    }

    /// Fraction of delta components sitting at the clamp bound.
    pub fn delta_saturation(&self) -> f64 {
        if self.delta.is_empty() {
            return 0.0;
        }
        let lim = 0.5 * self.h() * (1.0 - 1e-9);
        let hits: usize = self
            .delta
            .iter()
            .map(|d| (0..3).filter(|&i| d[i].abs() >= lim).count())
            .sum();
        hits as f64 / (3 * self.delta.len()) as f64
    }
}

fn pad_for_band(band: f64) -> u32 {
    band.ceil() as u32 + 1
}

/// Derive the guard-cell count stored implicitly in the serialized header.
pub fn pad_from_band_millis(band_millis: u32) -> u32 {
    pad_for_band(band_millis as f64 / 1000.0)
}

/// Build the active narrow band around the surface held by `bvh`.
///
/// Discovery is sparse: each triangle stamps the cells it exactly overlaps,
/// the stamped set is dilated by `ceil(band)` rings, and the candidates are
/// then filtered by the exact per-corner UDF test, so the result equals a
/// dense scan without ever visiting all `R^3` cells.
pub fn extract_active_voxels(bvh: &Bvh, resolution: u32, band: f64) -> Result<SparseGrid> {
    assert!((64..=1024).contains(&resolution), "resolution out of range");
    assert!(band >= 1.0, "band must be at least one cell");

    let pad = pad_for_band(band);
    let cells = resolution + 2 * pad;
    let h = 2.0 * CANONICAL_HALF / resolution as f64;
    let origin = -CANONICAL_HALF - pad as f64 * h;
    // Corners exactly at the band edge (axis-aligned fixtures produce them)
    // would flicker with rounding; the relative guard keeps them out on
    // both sides of the comparison.
    let threshold = band * h * (1.0 - 1e-12);

    // 1. conservative rasterization of every triangle into the lattice
    let tri_count = bvh.triangle_count();
    let per_tri: Vec<Vec<u64>> = (0..tri_count)
        .into_par_iter()
        .map(|t| {
            let [a, b, c] = bvh_triangle(bvh, t);
            let mut keys = Vec::new();
            let lo = a.inf(&b).inf(&c);
            let hi = a.sup(&b).sup(&c);
            let cell_range = |v: f64| ((v - origin) / h).floor() as i64;
            let clamp = |v: i64| v.clamp(0, cells as i64 - 1) as u32;
            let (i0, i1) = (clamp(cell_range(lo.x)), clamp(cell_range(hi.x)));
            let (j0, j1) = (clamp(cell_range(lo.y)), clamp(cell_range(hi.y)));
            let (k0, k1) = (clamp(cell_range(lo.z)), clamp(cell_range(hi.z)));
            // cells are inflated a hair so triangles lying exactly on a
            // lattice plane still stamp both neighbors despite rounding
            let eps = 1e-9 * h;
            for k in k0..=k1 {
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let min = Vec3::new(
                            origin + i as f64 * h - eps,
                            origin + j as f64 * h - eps,
                            origin + k as f64 * h - eps,
                        );
                        let max = min + Vec3::repeat(h + 2.0 * eps);
                        if tri_aabb_overlap(&a, &b, &c, &min, &max) {
                            keys.push(CornerKey::pack(i, j, k).0);
                        }
                    }
                }
            }
            keys
        })
        .collect();
    let mut stabbed_keys: Vec<u64> = per_tri.into_iter().flatten().collect();
    stabbed_keys.par_sort_unstable();
    stabbed_keys.dedup();
    if stabbed_keys.is_empty() {
        return Err(Error::EmptyActiveSet { resolution });
    }

    // 2. Chebyshev dilation, one axis at a time. A corner within band*h of
    // the surface is at most ceil(band) cells from the cell holding its
    // closest surface point; one extra ring absorbs the case where that
    // point sits on a lattice plane and rounding stamps the neighbor cell.
    let radius = band.ceil() as i64 + 1;
    let mut candidates = stabbed_keys.clone();
    for axis in 0..3 {
        let shift = 21 * axis;
        let mut grown: Vec<u64> = candidates
            .par_iter()
            .flat_map_iter(|&key| {
                let coord = ((key >> shift) & ((1 << 21) - 1)) as i64;
                let base = key & !(((1u64 << 21) - 1) << shift);
                (-radius..=radius).filter_map(move |d| {
                    let c = coord + d;
                    if c < 0 || c >= cells as i64 {
                        None
                    } else {
                        Some(base | ((c as u64) << shift))
                    }
                })
            })
            .collect();
        grown.par_sort_unstable();
        grown.dedup();
        candidates = grown;
    }

    // 3. exact UDF at every candidate corner
    let mut cand_corner_keys: Vec<u64> = candidates
        .par_iter()
        .flat_map_iter(|&key| {
            let [i, j, k] = CornerKey(key).unpack();
            (0..8usize).map(move |c| {
                let [di, dj, dk] = corner_offset(c);
                CornerKey::pack(i + di, j + dj, k + dk).0
            })
        })
        .collect();
    cand_corner_keys.par_sort_unstable();
    cand_corner_keys.dedup();

    let cand_udf: Vec<f64> = cand_corner_keys
        .par_iter()
        .map(|&key| {
            let [i, j, k] = CornerKey(key).unpack();
            let p = Vec3::new(
                origin + i as f64 * h,
                origin + j as f64 * h,
                origin + k as f64 * h,
            );
            bvh.udf_query(&p).distance
        })
        .collect();
    let corner_udf = |key: u64| -> f64 {
        let idx = cand_corner_keys.binary_search(&key).expect("corner computed");
        cand_udf[idx]
    };

    // 4. keep exactly the cubes with a corner inside the band
    let active: Vec<u64> = candidates
        .par_iter()
        .copied()
        .filter(|&key| {
            let [i, j, k] = CornerKey(key).unpack();
            (0..8usize).any(|c| {
                let [di, dj, dk] = corner_offset(c);
                corner_udf(CornerKey::pack(i + di, j + dj, k + dk).0) < threshold
            })
        })
        .collect();
    if active.is_empty() {
        return Err(Error::EmptyActiveSet { resolution });
    }

    // 5. final corner set and per-cube corner indices
    let mut corner_keys: Vec<u64> = active
        .par_iter()
        .flat_map_iter(|&key| {
            let [i, j, k] = CornerKey(key).unpack();
            (0..8usize).map(move |c| {
                let [di, dj, dk] = corner_offset(c);
                CornerKey::pack(i + di, j + dj, k + dk).0
            })
        })
        .collect();
    corner_keys.par_sort_unstable();
    corner_keys.dedup();

    let corners: Vec<[i32; 3]> = corner_keys
        .iter()
        .map(|&k| {
            let [i, j, kk] = CornerKey(k).unpack();
            [i as i32, j as i32, kk as i32]
        })
        .collect();
    let udf: Vec<f64> = corner_keys.par_iter().map(|&k| corner_udf(k)).collect();

    let cube_corners: Vec<[u32; 8]> = active
        .par_iter()
        .map(|&key| {
            let [i, j, k] = CornerKey(key).unpack();
            let mut ids = [0u32; 8];
            for (c, slot) in ids.iter_mut().enumerate() {
                let [di, dj, dk] = corner_offset(c);
                let ck = CornerKey::pack(i + di, j + dj, k + dk).0;
                *slot = corner_keys.binary_search(&ck).expect("corner present") as u32;
            }
            ids
        })
        .collect();

    let stabbed: Vec<bool> = active
        .par_iter()
        .map(|key| stabbed_keys.binary_search(key).is_ok())
        .collect();

    let cubes: Vec<[i32; 3]> = active
        .iter()
        .map(|&k| {
            let [i, j, kk] = CornerKey(k).unpack();
            [i as i32, j as i32, kk as i32]
        })
        .collect();

    let n = corners.len();
    Ok(SparseGrid {
        resolution,
        band,
        pad,
        cubes,
        cube_corners,
        stabbed,
        corners,
        corner_keys,
        udf,
        sign: vec![0; n],
        phi: vec![0.0; n],
        delta: vec![Vec3::zeros(); n],
    })
}

fn bvh_triangle(bvh: &Bvh, t: usize) -> [Vec3; 3] {
    bvh.triangle_points(t)
}

/// Assemble a grid from explicit parts (deserialization, synthetic test
/// fields). Corners must be sorted by packed key and deduplicated; the
/// unsigned distances and labels are derived from the sign of phi.
pub fn grid_from_parts(
    resolution: u32,
    band: f64,
    pad: u32,
    cubes: Vec<[i32; 3]>,
    cube_corners: Vec<[u32; 8]>,
    corners: Vec<[i32; 3]>,
    phi: Vec<f64>,
    delta: Vec<Vec3>,
) -> Result<SparseGrid> {
    let corner_keys: Vec<u64> = corners
        .iter()
        .map(|&[i, j, k]| CornerKey::pack(i as u32, j as u32, k as u32).0)
        .collect();
    if corner_keys.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::GridFormat("corners not sorted/deduplicated".into()));
    }
    let n = corners.len();
    for ids in &cube_corners {
        for &id in ids {
            if id as usize >= n {
                return Err(Error::MissingCorner(id as u64));
            }
        }
    }
    let udf: Vec<f64> = phi.iter().map(|p| p.abs()).collect();
    let sign: Vec<u8> = phi.iter().map(|p| if p.is_sign_negative() { 1 } else { 0 }).collect();
    let n_cubes = cubes.len();
    Ok(SparseGrid {
        resolution,
        band,
        pad,
        cubes,
        cube_corners,
        stabbed: vec![false; n_cubes],
        corners,
        corner_keys,
        udf,
        sign,
        phi,
        delta,
    })
}
