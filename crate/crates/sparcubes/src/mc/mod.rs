//! Sparse marching cubes over the deformed grid: crack-free extraction of
//! the zero level set plus analytic derivatives of every extracted vertex
//! with respect to the corner signed distances and deformations.

mod tables;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::SparseGrid;
use crate::mesh::TriMesh;
use rayon::prelude::*;
use std::collections::HashMap;
pub use tables::{CORNER_OFFSET, EDGE_CORNERS, TRI_TABLE};

/// Grid corners are stored in bit order (bit0 x, bit1 y, bit2 z); the
/// lookup tables ring the bottom face instead. The permutation is its own
/// inverse.
const TABLE_TO_SLOT: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];

/// Sign perturbation applied to corners with phi exactly zero, keeping the
/// corner on the side its flood-fill label chose.
const ZERO_TIE: f64 = 1e-10;

/// Vertex positions keep this distance (as a fraction of the edge) from
/// the corners. Without it, crossings with t near 0 or 1 emit sliver
/// triangles thin enough to be dropped as degenerate after a save/load
/// round trip, opening pinholes in a watertight surface. The stored `t`
/// stays exact; only the placement is clamped.
const T_POSITION_CLAMP: f64 = 1e-5;

/// Derivative bookkeeping for one extracted vertex: the crossed lattice
/// edge, its interpolation parameter and the corner phi values it saw.
#[derive(Debug, Clone, Copy)]
pub struct VertexJacobian {
    pub corner_a: u32,
    pub corner_b: u32,
    pub t: f64,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl VertexJacobian {
    /// Vertex position under the grid's current deformation.
    pub fn position(&self, grid: &SparseGrid) -> Vec3 {
        let qa = grid.corner_pos_deformed(self.corner_a as usize);
        let qb = grid.corner_pos_deformed(self.corner_b as usize);
        let t = self.t.clamp(T_POSITION_CLAMP, 1.0 - T_POSITION_CLAMP);
        qa * (1.0 - t) + qb * t
    }

    /// Weights of `d p / d delta_a` and `d p / d delta_b`, each times the
    /// identity.
    pub fn delta_weights(&self) -> (f64, f64) {
        (1.0 - self.t, self.t)
    }

    /// `d p / d phi_a` under the current deformation.
    pub fn d_phi_a(&self, grid: &SparseGrid) -> Vec3 {
        let qa = grid.corner_pos_deformed(self.corner_a as usize);
        let qb = grid.corner_pos_deformed(self.corner_b as usize);
        let denom = self.phi_a - self.phi_b;
        (qb - qa) * (-self.phi_b / (denom * denom))
    }

    /// `d p / d phi_b` under the current deformation.
    pub fn d_phi_b(&self, grid: &SparseGrid) -> Vec3 {
        let qa = grid.corner_pos_deformed(self.corner_a as usize);
        let qb = grid.corner_pos_deformed(self.corner_b as usize);
        let denom = self.phi_a - self.phi_b;
        (qb - qa) * (self.phi_a / (denom * denom))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExtractionJacobian {
    /// One entry per extracted vertex, aligned with the mesh vertex list.
    pub vertices: Vec<VertexJacobian>,
    /// Grid cube that emitted each triangle.
    pub tri_cube: Vec<u32>,
    /// How many cubes hit a topologically ambiguous sign pattern (resolved
    /// by the table's fixed choice).
    pub ambiguous_cases: usize,
}

/// Recompute all vertex positions from the grid's current deformation.
pub fn vertex_positions(grid: &SparseGrid, jac: &ExtractionJacobian) -> Vec<Vec3> {
    jac.vertices.par_iter().map(|v| v.position(grid)).collect()
}

fn effective_phi(grid: &SparseGrid, corner: usize) -> f64 {
    let phi = grid.phi[corner];
    if phi == 0.0 {
        if grid.sign[corner] == 1 {
            -ZERO_TIE
        } else {
            ZERO_TIE
        }
    } else {
        phi
    }
}

/// Cube cases whose triangulation depends on an ambiguity resolution
/// (diagonal sign patterns on a face or across the body diagonal).
fn case_is_ambiguous(case: u8) -> bool {
    const FACES: [[usize; 4]; 6] = [
        [0, 1, 2, 3],
        [4, 5, 6, 7],
        [0, 1, 5, 4],
        [3, 2, 6, 7],
        [0, 3, 7, 4],
        [1, 2, 6, 5],
    ];
    FACES.iter().any(|f| {
        let s = [
            case >> f[0] & 1,
            case >> f[1] & 1,
            case >> f[2] & 1,
            case >> f[3] & 1,
        ];
        s[0] == s[2] && s[1] == s[3] && s[0] != s[1]
    })
}

/// Standard 256-case marching cubes over the active cubes.
///
/// Vertices land on crossed lattice edges at `t = phi_a / (phi_a - phi_b)`
/// in the undeformed field and are placed on the deformed lattice; one
/// vertex exists per crossed edge globally, so faces shared between cubes
/// stitch exactly. Triangles are wound with outward normals (interior has
/// negative phi).
pub fn marching_cubes(grid: &SparseGrid) -> Result<(TriMesh, ExtractionJacobian)> {
    let n_corners = grid.corners.len() as u32;
    for ids in &grid.cube_corners {
        if ids.iter().any(|&id| id >= n_corners) {
            return Err(Error::MissingCorner(
                *ids.iter().find(|&&id| id >= n_corners).unwrap() as u64,
            ));
        }
    }

    // per-cube triangle emission in deterministic cube order
    let per_cube: Vec<(Vec<[u64; 3]>, bool)> = grid
        .cube_corners
        .par_iter()
        .map(|ids| {
            let mut case = 0u8;
            for (table_corner, &slot) in TABLE_TO_SLOT.iter().enumerate() {
                if effective_phi(grid, ids[slot] as usize) < 0.0 {
                    case |= 1 << table_corner;
                }
            }
            let row = &TRI_TABLE[case as usize];
            let mut tris = Vec::new();
            let mut e = 0;
            while row[e] >= 0 {
                let mut tri = [0u64; 3];
                for (v, slot) in tri.iter_mut().enumerate() {
                    let edge = row[e + v] as usize;
                    let a = ids[TABLE_TO_SLOT[EDGE_CORNERS[edge][0]]];
                    let b = ids[TABLE_TO_SLOT[EDGE_CORNERS[edge][1]]];
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    *slot = ((lo as u64) << 32) | hi as u64;
                }
                tris.push(tri);
                e += 3;
            }
            let ambiguous = !tris.is_empty() && case_is_ambiguous(case);
            (tris, ambiguous)
        })
        .collect();

    // first-encounter vertex numbering keyed by the crossed edge
    let mut edge_vertex: HashMap<u64, u32> = HashMap::new();
    let mut entries: Vec<VertexJacobian> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut tri_cube: Vec<u32> = Vec::new();
    let mut ambiguous_cases = 0usize;

    for (cube, (tris, ambiguous)) in per_cube.iter().enumerate() {
        if *ambiguous {
            ambiguous_cases += 1;
        }
        for tri in tris {
            let mut idx = [0u32; 3];
            for (v, &key) in tri.iter().enumerate() {
                idx[v] = *edge_vertex.entry(key).or_insert_with(|| {
                    let a = (key >> 32) as u32;
                    let b = (key & 0xffff_ffff) as u32;
                    let phi_a = effective_phi(grid, a as usize);
                    let phi_b = effective_phi(grid, b as usize);
                    let t = phi_a / (phi_a - phi_b);
                    entries.push(VertexJacobian {
                        corner_a: a,
                        corner_b: b,
                        t,
                        phi_a,
                        phi_b,
                    });
                    (entries.len() - 1) as u32
                });
            }
            // table rows wind toward the negative side; flip for outward
            // normals under the interior-is-negative convention
            faces.push([idx[0], idx[2], idx[1]]);
            tri_cube.push(cube as u32);
        }
    }

    let jac = ExtractionJacobian {
        vertices: entries,
        tri_cube,
        ambiguous_cases,
    };
    let positions = vertex_positions(grid, &jac);
    let mut mesh = TriMesh::new(positions, faces);

    // drop exactly-degenerate triangles (t at 0/1 can collapse an edge)
    let mut keep = Vec::with_capacity(mesh.faces.len());
    let mut kept_cubes = Vec::with_capacity(mesh.faces.len());
    for (f, face) in mesh.faces.iter().enumerate() {
        let [a, b, c] = *face;
        let pa = mesh.vertices[a as usize];
        let pb = mesh.vertices[b as usize];
        let pc = mesh.vertices[c as usize];
        if (pb - pa).cross(&(pc - pa)).norm_squared() > 0.0 {
            keep.push(*face);
            kept_cubes.push(jac.tri_cube[f]);
        }
    }
    mesh.faces = keep;
    let jac = ExtractionJacobian {
        tri_cube: kept_cubes,
        ..jac
    };
    Ok((mesh, jac))
}

/// Grid construction helpers shared by the unit tests of several modules.
#[cfg(test)]
pub(crate) mod test_fixtures {
    use crate::geom::Vec3;
    use crate::grid::{CornerKey, SparseGrid};
    use std::collections::HashMap as Map;

    /// Hand-build a grid of `nx x ny x nz` cubes with the given phi field
    /// evaluated at padded lattice coordinates.
    pub fn dense_block(
        nx: i32,
        ny: i32,
        nz: i32,
        mut phi: impl FnMut(i32, i32, i32) -> f64,
    ) -> SparseGrid {
        let base = 10; // park the block away from the lattice origin
        let mut cubes = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    cubes.push([base + i, base + j, base + k]);
                }
            }
        }
        cubes.sort_by_key(|&[i, j, k]| CornerKey::pack(i as u32, j as u32, k as u32).0);
        let mut corner_keys: Vec<u64> = cubes
            .iter()
            .flat_map(|&[i, j, k]| {
                (0..8).map(move |c| {
                    let [di, dj, dk] = crate::grid::corner_offset(c);
                    CornerKey::pack(i as u32 + di, j as u32 + dj, k as u32 + dk).0
                })
            })
            .collect();
        corner_keys.sort_unstable();
        corner_keys.dedup();
        let corners: Vec<[i32; 3]> = corner_keys
            .iter()
            .map(|&key| {
                let [i, j, k] = CornerKey(key).unpack();
                [i as i32, j as i32, k as i32]
            })
            .collect();
        let cube_corners: Vec<[u32; 8]> = cubes
            .iter()
            .map(|&[i, j, k]| {
                let mut ids = [0u32; 8];
                for (c, slot) in ids.iter_mut().enumerate() {
                    let [di, dj, dk] = crate::grid::corner_offset(c);
                    let key = CornerKey::pack(i as u32 + di, j as u32 + dj, k as u32 + dk).0;
                    *slot = corner_keys.binary_search(&key).unwrap() as u32;
                }
                ids
            })
            .collect();
        let phi_vals: Vec<f64> = corners.iter().map(|&[i, j, k]| phi(i, j, k)).collect();
        let n = corners.len();
        crate::grid::grid_from_parts(
            64,
            2.0,
            3,
            cubes,
            cube_corners,
            corners,
            phi_vals,
            vec![Vec3::zeros(); n],
        )
        .unwrap()
    }

    pub fn single_cube(phis: [f64; 8]) -> SparseGrid {
        // phis indexed by grid slot (bit order)
        let lookup: Map<[i32; 3], f64> = (0..8usize)
            .map(|c| {
                let [di, dj, dk] = crate::grid::corner_offset(c);
                ([10 + di as i32, 10 + dj as i32, 10 + dk as i32], phis[c])
            })
            .collect();
        dense_block(1, 1, 1, |i, j, k| lookup[&[i, j, k]])
    }
}
