//! Indexed triangle meshes and the canonical coordinate frame.
//!
//! Every volumetric stage works in the normalized frame where the input's
//! bounding box is centered at the origin and its longest axis spans 1.9
//! units, i.e. the mesh fits inside [-0.95, 0.95]^3. [`NormTransform`]
//! maps between that frame and the original model coordinates.

use crate::error::{Error, Result};
use crate::geom::{tri_area, tri_normal_scaled, Aabb, Vec3};

/// Side length of the canonical cube the normalized mesh fits inside.
pub const CANONICAL_SPAN: f64 = 1.9;
/// Half of [`CANONICAL_SPAN`]; normalized coordinates stay within this bound.
pub const CANONICAL_HALF: f64 = 0.95;

/// Relative face-area threshold below which faces are dropped as degenerate.
/// Measured in normalized units, so it is applied to `area * scale^2`.
const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        TriMesh { vertices, faces }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unit normal of face `f`, or zero for degenerate faces.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_points(f);
        let n = tri_normal_scaled(&a, &b, &c);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        tri_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Drop faces with repeated indices or near-zero area and check basic
    /// well-formedness. Vertices are kept as-is; no welding is performed so
    /// that raw soup connectivity survives.
    pub fn validate(mut self) -> Result<TriMesh> {
        for v in &self.vertices {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::GridFormat("non-finite vertex coordinate".into()));
            }
        }
        let n = self.vertices.len() as u32;
        for f in &self.faces {
            if f[0] >= n || f[1] >= n || f[2] >= n {
                return Err(Error::GridFormat(format!(
                    "face references vertex {} but mesh has {}",
                    f.iter().max().unwrap(),
                    n
                )));
            }
        }
        // area threshold is defined in normalized units
        let bbox = self.bbox();
        let longest = if bbox.is_empty() {
            0.0
        } else {
            bbox.extent().max()
        };
        let area_scale = if longest > 0.0 {
            let s = CANONICAL_SPAN / longest;
            s * s
        } else {
            1.0
        };
        let vertices = &self.vertices;
        let before = self.faces.len();
        self.faces.retain(|f| {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return false;
            }
            let area = tri_area(
                &vertices[f[0] as usize],
                &vertices[f[1] as usize],
                &vertices[f[2] as usize],
            );
            area * area_scale >= DEGENERATE_AREA
        });
        let dropped = before - self.faces.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate face(s)");
        }
        if self.faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(self)
    }
}

/// Similarity transform `x -> scale * x + translate` taking model
/// coordinates into the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTransform {
    pub scale: f64,
    pub translate: Vec3,
}

impl NormTransform {
    pub fn identity() -> Self {
        NormTransform {
            scale: 1.0,
            translate: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.translate
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        (p - self.translate) / self.scale
    }
}

/// Scale and center `mesh` so its bounding box fits inside the canonical
/// cube, longest axis spanning exactly [`CANONICAL_SPAN`].
pub fn normalize(mesh: &TriMesh) -> Result<(TriMesh, NormTransform)> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let bbox = mesh.bbox();
    let longest = bbox.extent().max();
    if !(longest > 0.0) {
        return Err(Error::DegenerateBounds);
    }
    let scale = CANONICAL_SPAN / longest;
    let translate = -bbox.center() * scale;
    let t = NormTransform { scale, translate };
    let vertices = mesh.vertices.iter().map(|v| t.apply(v)).collect();
    Ok((TriMesh::new(vertices, mesh.faces.clone()), t))
}

/// Map a normalized-frame mesh back into original model coordinates.
pub fn denormalize(mesh: &TriMesh, t: &NormTransform) -> TriMesh {
    let vertices = mesh.vertices.iter().map(|v| t.invert(v)).collect();
    TriMesh::new(vertices, mesh.faces.clone())
}

/// Collapse face edges shorter than `threshold` by merging their
/// endpoints (lowest index wins), dropping the triangles that degenerate.
/// Only face-connected vertex pairs ever merge, so separate sheets that
/// merely pass close to each other are never glued together; needle
/// triangles from grazing isosurface crossings disappear along with both
/// of their twins, keeping watertight meshes watertight.
pub fn collapse_short_edges(mesh: &TriMesh, threshold: f64) -> TriMesh {
    let t2 = threshold * threshold;
    let mut rep: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    fn find(rep: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while rep[root as usize] != root {
            root = rep[root as usize];
        }
        let mut cur = x;
        while rep[cur as usize] != root {
            let next = rep[cur as usize];
            rep[cur as usize] = root;
            cur = next;
        }
        root
    }
    let mut merged = 0usize;
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if (mesh.vertices[a as usize] - mesh.vertices[b as usize]).norm_squared() < t2 {
                let (ra, rb) = (find(&mut rep, a), find(&mut rep, b));
                if ra != rb {
                    rep[ra.max(rb) as usize] = ra.min(rb);
                    merged += 1;
                }
            }
        }
    }
    if merged == 0 {
        return mesh.clone();
    }
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut kept: Vec<Vec3> = Vec::new();
    for v in 0..mesh.vertices.len() as u32 {
        let root = find(&mut rep, v);
        if remap[root as usize] == u32::MAX {
            remap[root as usize] = kept.len() as u32;
            kept.push(mesh.vertices[root as usize]);
        }
        remap[v as usize] = remap[root as usize];
    }
    let faces: Vec<[u32; 3]> = mesh
        .faces
        .iter()
        .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    TriMesh::new(kept, faces)
}
