//! Bounding volume hierarchy over mesh triangles for exact closest-point
//! and unsigned-distance queries.
//!
//! Builds are deterministic: median split over triangle centroids along the
//! longest centroid-bounds axis, ties broken by triangle index, leaves of at
//! most [`LEAF_SIZE`] triangles. Queries are read-only and safe to issue
//! from many threads at once.

use crate::error::{Error, Result};
use crate::geom::{closest_point_on_triangle, Aabb, Vec3};
use crate::mesh::TriMesh;

pub const LEAF_SIZE: usize = 4;

/// Distances at or below this are treated as "on the surface" and make the
/// UDF gradient undefined.
pub const GRADIENT_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Node {
    Internal { aabb: Aabb, left: u32, right: u32 },
    Leaf { aabb: Aabb, start: u32, len: u32 },
}

impl Node {
    fn aabb(&self) -> &Aabb {
        match self {
            Node::Internal { aabb, .. } | Node::Leaf { aabb, .. } => aabb,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices permuted into leaf order.
    tri_order: Vec<u32>,
    /// Triangle vertices flattened in `tri_order` for cache-friendly leaves.
    tris: Vec<[Vec3; 3]>,
    /// Maps an original triangle index to its slot in `tris`.
    inv_order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistResult {
    pub distance: f64,
    pub closest: Vec3,
    pub tri: u32,
}

pub fn build_bvh(mesh: &TriMesh) -> Result<Bvh> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let n = mesh.faces.len();
    let centroids: Vec<Vec3> = (0..n)
        .map(|f| {
            let [a, b, c] = mesh.face_points(f);
            (a + b + c) / 3.0
        })
        .collect();
    let tri_boxes: Vec<Aabb> = (0..n)
        .map(|f| Aabb::from_points(mesh.face_points(f).iter()))
        .collect();

    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut nodes = Vec::with_capacity(2 * n);
    build_node(&mut nodes, &mut order, 0, n, &centroids, &tri_boxes);

    let tris = order
        .iter()
        .map(|&f| mesh.face_points(f as usize))
        .collect();
    let mut inv_order = vec![0u32; n];
    for (slot, &f) in order.iter().enumerate() {
        inv_order[f as usize] = slot as u32;
    }
    Ok(Bvh {
        nodes,
        tri_order: order,
        tris,
        inv_order,
    })
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    start: usize,
    len: usize,
    centroids: &[Vec3],
    tri_boxes: &[Aabb],
) -> u32 {
    let slot = nodes.len() as u32;
    let mut aabb = Aabb::empty();
    for &f in &order[..len] {
        aabb.merge(&tri_boxes[f as usize]);
    }
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            aabb,
            start: start as u32,
            len: len as u32,
        });
        return slot;
    }

    let mut cb = Aabb::empty();
    for &f in &order[..len] {
        cb.grow(&centroids[f as usize]);
    }
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };

    let mid = len / 2;
    order[..len].select_nth_unstable_by(mid, |&a, &b| {
        let ka = (centroids[a as usize][axis], a);
        let kb = (centroids[b as usize][axis], b);
        ka.partial_cmp(&kb).unwrap()
    });

    nodes.push(Node::Internal {
        aabb,
        left: 0,
        right: 0,
    });
    let (head, tail) = order.split_at_mut(mid);
    let left = build_node(nodes, head, start, mid, centroids, tri_boxes);
    let right = build_node(nodes, tail, start + mid, len - mid, centroids, tri_boxes);
    if let Node::Internal {
        left: l, right: r, ..
    } = &mut nodes[slot as usize]
    {
        *l = left;
        *r = right;
    }
    slot
}

impl Bvh {
    pub fn triangle_count(&self) -> usize {
        self.tri_order.len()
    }

    /// Vertices of the original triangle `tri`.
    pub fn triangle_points(&self, tri: usize) -> [Vec3; 3] {
        self.tris[self.inv_order[tri] as usize]
    }

    pub fn root_aabb(&self) -> Aabb {
        *self.nodes[0].aabb()
    }

    /// Exact unsigned distance to the mesh: global minimum over every
    /// triangle, with ties resolved toward the lowest triangle index.
    pub fn udf_query(&self, x: &Vec3) -> DistResult {
        self.udf_query_seeded(x, u32::MAX)
    }

    /// Same result as [`Self::udf_query`], but primes the search with the
    /// distance to `seed_tri` (pass `u32::MAX` for none). A good seed --
    /// say, the closest triangle from a nearby earlier query -- tightens
    /// the pruning bound immediately and cuts traversal cost.
    pub fn udf_query_seeded(&self, x: &Vec3, seed_tri: u32) -> DistResult {
        let mut best = DistResult {
            distance: f64::INFINITY,
            closest: Vec3::zeros(),
            tri: u32::MAX,
        };
        let mut best_sq = f64::INFINITY;
        if (seed_tri as usize) < self.inv_order.len() {
            let [a, b, c] = &self.tris[self.inv_order[seed_tri as usize] as usize];
            let q = closest_point_on_triangle(x, a, b, c);
            best_sq = (x - q).norm_squared();
            best = DistResult {
                distance: 0.0,
                closest: q,
                tri: seed_tri,
            };
        }
        // manual stack keeps the query allocation-free after warmup
        let mut stack = [0u32; 64];
        let mut top = 0usize;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if node.aabb().dist_sq(x) > best_sq {
                continue;
            }
            match node {
                Node::Leaf { start, len, .. } => {
                    for i in *start..(*start + *len) {
                        let [a, b, c] = &self.tris[i as usize];
                        let q = closest_point_on_triangle(x, a, b, c);
                        let d_sq = (x - q).norm_squared();
                        let tri = self.tri_order[i as usize];
                        if d_sq < best_sq || (d_sq == best_sq && tri < best.tri) {
                            best_sq = d_sq;
                            best = DistResult {
                                distance: 0.0,
                                closest: q,
                                tri,
                            };
                        }
                    }
                }
                Node::Internal { left, right, .. } => {
                    let dl = self.nodes[*left as usize].aabb().dist_sq(x);
                    let dr = self.nodes[*right as usize].aabb().dist_sq(x);
                    // push the farther child first so the nearer is explored next
                    if dl <= dr {
                        stack[top] = *right;
                        stack[top + 1] = *left;
                    } else {
                        stack[top] = *left;
                        stack[top + 1] = *right;
                    }
                    top += 2;
                }
            }
        }
        best.distance = best_sq.sqrt();
        best
    }

    /// UDF gradient at `x`: the unit vector from the closest surface point,
    /// or `None` within [`GRADIENT_EPS`] of the surface where the gradient
    /// is singular.
    pub fn udf_gradient(&self, x: &Vec3) -> Option<Vec3> {
        let hit = self.udf_query(x);
        if hit.distance <= GRADIENT_EPS {
            None
        } else {
            Some((x - hit.closest) / hit.distance)
        }
    }
}
