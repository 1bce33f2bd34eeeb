//! Geometric fidelity metrics between surface samplings -- Chamfer
//! distance, absolute normal consistency, F1 -- plus the structural
//! watertightness audit. Every protocol knob (sample count, seed, distance
//! convention, F1 threshold rule) is embedded in the report so numbers
//! stay interpretable.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};

/// Area-uniform surface sampling with per-sample face normals.
#[derive(Debug, Clone)]
pub struct SampledCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub faces: Vec<u32>,
}

/// Deterministic area-weighted sampling: cumulative face areas, one
/// uniform draw per sample, square-root barycentric placement.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<SampledCloud> {
    if mesh.is_empty() || n == 0 {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateBounds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.gen_range(0.0..total);
        let f = cumulative.partition_point(|&c| c <= pick).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.face_points(f);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let (u, v) = (1.0 - s, s * (1.0 - r2));
        let w = 1.0 - u - v;
        points.push(a * u + b * v + c * w);
        normals.push(mesh.face_normal(f));
        faces.push(f as u32);
    }
    Ok(SampledCloud {
        points,
        normals,
        faces,
    })
}

// ------------------------------------------------------------- kd-tree

const KD_LEAF: usize = 8;

enum KdNode {
    Leaf {
        start: u32,
        len: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Static 3-d tree over a point set for exact nearest neighbors, ties
/// resolved toward the lowest point index.
pub struct KdTree {
    nodes: Vec<KdNode>,
    order: Vec<u32>,
    points: Vec<Vec3>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(&mut nodes, &mut order, 0, points);
        }
        KdTree {
            nodes,
            order,
            points: points.to_vec(),
        }
    }

    /// Index of the nearest point and rounded distance; exact over the
    /// whole set.
    pub fn nearest(&self, q: &Vec3) -> (u32, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        if !self.nodes.is_empty() {
            self.search(0, q, &mut best);
        }
        (best.0, best.1.sqrt())
    }

    fn search(&self, node: u32, q: &Vec3, best: &mut (u32, f64)) {
        match &self.nodes[node as usize] {
            KdNode::Leaf { start, len } => {
                for i in *start..(*start + *len) {
                    let idx = self.order[i as usize];
                    let d = (self.points[idx as usize] - q).norm_squared();
                    if d < best.1 || (d == best.1 && idx < best.0) {
                        *best = (idx, d);
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis as usize] - value;
                let (near, far) = if delta <= 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, q, best);
                if delta * delta <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(nodes: &mut Vec<KdNode>, order: &mut [u32], start: usize, points: &[Vec3]) -> u32 {
    let slot = nodes.len() as u32;
    if order.len() <= KD_LEAF {
        nodes.push(KdNode::Leaf {
            start: start as u32,
            len: order.len() as u32,
        });
        return slot;
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i as usize]);
        hi = hi.sup(&points[i as usize]);
    }
    let ext = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0usize
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        (points[a as usize][axis], a)
            .partial_cmp(&(points[b as usize][axis], b))
            .unwrap()
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(KdNode::Split {
        axis: axis as u8,
        value,
        left: 0,
        right: 0,
    });
    let (head, tail) = order.split_at_mut(mid);
    let left = build_node(nodes, head, start, points);
    let right = build_node(nodes, tail, start + mid, points);
    if let KdNode::Split { left: l, right: r, .. } = &mut nodes[slot as usize] {
        *l = left;
        *r = right;
    }
    slot
}

// ------------------------------------------------------------- metrics

/// Chamfer distance: symmetric mean nearest-neighbor L2 distance (not
/// squared), in the input coordinate units.
pub fn chamfer(a: &SampledCloud, b: &SampledCloud) -> f64 {
    let (ab, ba) = rayon::join(
        || mean_nn_distance(&a.points, b),
        || mean_nn_distance(&b.points, a),
    );
    0.5 * (ab + ba)
}

fn mean_nn_distance(from: &[Vec3], to: &SampledCloud) -> f64 {
    let tree = KdTree::build(&to.points);
    let sum: f64 = from
        .par_iter()
        .map(|p| tree.nearest(p).1)
        .collect::<Vec<_>>()
        .iter()
        .sum();
    sum / from.len() as f64
}

/// Absolute normal consistency, scaled to [0, 100]: mean |n . n_nn| in
/// both directions.
pub fn anc(a: &SampledCloud, b: &SampledCloud) -> f64 {
    let one_way = |from: &SampledCloud, to: &SampledCloud| -> f64 {
        let tree = KdTree::build(&to.points);
        let sum: f64 = from
            .points
            .par_iter()
            .zip(from.normals.par_iter())
            .map(|(p, n)| {
                let (idx, _) = tree.nearest(p);
                n.dot(&to.normals[idx as usize]).abs()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        sum / from.points.len() as f64
    };
    let (ab, ba) = rayon::join(|| one_way(a, b), || one_way(b, a));
    100.0 * 0.5 * (ab + ba)
}

/// F1 score at distance threshold `tau`, scaled to [0, 100]; 0 when both
/// precision and recall vanish.
pub fn f1(a: &SampledCloud, b: &SampledCloud, tau: f64) -> f64 {
    assert!(tau > 0.0, "tau must be positive");
    let fraction_within = |from: &SampledCloud, to: &SampledCloud| -> f64 {
        let tree = KdTree::build(&to.points);
        let hits = from
            .points
            .par_iter()
            .filter(|p| tree.nearest(p).1 <= tau)
            .count();
        hits as f64 / from.points.len() as f64
    };
    let (precision, recall) = rayon::join(|| fraction_within(a, b), || fraction_within(b, a));
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

/// Structural audit: undirected edge incidence counts, face-adjacency
/// components and the Euler characteristic over referenced vertices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WatertightAudit {
    pub boundary_edge_count: usize,
    pub nonmanifold_edge_count: usize,
    pub connected_components: usize,
    pub euler_characteristic: i64,
}

impl WatertightAudit {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edge_count == 0 && self.nonmanifold_edge_count == 0
    }
}

/// Label each face with its connected component (faces are adjacent when
/// they share an undirected edge). Labels are compacted to 0..count in
/// first-appearance order.
pub fn face_components(mesh: &TriMesh) -> (Vec<u32>, usize) {
    let mut dsu: Vec<u32> = (0..mesh.faces.len() as u32).collect();
    fn find(dsu: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while dsu[root as usize] != root {
            root = dsu[root as usize];
        }
        let mut cur = x;
        while dsu[cur as usize] != root {
            let next = dsu[cur as usize];
            dsu[cur as usize] = root;
            cur = next;
        }
        root
    }
    let mut edge_faces: HashMap<(u32, u32), u32> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let a = f[k].min(f[(k + 1) % 3]);
            let b = f[k].max(f[(k + 1) % 3]);
            match edge_faces.entry((a, b)) {
                std::collections::hash_map::Entry::Vacant(v) => {
                    v.insert(fi as u32);
                }
                std::collections::hash_map::Entry::Occupied(o) => {
                    let ra = find(&mut dsu, *o.get());
                    let rb = find(&mut dsu, fi as u32);
                    if ra != rb {
                        dsu[ra.max(rb) as usize] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut labels = vec![0u32; mesh.faces.len()];
    let mut remap: HashMap<u32, u32> = HashMap::new();
    for f in 0..mesh.faces.len() as u32 {
        let root = find(&mut dsu, f);
        let next = remap.len() as u32;
        labels[f as usize] = *remap.entry(root).or_insert(next);
    }
    (labels, remap.len())
}

pub fn watertight_audit(mesh: &TriMesh) -> WatertightAudit {
    let mut edges: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let a = f[k].min(f[(k + 1) % 3]);
            let b = f[k].max(f[(k + 1) % 3]);
            *edges.entry((a, b)).or_insert(0) += 1;
        }
    }
    let boundary = edges.values().filter(|&&c| c == 1).count();
    let nonmanifold = edges.values().filter(|&&c| c >= 3).count();
    let (_, components) = face_components(mesh);

    let referenced: std::collections::HashSet<u32> =
        mesh.faces.iter().flatten().copied().collect();
    let euler = referenced.len() as i64 - edges.len() as i64 + mesh.faces.len() as i64;

    WatertightAudit {
        boundary_edge_count: boundary,
        nonmanifold_edge_count: nonmanifold,
        connected_components: components,
        euler_characteristic: euler,
    }
}

/// Full comparison report. Distances are measured in the reference mesh's
/// normalized frame; the F1 threshold is relative to the reference
/// bounding-box diagonal.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Chamfer distance, scaled by 1e4.
    pub cd: f64,
    /// Absolute normal consistency in [0, 100].
    pub anc: f64,
    /// F1 score in [0, 100].
    pub f1: f64,
    pub tau: f64,
    pub audit: WatertightAudit,
    pub samples: usize,
    pub seed: u64,
    pub tau_rel: f64,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# chamfer uses mean L2 (not squared); tau = tau_rel * reference bbox diagonal\n");
        s.push_str(&format!("cd_x1e4 = {}\n", self.cd));
        s.push_str(&format!("anc_x1e2 = {}\n", self.anc));
        s.push_str(&format!("f1_x1e2 = {}\n", self.f1));
        s.push_str(&format!("tau = {}\n", self.tau));
        s.push_str(&format!("tau_rel = {}\n", self.tau_rel));
        s.push_str(&format!("samples = {}\n", self.samples));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!(
            "boundary_edge_count = {}\n",
            self.audit.boundary_edge_count
        ));
        s.push_str(&format!(
            "nonmanifold_edge_count = {}\n",
            self.audit.nonmanifold_edge_count
        ));
        s.push_str(&format!(
            "connected_components = {}\n",
            self.audit.connected_components
        ));
        s.push_str(&format!(
            "euler_characteristic = {}\n",
            self.audit.euler_characteristic
        ));
        s.push_str(&format!("is_watertight = {}\n", self.audit.is_watertight()));
        s
    }

    pub fn to_json(&self) -> String {
        format!(
            "{{\"cd_x1e4\": {}, \"anc_x1e2\": {}, \"f1_x1e2\": {}, \"tau\": {}, \
             \"tau_rel\": {}, \"samples\": {}, \"seed\": {}, \
             \"cd_convention\": \"mean-l2\", \
             \"boundary_edge_count\": {}, \"nonmanifold_edge_count\": {}, \
             \"connected_components\": {}, \"euler_characteristic\": {}, \
             \"is_watertight\": {}}}",
            self.cd,
            self.anc,
            self.f1,
            self.tau,
            self.tau_rel,
            self.samples,
            self.seed,
            self.audit.boundary_edge_count,
            self.audit.nonmanifold_edge_count,
            self.audit.connected_components,
            self.audit.euler_characteristic,
            self.audit.is_watertight()
        )
    }
}

/// Compare `test` against `reference`: both are mapped into the
/// reference's canonical frame, sampled with the same protocol, and the
/// test mesh is audited structurally.
pub fn compare_meshes(
    reference: &TriMesh,
    test: &TriMesh,
    samples: usize,
    seed: u64,
    tau_rel: f64,
) -> Result<MetricsReport> {
    let (ref_norm, t) = crate::mesh::normalize(reference)?;
    let test_norm = TriMesh::new(
        test.vertices.iter().map(|v| t.apply(v)).collect(),
        test.faces.clone(),
    );
    let tau = tau_rel * ref_norm.bbox().diagonal();
    let ref_cloud = sample_surface(&ref_norm, samples, seed)?;
    let test_cloud = sample_surface(&test_norm, samples, seed.wrapping_add(1))?;
    Ok(MetricsReport {
        cd: 1e4 * chamfer(&ref_cloud, &test_cloud),
        anc: anc(&ref_cloud, &test_cloud),
        f1: f1(&ref_cloud, &test_cloud, tau),
        tau,
        audit: watertight_audit(test),
        samples,
        seed,
        tau_rel,
    })
}
