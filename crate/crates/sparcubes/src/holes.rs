//! Hole detection and filling: boundary half-edge counting, loop recovery
//! by walking outgoing boundary edges, and ear clipping ordered by the
//! sharpest convex angle.

use crate::geom::Vec3;
use crate::mesh::TriMesh;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Closed cycle of boundary vertices, oriented along the surviving
/// directed edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryLoop {
    pub vertices: Vec<u32>,
}

impl BoundaryLoop {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct HoleDiagnostics {
    pub loop_lengths: Vec<usize>,
    pub filled: usize,
    pub skipped: usize,
    /// Boundary vertices with more than one outgoing boundary edge.
    pub branch_vertices: usize,
    /// Walks that could not return to their start (mesh defects).
    pub open_walks: usize,
    /// Zero-length directions hit while scoring ears.
    pub degenerate_ears: usize,
}

impl HoleDiagnostics {
    /// JSON-like plain text, one object per line group.
    pub fn report(&self) -> String {
        format!(
            "{{\"loops\": {}, \"lengths\": {:?}, \"filled\": {}, \"skipped\": {}, \
             \"branch_vertices\": {}, \"open_walks\": {}, \"degenerate_ears\": {}}}",
            self.loop_lengths.len(),
            self.loop_lengths,
            self.filled,
            self.skipped,
            self.branch_vertices,
            self.open_walks,
            self.degenerate_ears,
        )
    }
}

fn directed_edges(mesh: &TriMesh) -> impl Iterator<Item = (u32, u32)> + '_ {
    mesh.faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
}

/// Recover the closed boundary loops of `mesh`.
///
/// A directed face edge is a boundary edge when its undirected counterpart
/// appears in exactly one face. Loops are walked through an outgoing-edge
/// map keyed by source vertex; at non-manifold boundary vertices the walk
/// deterministically takes the smallest unused target.
pub fn find_boundary_loops(mesh: &TriMesh) -> (Vec<BoundaryLoop>, HoleDiagnostics) {
    let mut undirected: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for (a, b) in directed_edges(mesh) {
        *undirected.entry((a.min(b), a.max(b))).or_insert(0) += 1;
    }
    let mut outgoing: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut boundary_count = 0usize;
    for (a, b) in directed_edges(mesh) {
        if undirected[&(a.min(b), a.max(b))] == 1 {
            outgoing.entry(a).or_default().push(b);
            boundary_count += 1;
        }
    }
    let mut diag = HoleDiagnostics::default();
    for targets in outgoing.values_mut() {
        targets.sort_unstable();
        if targets.len() > 1 {
            diag.branch_vertices += 1;
            log::warn!(
                "non-manifold boundary vertex with {} outgoing boundary edges",
                targets.len()
            );
        }
    }

    let mut loops = Vec::new();
    let mut consumed = 0usize;
    // walk from every still-unused edge, in deterministic key order
    let starts: Vec<u32> = outgoing.keys().copied().collect();
    for start in starts {
        while let Some(first) = pop_smallest(&mut outgoing, start) {
            let mut cycle = vec![start];
            let mut cur = first;
            consumed += 1;
            let closed = loop {
                if cur == start {
                    break true;
                }
                cycle.push(cur);
                match pop_smallest(&mut outgoing, cur) {
                    Some(next) => {
                        consumed += 1;
                        cur = next;
                    }
                    None => break false,
                }
            };
            if closed && cycle.len() >= 3 {
                diag.loop_lengths.push(cycle.len());
                loops.push(BoundaryLoop { vertices: cycle });
            } else {
                diag.open_walks += 1;
                log::warn!("boundary walk from vertex {start} did not close");
            }
        }
    }
    debug_assert_eq!(consumed, boundary_count);
    (loops, diag)
}

fn pop_smallest(outgoing: &mut BTreeMap<u32, Vec<u32>>, from: u32) -> Option<u32> {
    let targets = outgoing.get_mut(&from)?;
    if targets.is_empty() {
        return None;
    }
    Some(targets.remove(0))
}

/// Pending fill angle at `cur`:
/// `atan2(|d1 x d2|, -d1 . d2)` over the normalized step directions.
/// A straight continuation scores pi, a reversal (spike) scores 0, so the
/// sharpest ears come first. `None` flags a zero-length direction.
pub fn ear_angle(prev: &Vec3, cur: &Vec3, next: &Vec3) -> Option<f64> {
    let d1 = cur - prev;
    let d2 = next - cur;
    let (l1, l2) = (d1.norm(), d2.norm());
    if l1 == 0.0 || l2 == 0.0 {
        return None;
    }
    let d1 = d1 / l1;
    let d2 = d2 / l2;
    Some(d1.cross(&d2).norm().atan2(-d1.dot(&d2)))
}

/// Triangulate one boundary loop by repeatedly clipping the vertex with
/// the smallest angle (ties to the lowest vertex index), emitting exactly
/// `n - 2` triangles. Degenerate zero-length directions score 0 and are
/// clipped first, purging duplicate points.
pub fn fill_loop(cycle: &BoundaryLoop, vertices: &[Vec3]) -> (Vec<[u32; 3]>, usize) {
    let n = cycle.vertices.len();
    assert!(n >= 3, "boundary loop must have at least 3 vertices");
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let pos = |i: usize| vertices[cycle.vertices[i] as usize];
    let mut degenerate = 0usize;
    let score = |i: usize, prev: &[usize], next: &[usize], degenerate: &mut usize| -> f64 {
        match ear_angle(&pos(prev[i]), &pos(i), &pos(next[i])) {
            Some(a) => a,
            None => {
                *degenerate += 1;
                0.0
            }
        }
    };
    let mut angles: Vec<f64> = (0..n)
        .map(|i| score(i, &prev, &next, &mut degenerate))
        .collect();
    let mut alive: Vec<bool> = vec![true; n];
    let mut out = Vec::with_capacity(n - 2);

    for _ in 0..n - 2 {
        let mut best: Option<(f64, u32, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let key = (angles[i], cycle.vertices[i], i);
            if best.map_or(true, |(a, v, p)| key < (a, v, p)) {
                best = Some(key);
            }
        }
        let (_, _, i) = best.expect("loop still has vertices");
        let (p, q) = (prev[i], next[i]);
        out.push([
            cycle.vertices[p],
            cycle.vertices[i],
            cycle.vertices[q],
        ]);
        alive[i] = false;
        next[p] = q;
        prev[q] = p;
        if out.len() < n - 2 {
            angles[p] = score(p, &prev, &next, &mut degenerate);
            angles[q] = score(q, &prev, &next, &mut degenerate);
        }
    }
    (out, degenerate)
}

/// Fill every boundary loop of at most `max_loop` vertices (`None` fills
/// all). Larger loops are reported and left untouched.
pub fn fill_all_holes(mesh: &TriMesh, max_loop: Option<usize>) -> (TriMesh, HoleDiagnostics) {
    let (loops, mut diag) = find_boundary_loops(mesh);
    let to_fill: Vec<&BoundaryLoop> = loops
        .iter()
        .filter(|l| max_loop.map_or(true, |m| l.len() <= m))
        .collect();
    diag.filled = to_fill.len();
    diag.skipped = loops.len() - to_fill.len();

    let fills: Vec<(Vec<[u32; 3]>, usize)> = to_fill
        .par_iter()
        .map(|l| fill_loop(l, &mesh.vertices))
        .collect();
    let mut out = mesh.clone();
    for (tris, degenerate) in fills {
        diag.degenerate_ears += degenerate;
        out.faces.extend(tris);
    }
    (out, diag)
}
