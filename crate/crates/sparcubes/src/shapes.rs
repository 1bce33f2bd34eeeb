//! Parametric shape generators used by the test corpus, benchmarks and the
//! documentation examples. All generators are deterministic.

use crate::geom::Vec3;
use crate::mesh::TriMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Axis-aligned closed box as 12 triangles over 8 shared vertices, wound
/// counter-clockwise seen from outside.
pub fn axis_box(min: &Vec3, max: &Vec3) -> TriMesh {
    let v = vec![
        Vec3::new(min.x, min.y, min.z),
        Vec3::new(max.x, min.y, min.z),
        Vec3::new(max.x, max.y, min.z),
        Vec3::new(min.x, max.y, min.z),
        Vec3::new(min.x, min.y, max.z),
        Vec3::new(max.x, min.y, max.z),
        Vec3::new(max.x, max.y, max.z),
        Vec3::new(min.x, max.y, max.z),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2], // z = min
        [4, 5, 6],
        [4, 6, 7], // z = max
        [0, 1, 5],
        [0, 5, 4], // y = min
        [2, 3, 7],
        [2, 7, 6], // y = max
        [0, 4, 7],
        [0, 7, 3], // x = min
        [1, 2, 6],
        [1, 6, 5], // x = max
    ];
    TriMesh::new(v, faces)
}

/// Closed UV sphere with `nu` segments around and `nv` rings from pole to
/// pole. Triangle count is `2 * nu * (nv - 1)`.
pub fn uv_sphere(center: &Vec3, radius: f64, nu: usize, nv: usize) -> TriMesh {
    assert!(nu >= 3 && nv >= 2);
    let mut vertices = Vec::with_capacity(nu * (nv - 1) + 2);
    vertices.push(center + Vec3::new(0.0, 0.0, radius)); // north pole
    for ring in 1..nv {
        let theta = std::f64::consts::PI * ring as f64 / nv as f64;
        for seg in 0..nu {
            let phi = 2.0 * std::f64::consts::PI * seg as f64 / nu as f64;
            vertices.push(
                center
                    + Vec3::new(
                        radius * theta.sin() * phi.cos(),
                        radius * theta.sin() * phi.sin(),
                        radius * theta.cos(),
                    ),
            );
        }
    }
    vertices.push(center + Vec3::new(0.0, 0.0, -radius)); // south pole
    let south = vertices.len() as u32 - 1;
    let ring_start = |r: usize| 1 + (r - 1) * nu;

    let mut faces = Vec::new();
    for seg in 0..nu {
        let next = (seg + 1) % nu;
        faces.push([
            0,
            (ring_start(1) + seg) as u32,
            (ring_start(1) + next) as u32,
        ]);
    }
    for ring in 1..nv - 1 {
        for seg in 0..nu {
            let next = (seg + 1) % nu;
            let a = (ring_start(ring) + seg) as u32;
            let b = (ring_start(ring) + next) as u32;
            let c = (ring_start(ring + 1) + seg) as u32;
            let d = (ring_start(ring + 1) + next) as u32;
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for seg in 0..nu {
        let next = (seg + 1) % nu;
        faces.push([
            south,
            (ring_start(nv - 1) + next) as u32,
            (ring_start(nv - 1) + seg) as u32,
        ]);
    }
    TriMesh::new(vertices, faces)
}

/// Open rectangular plate spanned by `u` and `v` from `origin`, as a
/// `nu x nv` triangle grid (zero thickness, one boundary loop).
pub fn plate(origin: &Vec3, u: &Vec3, v: &Vec3, nu: usize, nv: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    for j in 0..=nv {
        for i in 0..=nu {
            let fu = i as f64 / nu as f64;
            let fv = j as f64 / nv as f64;
            vertices.push(origin + u * fu + v * fv);
        }
    }
    let idx = |i: usize, j: usize| (j * (nu + 1) + i) as u32;
    let mut faces = Vec::new();
    for j in 0..nv {
        for i in 0..nu {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces)
}

/// Flat open disc: a triangle fan of `n` segments around `center`, lying in
/// the plane orthogonal to `normal`.
pub fn disc(center: &Vec3, normal: &Vec3, radius: f64, n: usize) -> TriMesh {
    assert!(n >= 3);
    let w = normal.normalize();
    let any = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = w.cross(&any).normalize();
    let v = w.cross(&u);
    let mut vertices = vec![*center];
    for i in 0..n {
        let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        vertices.push(center + u * (radius * a.cos()) + v * (radius * a.sin()));
    }
    let mut faces = Vec::new();
    for i in 0..n {
        let next = (i + 1) % n;
        faces.push([0, 1 + i as u32, 1 + next as u32]);
    }
    TriMesh::new(vertices, faces)
}

/// Closed torus around `center` with the given axis frame. Triangle count
/// is `2 * nu * nv`.
pub fn torus(center: &Vec3, major: f64, minor: f64, nu: usize, nv: usize) -> TriMesh {
    torus_oriented(center, major, minor, nu, nv, &Vec3::x(), &Vec3::y(), &Vec3::z())
}

pub fn torus_oriented(
    center: &Vec3,
    major: f64,
    minor: f64,
    nu: usize,
    nv: usize,
    ex: &Vec3,
    ey: &Vec3,
    ez: &Vec3,
) -> TriMesh {
    assert!(nu >= 3 && nv >= 3);
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let a = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        let ring_center = center + ex * (major * a.cos()) + ey * (major * a.sin());
        let radial = ex * a.cos() + ey * a.sin();
        for j in 0..nv {
            let b = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            vertices.push(ring_center + radial * (minor * b.cos()) + ez * (minor * b.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut faces = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, faces)
}

/// Two interlocked tori (a Hopf-link style fixture with genus 2 total).
pub fn torus_link() -> TriMesh {
    let a = torus_oriented(
        &Vec3::new(-0.35, 0.0, 0.0),
        0.45,
        0.12,
        48,
        24,
        &Vec3::x(),
        &Vec3::y(),
        &Vec3::z(),
    );
    let b = torus_oriented(
        &Vec3::new(0.35, 0.0, 0.0),
        0.45,
        0.12,
        48,
        24,
        &Vec3::x(),
        &Vec3::z(),
        &Vec3::y(),
    );
    merge(&[a, b])
}

/// Random self-intersecting triangle soup scattered in a ball.
pub fn soup(seed: u64, count: usize, radius: f64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity(count * 3);
    let mut faces = Vec::with_capacity(count);
    for i in 0..count {
        let c = Vec3::new(
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
        );
        for _ in 0..3 {
            let d = Vec3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            );
            vertices.push(c + d * radius);
        }
        let base = (i * 3) as u32;
        faces.push([base, base + 1, base + 2]);
    }
    TriMesh::new(vertices, faces)
}

/// Concatenate meshes into one, offsetting face indices.
pub fn merge(meshes: &[TriMesh]) -> TriMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for m in meshes {
        let off = vertices.len() as u32;
        vertices.extend_from_slice(&m.vertices);
        faces.extend(m.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }
    TriMesh::new(vertices, faces)
}
