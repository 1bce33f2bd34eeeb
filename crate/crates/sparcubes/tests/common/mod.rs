//! Shared fixtures and independent oracles for the integration suites.

use sparcubes::geom::{ray_triangle, Vec3};
use sparcubes::mesh::TriMesh;
use sparcubes::shapes;
use std::sync::Mutex;

/// Serializes tests that measure wall-clock time or saturate the thread
/// pool, so they never contend with each other.
pub static EXCLUSIVE: Mutex<()> = Mutex::new(());

/// Even/odd ray parity against every triangle: the inside/outside oracle
/// for watertight meshes, independent of the flood fill.
pub fn parity_inside(mesh: &TriMesh, p: &Vec3) -> bool {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x517e);
    'attempts: for _ in 0..64 {
        let dir = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if dir.norm() < 1e-3 {
            continue;
        }
        let dir = dir.normalize();
        let mut crossings = 0usize;
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.face_points(f);
            if let Some((_, u, v)) = ray_triangle(p, &dir, &a, &b, &c) {
                let w = 1.0 - u - v;
                if u < 1e-9 || v < 1e-9 || w < 1e-9 {
                    continue 'attempts;
                }
                crossings += 1;
            }
        }
        return crossings % 2 == 1;
    }
    panic!("no clean parity ray found");
}

fn rotate(mesh: &TriMesh, roll: f64, pitch: f64, yaw: f64) -> TriMesh {
    let rot = nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw);
    TriMesh::new(
        mesh.vertices.iter().map(|v| rot * v).collect(),
        mesh.faces.clone(),
    )
}

/// Parametric strip with a half twist (open, non-orientable).
fn mobius_strip(n: usize) -> TriMesh {
    let mut vertices = Vec::new();
    for i in 0..=n {
        let u = std::f64::consts::TAU * i as f64 / n as f64;
        for &s in &[-0.15f64, 0.15] {
            let r = 0.6 + s * (u / 2.0).cos();
            vertices.push(Vec3::new(
                r * u.cos(),
                r * u.sin(),
                s * (u / 2.0).sin(),
            ));
        }
    }
    let mut faces = Vec::new();
    for i in 0..n {
        let a = (2 * i) as u32;
        let b = a + 1;
        let c = a + 2;
        let d = a + 3;
        faces.push([a, b, d]);
        faces.push([a, d, c]);
    }
    TriMesh::new(vertices, faces)
}

/// Ribbon folded into a sharp zigzag (open surface with creases).
fn zigzag_ribbon() -> TriMesh {
    let mut vertices = Vec::new();
    for i in 0..=8 {
        let x = -0.8 + 0.2 * i as f64;
        let z = if i % 2 == 0 { -0.2 } else { 0.2 };
        vertices.push(Vec3::new(x, -0.5, z));
        vertices.push(Vec3::new(x, 0.5, z));
    }
    let mut faces = Vec::new();
    for i in 0..8 {
        let a = (2 * i) as u32;
        faces.push([a, a + 2, a + 3]);
        faces.push([a, a + 3, a + 1]);
    }
    TriMesh::new(vertices, faces)
}

fn plate_with_hole() -> TriMesh {
    let mut m = shapes::plate(
        &Vec3::new(-0.8, -0.8, 0.07),
        &Vec3::new(1.6, 0.0, 0.0),
        &Vec3::new(0.0, 1.6, 0.12),
        6,
        6,
    );
    // punch out the central 2x2 quads
    let keep = |f: &[u32; 3]| {
        let centroid: Vec3 = (m.vertices[f[0] as usize]
            + m.vertices[f[1] as usize]
            + m.vertices[f[2] as usize])
            / 3.0;
        !(centroid.x.abs() < 0.27 && centroid.y.abs() < 0.27)
    };
    let faces: Vec<[u32; 3]> = m.faces.iter().filter(|f| keep(f)).copied().collect();
    m.faces = faces;
    m
}

fn open_tube() -> TriMesh {
    let (nu, nv) = (32, 8);
    let mut vertices = Vec::new();
    for j in 0..=nv {
        let z = -0.5 + j as f64 / nv as f64;
        for i in 0..nu {
            let a = std::f64::consts::TAU * i as f64 / nu as f64;
            vertices.push(Vec3::new(0.4 * a.cos(), 0.4 * a.sin(), z));
        }
    }
    let idx = |i: usize, j: usize| (j * nu + i % nu) as u32;
    let mut faces = Vec::new();
    for j in 0..nv {
        for i in 0..nu {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces)
}

fn open_cone() -> TriMesh {
    let n = 40;
    let apex = Vec3::new(0.0, 0.0, 0.6);
    let mut vertices = vec![apex];
    for i in 0..n {
        let a = std::f64::consts::TAU * i as f64 / n as f64;
        vertices.push(Vec3::new(0.5 * a.cos(), 0.5 * a.sin(), -0.4));
    }
    let mut faces = Vec::new();
    for i in 0..n {
        faces.push([0, 1 + i as u32, 1 + ((i + 1) % n) as u32]);
    }
    TriMesh::new(vertices, faces)
}

fn open_box_five_faces() -> TriMesh {
    let mut b = shapes::axis_box(&Vec3::new(-0.5, -0.5, -0.5), &Vec3::new(0.5, 0.5, 0.5));
    b.faces.drain(2..4); // remove the z = max lid
    b
}

/// The 30-mesh acceptance corpus: open plates, closed and hollow solids,
/// multi-component scenes, self-intersecting soup and high-genus fixtures.
pub fn corpus() -> Vec<(&'static str, TriMesh)> {
    let sphere = |c: Vec3, r: f64, nu: usize, nv: usize| shapes::uv_sphere(&c, r, nu, nv);
    vec![
        ("sphere", sphere(Vec3::zeros(), 0.5, 48, 32)),
        ("sphere_offcenter", sphere(Vec3::new(0.2, -0.1, 0.15), 0.3, 32, 24)),
        ("sphere_coarse", sphere(Vec3::zeros(), 0.5, 6, 4)),
        ("box", shapes::axis_box(&Vec3::new(-0.6, -0.4, -0.5), &Vec3::new(0.6, 0.4, 0.5))),
        (
            "box_rotated",
            rotate(
                &shapes::axis_box(&Vec3::new(-0.5, -0.5, -0.5), &Vec3::new(0.5, 0.5, 0.5)),
                0.4,
                0.3,
                0.2,
            ),
        ),
        (
            "slab_closed",
            shapes::axis_box(&Vec3::new(-0.7, -0.7, -0.04), &Vec3::new(0.7, 0.7, 0.04)),
        ),
        ("torus", shapes::torus(&Vec3::zeros(), 0.55, 0.2, 48, 24)),
        ("torus_link", shapes::torus_link()),
        (
            "genus2_blob",
            shapes::merge(&[
                shapes::torus(&Vec3::new(-0.35, 0.0, 0.0), 0.35, 0.15, 32, 16),
                shapes::torus(&Vec3::new(0.35, 0.0, 0.0), 0.35, 0.15, 32, 16),
            ]),
        ),
        (
            "plate_tilted",
            shapes::plate(
                &Vec3::new(-0.9, -0.9, 0.05),
                &Vec3::new(1.8, 0.0, 0.0),
                &Vec3::new(0.0, 1.8, 0.17),
                8,
                8,
            ),
        ),
        ("disc", shapes::disc(&Vec3::zeros(), &Vec3::new(0.1, 0.07, 1.0), 0.8, 48)),
        ("plate_with_hole", plate_with_hole()),
        ("tube_open", open_tube()),
        ("cone_open", open_cone()),
        (
            "hollow_sphere",
            shapes::merge(&[
                sphere(Vec3::zeros(), 0.6, 32, 24),
                sphere(Vec3::zeros(), 0.35, 24, 16),
            ]),
        ),
        (
            "hollow_box",
            shapes::merge(&[
                shapes::axis_box(&Vec3::new(-0.6, -0.6, -0.6), &Vec3::new(0.6, 0.6, 0.6)),
                shapes::axis_box(&Vec3::new(-0.35, -0.35, -0.35), &Vec3::new(0.35, 0.35, 0.35)),
            ]),
        ),
        ("open_box", open_box_five_faces()),
        (
            "cup",
            shapes::merge(&[open_box_five_faces(), {
                let mut inner = shapes::axis_box(
                    &Vec3::new(-0.4, -0.4, -0.4),
                    &Vec3::new(0.4, 0.4, 0.6),
                );
                inner.faces.drain(2..4);
                inner
            }]),
        ),
        (
            "crossed_plates",
            shapes::merge(&[
                shapes::plate(
                    &Vec3::new(-0.8, -0.8, 0.0),
                    &Vec3::new(1.6, 0.0, 0.0),
                    &Vec3::new(0.0, 1.6, 0.31),
                    6,
                    6,
                ),
                shapes::plate(
                    &Vec3::new(-0.8, 0.11, -0.8),
                    &Vec3::new(1.6, 0.0, 0.0),
                    &Vec3::new(0.0, 0.23, 1.6),
                    6,
                    6,
                ),
            ]),
        ),
        ("soup_small", shapes::soup(5, 30, 0.6)),
        ("soup_large", shapes::soup(17, 100, 0.7)),
        (
            "box_plus_sphere",
            shapes::merge(&[
                shapes::axis_box(&Vec3::new(-0.8, -0.5, -0.5), &Vec3::new(0.2, 0.5, 0.5)),
                sphere(Vec3::new(0.65, 0.0, 0.0), 0.18, 24, 16),
            ]),
        ),
        (
            "three_components",
            shapes::merge(&[
                shapes::axis_box(&Vec3::new(-0.9, -0.3, -0.3), &Vec3::new(-0.3, 0.3, 0.3)),
                sphere(Vec3::new(0.3, 0.3, 0.0), 0.22, 24, 16),
                shapes::torus(&Vec3::new(0.4, -0.45, 0.1), 0.2, 0.08, 24, 12),
            ]),
        ),
        ("sphere_with_hole", {
            let mut s = sphere(Vec3::zeros(), 0.5, 32, 24);
            s.faces.drain(0..16);
            s
        }),
        ("mobius", mobius_strip(48)),
        ("zigzag_ribbon", zigzag_ribbon()),
        ("doubled_sphere", {
            let s = sphere(Vec3::zeros(), 0.45, 24, 16);
            shapes::merge(&[s.clone(), s])
        }),
        (
            "hidden_interior",
            shapes::merge(&[
                sphere(Vec3::zeros(), 0.7, 32, 24),
                shapes::axis_box(&Vec3::new(-0.2, -0.2, -0.2), &Vec3::new(0.2, 0.2, 0.2)),
            ]),
        ),
        (
            "thin_shell_pair",
            shapes::merge(&[
                shapes::plate(
                    &Vec3::new(-0.7, -0.7, -0.06),
                    &Vec3::new(1.4, 0.0, 0.0),
                    &Vec3::new(0.0, 1.4, 0.02),
                    5,
                    5,
                ),
                shapes::plate(
                    &Vec3::new(-0.7, -0.7, 0.09),
                    &Vec3::new(1.4, 0.0, 0.0),
                    &Vec3::new(0.0, 1.4, 0.02),
                    5,
                    5,
                ),
            ]),
        ),
        ("sphere_spiky", sphere(Vec3::zeros(), 0.5, 5, 3)),
    ]
}
