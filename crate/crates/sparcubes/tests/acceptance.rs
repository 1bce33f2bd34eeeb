//! Acceptance suite: every release criterion as one test that prints a
//! pass line. Run with `cargo test --test acceptance -- --nocapture` to
//! see the lines; the tests serialize themselves so the timing-sensitive
//! ones never share the machine.

mod common;

use common::{corpus, parity_inside, EXCLUSIVE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparcubes::bvh::build_bvh;
use sparcubes::deform::DeformConfig;
use sparcubes::geom::{closest_point_on_triangle, Vec3};
use sparcubes::grid::{corner_offset, extract_active_voxels, grid_from_parts, CornerKey};
use sparcubes::holes::{ear_angle, fill_all_holes, find_boundary_loops};
use sparcubes::mc::{marching_cubes, CORNER_OFFSET, EDGE_CORNERS, TRI_TABLE};
use sparcubes::mesh::{normalize, TriMesh};
use sparcubes::metrics::watertight_audit;
use sparcubes::pipeline::{remesh, PipelineConfig};
use sparcubes::shapes;
use sparcubes::spc3::grid_to_bytes;
use std::time::Instant;

fn pass(n: u32, what: &str) {
    println!("criterion {n}: PASS - {what}");
}

fn corpus_cfg(resolution: u32) -> PipelineConfig {
    PipelineConfig {
        resolution,
        deform: DeformConfig {
            iterations: 20,
            ..DeformConfig::default()
        },
        ..PipelineConfig::default()
    }
}

/// Chamfer distance between the remeshed output and the analytic sphere of
/// radius `r`, in the normalized frame.
fn cd_to_analytic_sphere(mesh: &TriMesh, r: f64, samples: usize) -> f64 {
    let cloud = sparcubes::metrics::sample_surface(mesh, samples, 101).unwrap();
    let mesh_to_sphere: f64 = cloud
        .points
        .iter()
        .map(|p| (p.norm() - r).abs())
        .sum::<f64>()
        / cloud.points.len() as f64;
    // analytic sphere sampling, then distance to the mesh through the BVH
    let bvh = build_bvh(mesh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut sphere_to_mesh = 0.0;
    for _ in 0..samples {
        let v = loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 1e-3 {
                break v.normalize() * r;
            }
        };
        sphere_to_mesh += bvh.udf_query(&v).distance;
    }
    sphere_to_mesh /= samples as f64;
    0.5 * (mesh_to_sphere + sphere_to_mesh)
}

#[test]
fn criterion_1_watertightness_universal() {
    let _lock = EXCLUSIVE.lock().unwrap();
    for resolution in [128u32, 256] {
        for (name, mesh) in corpus() {
            let out = remesh(&mesh, &corpus_cfg(resolution)).unwrap();
            let audit = watertight_audit(&out.mesh);
            assert_eq!(
                audit.boundary_edge_count, 0,
                "{name} at R={resolution}: {audit:?}"
            );
            assert_eq!(
                audit.nonmanifold_edge_count, 0,
                "{name} at R={resolution}: {audit:?}"
            );
        }
    }
    pass(1, "30/30 corpus meshes watertight at R=128 and R=256");
}

#[test]
fn criterion_2_component_preservation() {
    let _lock = EXCLUSIVE.lock().unwrap();
    // sphere diameter 0.36 model units; the scene normalizes by 1.9/1.66,
    // so the sphere spans ~14 cells at R=128, comfortably over 6
    let two = shapes::merge(&[
        shapes::axis_box(&Vec3::new(-0.8, -0.5, -0.5), &Vec3::new(0.2, 0.5, 0.5)),
        shapes::uv_sphere(&Vec3::new(0.65, 0.0, 0.0), 0.18, 32, 24),
    ]);
    let start = Instant::now();
    let out = remesh(&two, &corpus_cfg(128)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let audit = watertight_audit(&out.mesh);
    assert!(audit.is_watertight(), "{audit:?}");
    assert_eq!(audit.connected_components, 2, "{audit:?}");
    assert!(elapsed < 30.0, "took {elapsed:.1}s");
    pass(
        2,
        "detached small component preserved (2 components, under 30 s)",
    );
}

#[test]
fn criterion_3_analytic_sphere_fidelity() {
    let _lock = EXCLUSIVE.lock().unwrap();
    let sphere = shapes::uv_sphere(&Vec3::zeros(), 0.5, 160, 120);
    let mut last_cd = f64::INFINITY;
    for resolution in [64u32, 128, 256] {
        let cfg = PipelineConfig {
            resolution,
            ..PipelineConfig::default()
        };
        let out = remesh(&sphere, &cfg).unwrap();
        let h = out.grid.h();
        // measure in the normalized frame, against radius 0.5 * scale
        let norm_mesh = TriMesh::new(
            out.mesh
                .vertices
                .iter()
                .map(|v| out.transform.apply(v))
                .collect(),
            out.mesh.faces.clone(),
        );
        let r = 0.5 * out.transform.scale;
        let cd = cd_to_analytic_sphere(&norm_mesh, r, 20_000);
        assert!(cd < 1.0 * h, "R={resolution}: cd {cd} vs h {h}");
        assert!(cd < last_cd, "cd must decrease with resolution");
        last_cd = cd;

        if resolution == 64 {
            // compare against the undeformed extraction of the same grid
            let mut flat = out.grid.clone();
            for d in flat.delta.iter_mut() {
                *d = Vec3::zeros();
            }
            let (mesh0, _) = marching_cubes(&flat).unwrap();
            let cd0 = cd_to_analytic_sphere(&mesh0, r, 20_000);
            assert!(
                cd <= 0.7 * cd0,
                "deformation reduced cd only {cd0} -> {cd}"
            );
        }
    }
    pass(3, "sphere CD < h at R=64/128/256, monotone, deform cuts >= 30%");
}

#[test]
fn criterion_4_open_surface_closure() {
    let _lock = EXCLUSIVE.lock().unwrap();
    let disc = shapes::disc(&Vec3::zeros(), &Vec3::new(0.06, 0.04, 1.0), 0.8, 64);
    let cfg = PipelineConfig {
        resolution: 128,
        ..PipelineConfig::default()
    };
    let out = remesh(&disc, &cfg).unwrap();
    let audit = watertight_audit(&out.mesh);
    assert_eq!(audit.boundary_edge_count, 0, "{audit:?}");
    // slab thickness: every output vertex within 2 cells of the disc plane
    let h_model = out.grid.h() / out.transform.scale;
    let n = Vec3::new(0.06, 0.04, 1.0).normalize();
    for v in &out.mesh.vertices {
        let d = v.dot(&n).abs();
        assert!(d <= 2.0 * h_model, "vertex {:.2} cells off the disc", d / h_model);
    }
    pass(4, "zero-thickness disc closes into a slab thinner than 4 h");
}

#[test]
fn criterion_5a_udf_oracle() {
    let meshes = vec![
        shapes::soup(3, 150, 0.7),
        shapes::soup(9, 200, 0.9),
        shapes::uv_sphere(&Vec3::zeros(), 0.5, 12, 8),
        shapes::axis_box(&Vec3::new(-0.4, -0.6, -0.3), &Vec3::new(0.5, 0.2, 0.7)),
        shapes::plate(
            &Vec3::new(-0.5, -0.5, 0.1),
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(0.0, 1.0, 0.3),
            5,
            5,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for mesh in &meshes {
        let bvh = build_bvh(mesh).unwrap();
        for _ in 0..1000 {
            let x = Vec3::new(
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
            );
            let got = bvh.udf_query(&x).distance;
            let mut want = f64::INFINITY;
            for f in 0..mesh.faces.len() {
                let [a, b, c] = mesh.face_points(f);
                let q = closest_point_on_triangle(&x, &a, &b, &c);
                want = want.min((x - q).norm());
            }
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
    }
    pass(5, "(a) UDF matches exhaustive scan on 5 meshes x 1000 points");
}

#[test]
fn criterion_5b_floodfill_vs_parity() {
    let _lock = EXCLUSIVE.lock().unwrap();
    let fixtures = vec![
        shapes::uv_sphere(&Vec3::zeros(), 0.5, 24, 16),
        shapes::axis_box(&Vec3::new(-0.6, -0.45, -0.5), &Vec3::new(0.6, 0.45, 0.5)),
        shapes::torus(&Vec3::zeros(), 0.55, 0.2, 32, 16),
    ];
    let mut checked = 0usize;
    for mesh in &fixtures {
        let (norm, _) = normalize(mesh).unwrap();
        let bvh = build_bvh(&norm).unwrap();
        let mut grid = extract_active_voxels(&bvh, 128, 2.0).unwrap();
        sparcubes::sign::flood_fill(&mut grid);
        let band = 2.0 * grid.h();
        for c in 0..grid.corners.len() {
            if grid.udf[c] <= band {
                continue; // only corners outside the band are oracle-clean
            }
            let inside = parity_inside(&norm, &grid.corner_pos(c));
            assert_eq!(
                grid.sign[c] == 1,
                inside,
                "corner {c} of fixture disagrees with parity"
            );
            checked += 1;
        }
    }
    assert!(checked >= 10_000, "only {checked} corners checked");
    pass(5, "(b) flood fill matches ray parity on all sampled corners");
}

fn single_cube_grid(phis: [f64; 8]) -> sparcubes::SparseGrid {
    let base = 10u32;
    let mut cubes = vec![[base as i32, base as i32, base as i32]];
    cubes.sort_unstable();
    let mut corner_keys: Vec<u64> = (0..8usize)
        .map(|c| {
            let [di, dj, dk] = corner_offset(c);
            CornerKey::pack(base + di, base + dj, base + dk).0
        })
        .collect();
    corner_keys.sort_unstable();
    let corners: Vec<[i32; 3]> = corner_keys
        .iter()
        .map(|&k| {
            let [i, j, kk] = CornerKey(k).unpack();
            [i as i32, j as i32, kk as i32]
        })
        .collect();
    let mut ids = [0u32; 8];
    let mut phi = vec![0.0; 8];
    for c in 0..8usize {
        let [di, dj, dk] = corner_offset(c);
        let key = CornerKey::pack(base + di, base + dj, base + dk).0;
        let idx = corner_keys.binary_search(&key).unwrap();
        ids[c] = idx as u32;
        phi[idx] = phis[c];
    }
    grid_from_parts(
        64,
        2.0,
        3,
        cubes,
        vec![ids],
        corners,
        phi,
        vec![Vec3::zeros(); 8],
    )
    .unwrap()
}

#[test]
fn criterion_5c_single_cube_table_oracle() {
    // grid corner slots are in bit order; the table rings the bottom face
    const TABLE_TO_SLOT: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];
    for case in 0..256usize {
        let mut phis = [1.0f64; 8];
        for tc in 0..8 {
            if case >> tc & 1 == 1 {
                phis[TABLE_TO_SLOT[tc]] = -1.0;
            }
        }
        let grid = single_cube_grid(phis);
        let (mesh, _) = marching_cubes(&grid).unwrap();
        let row = &TRI_TABLE[case];
        let n_tris = (0..16).take_while(|&i| row[i] >= 0).count() / 3;
        assert_eq!(mesh.faces.len(), n_tris, "case {case}");
        // every vertex must sit at the midpoint of a listed edge
        let h = grid.h();
        let o = grid.origin() + 10.0 * h;
        let expected: Vec<Vec3> = (0..n_tris * 3)
            .map(|i| {
                let [ca, cb] = EDGE_CORNERS[row[i] as usize];
                let p = |c: usize| {
                    Vec3::new(
                        o + CORNER_OFFSET[c][0] as f64 * h,
                        o + CORNER_OFFSET[c][1] as f64 * h,
                        o + CORNER_OFFSET[c][2] as f64 * h,
                    )
                };
                (p(ca) + p(cb)) * 0.5
            })
            .collect();
        for v in &mesh.vertices {
            assert!(
                expected.iter().any(|e| (e - v).norm() < 1e-12),
                "case {case}: vertex {v:?} not on a crossed-edge midpoint"
            );
        }
    }
    pass(5, "(c) single-cube extraction matches the table for all 256 cases");
}

#[test]
fn criterion_5d_jacobians_vs_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    while checked < 1000 {
        let phi_a: f64 = -rng.gen_range(1e-3..1.5);
        let phi_b: f64 = rng.gen_range(1e-3..1.5);
        if (phi_a - phi_b).abs() <= 1e-3 {
            continue;
        }
        let mut phis = [0.0f64; 8];
        for p in &mut phis {
            *p = rng.gen_range(0.1..1.0);
        }
        phis[0] = phi_a;
        phis[1] = phi_b;
        let mut grid = single_cube_grid(phis);
        let (_, jac) = marching_cubes(&grid).unwrap();
        let a_idx = grid.corner_index(CornerKey::pack(10, 10, 10)).unwrap();
        let b_idx = grid.corner_index(CornerKey::pack(11, 10, 10)).unwrap();
        let Some(v) = jac
            .vertices
            .iter()
            .find(|v| {
                v.corner_a.min(v.corner_b) == a_idx.min(b_idx)
                    && v.corner_a.max(v.corner_b) == a_idx.max(b_idx)
            })
            .copied()
        else {
            continue;
        };
        let step = 1e-5;
        fn probe(
            g: &mut sparcubes::SparseGrid,
            c: usize,
            val: f64,
            a_idx: u32,
            b_idx: u32,
        ) -> Vec3 {
            let orig = g.phi[c];
            g.phi[c] = val;
            let (_, j) = marching_cubes(g).unwrap();
            let vv = j
                .vertices
                .iter()
                .find(|x| {
                    x.corner_a.min(x.corner_b) == a_idx.min(b_idx)
                        && x.corner_a.max(x.corner_b) == a_idx.max(b_idx)
                })
                .unwrap();
            let p = vv.position(g);
            g.phi[c] = orig;
            p
        }
        let fd = |grid: &mut sparcubes::SparseGrid, corner: u32| -> Vec3 {
            let c = corner as usize;
            let orig = grid.phi[c];
            let up = probe(grid, c, orig + step, a_idx, b_idx);
            let down = probe(grid, c, orig - step, a_idx, b_idx);
            (up - down) / (2.0 * step)
        };
        let num_a = fd(&mut grid, v.corner_a);
        let ana_a = v.d_phi_a(&grid);
        assert!(
            (num_a - ana_a).norm() / ana_a.norm().max(1e-12) < 1e-4,
            "d phi_a: {num_a:?} vs {ana_a:?}"
        );
        let num_b = fd(&mut grid, v.corner_b);
        let ana_b = v.d_phi_b(&grid);
        assert!(
            (num_b - ana_b).norm() / ana_b.norm().max(1e-12) < 1e-4,
            "d phi_b: {num_b:?} vs {ana_b:?}"
        );
        checked += 1;
    }
    pass(5, "(d) extraction Jacobians match finite differences, 1000 configs");
}

#[test]
fn criterion_5e_hole_filling_counts() {
    let fixtures: Vec<(TriMesh, usize)> = vec![
        (
            {
                let mut s = shapes::uv_sphere(&Vec3::zeros(), 0.5, 16, 12);
                s.faces.drain(0..8);
                s
            },
            1,
        ),
        (
            shapes::plate(
                &Vec3::zeros(),
                &Vec3::new(1.0, 0.0, 0.0),
                &Vec3::new(0.0, 1.0, 0.0),
                3,
                3,
            ),
            1,
        ),
        (shapes::disc(&Vec3::zeros(), &Vec3::z(), 1.0, 30), 1),
    ];
    for (mesh, expected_loops) in fixtures {
        let (loops, _) = find_boundary_loops(&mesh);
        assert_eq!(loops.len(), expected_loops);
        let before_faces = mesh.faces.len();
        let before_boundary = watertight_audit(&mesh).boundary_edge_count;
        let (filled, _) = fill_all_holes(&mesh, None);
        let after_boundary = watertight_audit(&filled).boundary_edge_count;
        let added = filled.faces.len() - before_faces;
        let total_len: usize = loops.iter().map(|l| l.len()).sum();
        assert_eq!(added, total_len - 2 * loops.len(), "n-2 triangles per loop");
        assert_eq!(before_boundary - after_boundary, total_len);
        assert_eq!(after_boundary, 0);
    }
    pass(5, "(e) each filled loop adds n-2 triangles and removes n boundary edges");
}

#[test]
fn criterion_6_ear_angle_arithmetic() {
    use std::f64::consts::PI;
    let o = Vec3::zeros();
    let straight = ear_angle(&o, &Vec3::x(), &Vec3::new(2.0, 0.0, 0.0)).unwrap();
    assert!((straight - PI).abs() < 1e-12);
    let right = ear_angle(&o, &Vec3::x(), &Vec3::new(1.0, 1.0, 0.0)).unwrap();
    assert!((right - PI / 2.0).abs() < 1e-12);
    let reversal = ear_angle(&o, &Vec3::x(), &o).unwrap();
    assert!(reversal.abs() < 1e-12);
    pass(6, "ear angles hit pi, pi/2 and 0 to 1e-12");
}

#[test]
fn criterion_7_determinism() {
    let _lock = EXCLUSIVE.lock().unwrap();
    let mesh = shapes::torus(&Vec3::zeros(), 0.55, 0.2, 48, 24);
    let mut cfg = corpus_cfg(128);

    cfg.threads = Some(2);
    let a = remesh(&mesh, &cfg).unwrap();
    let b = remesh(&mesh, &cfg).unwrap();
    assert_eq!(grid_to_bytes(&a.grid), grid_to_bytes(&b.grid), "reruns differ");

    cfg.threads = Some(1);
    let single = remesh(&mesh, &cfg).unwrap();
    let report_multi =
        sparcubes::metrics::compare_meshes(&mesh, &a.mesh, 20_000, 3, 0.01).unwrap();
    let report_single =
        sparcubes::metrics::compare_meshes(&mesh, &single.mesh, 20_000, 3, 0.01).unwrap();
    assert!(
        (report_multi.cd - report_single.cd).abs() < 1e-6 * 1e4,
        "cd {} vs {}",
        report_multi.cd,
        report_single.cd
    );
    pass(7, "bit-identical reruns; single vs multi-thread CD agrees");
}

#[test]
fn criterion_8_performance_scaling() {
    let _lock = EXCLUSIVE.lock().unwrap();
    let sphere = shapes::uv_sphere(&Vec3::zeros(), 0.5, 48, 32);
    let time_at = |resolution: u32| {
        let cfg = corpus_cfg(resolution);
        let start = Instant::now();
        let out = remesh(&sphere, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        (secs, out.grid.cubes.len())
    };
    // warm up allocators and the thread pool
    let _ = time_at(64);
    let (t128, n128) = time_at(128);
    let (t256, n256) = time_at(256);
    let factor = t256 / t128;
    eprintln!(
        "scaling: R=128 {t128:.2}s ({n128} cubes), R=256 {t256:.2}s ({n256} cubes), factor {factor:.2}"
    );
    assert!(
        (3.0..=6.0).contains(&factor),
        "runtime factor {factor:.2} outside [3, 6]"
    );

    // a 100k-triangle mesh through the default pipeline at R=512
    let big = shapes::torus(&Vec3::zeros(), 0.55, 0.22, 250, 200);
    assert_eq!(big.faces.len(), 100_000);
    let cfg = PipelineConfig {
        resolution: 512,
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let out = remesh(&big, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    eprintln!("R=512 on 100k triangles: {secs:.1}s\n{}", out.timings.report());
    assert!(watertight_audit(&out.mesh).is_watertight());
    assert!(secs < 120.0, "took {secs:.1}s, budget 120s");
    pass(8, "R=128->256 scales like surface area; R=512/100k tris under 120 s");
}

#[test]
fn criterion_9_render_refine_non_regression() {
    let _lock = EXCLUSIVE.lock().unwrap();
    for (name, mesh) in corpus() {
        let cfg = PipelineConfig {
            resolution: 64,
            deform: DeformConfig {
                iterations: 10,
                ..DeformConfig::default()
            },
            render_refine: true,
            render_iters: 4,
            ..PipelineConfig::default()
        };
        let out = remesh(&mesh, &cfg).unwrap();
        let trace = out.render_trace.expect("render stage ran");
        let first = trace.initial().unwrap_or(0.0);
        let last = trace.last().unwrap_or(0.0);
        assert!(
            last <= first,
            "{name}: rendering loss did not decrease ({first} -> {last})"
        );
    }

    // sphere CD must not regress by more than 5%
    let sphere = shapes::uv_sphere(&Vec3::zeros(), 0.5, 96, 64);
    let base_cfg = PipelineConfig {
        resolution: 64,
        ..PipelineConfig::default()
    };
    let out_plain = remesh(&sphere, &base_cfg).unwrap();
    let mut refined_cfg = base_cfg.clone();
    refined_cfg.render_refine = true;
    refined_cfg.render_iters = 10;
    let out_refined = remesh(&sphere, &refined_cfg).unwrap();
    let to_norm = |out: &sparcubes::pipeline::RemeshOutput| {
        TriMesh::new(
            out.mesh
                .vertices
                .iter()
                .map(|v| out.transform.apply(v))
                .collect(),
            out.mesh.faces.clone(),
        )
    };
    let r = 0.5 * out_plain.transform.scale;
    let cd_plain = cd_to_analytic_sphere(&to_norm(&out_plain), r, 20_000);
    let cd_refined = cd_to_analytic_sphere(&to_norm(&out_refined), r, 20_000);
    assert!(
        cd_refined <= 1.05 * cd_plain,
        "render refine regressed cd {cd_plain} -> {cd_refined}"
    );
    pass(9, "render loss decreases on every corpus mesh; sphere CD within 5%");
}
