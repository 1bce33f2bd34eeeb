//! Optional view-based refinement: z-buffered rasterization of depth and
//! flat normals, the squared depth + normal rendering loss against targets
//! rendered from the raw input mesh, and gradient descent on the corner
//! deformations restricted to visible cubes.

use crate::error::{Error, Result};
use crate::geom::{tri_normal_scaled, Vec3};
use crate::grid::SparseGrid;
use crate::mc::{marching_cubes, vertex_positions, ExtractionJacobian};
use crate::mesh::TriMesh;
use rayon::prelude::*;
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    fn basis(&self) -> Result<(Vec3, Vec3, Vec3)> {
        let fwd = self.look_at - self.position;
        if fwd.norm() < 1e-12 {
            return Err(Error::Camera("look direction is zero".into()));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::Camera(format!("fov {} out of (0, pi)", self.fov)));
        }
        let fwd = fwd.normalize();
        let right = fwd.cross(&self.up);
        if right.norm() < 1e-12 {
            return Err(Error::Camera("up is parallel to the view axis".into()));
        }
        let right = right.normalize();
        let up = right.cross(&fwd);
        Ok((right, up, fwd))
    }
}

/// The icosahedral camera rig: the first `views` of the 12 icosahedron
/// vertex directions plus 4 cube diagonals, at the given radius.
pub fn camera_rig(views: usize, radius: f64, fov: f64, image_size: u32) -> Vec<Camera> {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut dirs: Vec<Vec3> = vec![
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ];
    dirs.extend([
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ]);
    dirs.iter()
        .cycle()
        .take(views)
        .map(|d| {
            let d = d.normalize();
            let up = if d.z.abs() > 0.9 { Vec3::y() } else { Vec3::z() };
            Camera {
                position: d * radius,
                look_at: Vec3::zeros(),
                up,
                fov,
                width: image_size,
                height: image_size,
            }
        })
        .collect()
}

/// Per-pixel output of the rasterizer. Depth is camera-space z (infinity
/// for background), normals are world-space flat face normals.
#[derive(Debug, Clone)]
pub struct RenderTarget {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub normal: Vec<Vec3>,
    pub mask: Vec<bool>,
    /// Face that owns each pixel, `u32::MAX` for background.
    pub face: Vec<u32>,
    /// World-space barycentric coordinates of the pixel's surface point.
    pub bary: Vec<[f64; 3]>,
}

impl RenderTarget {
    fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        RenderTarget {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            normal: vec![Vec3::zeros(); n],
            mask: vec![false; n],
            face: vec![u32::MAX; n],
            bary: vec![[0.0; 3]; n],
        }
    }

    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

const NEAR_PLANE: f64 = 1e-3;

/// Z-buffered perspective rasterization with flat per-face normals.
/// Triangles touching the near plane are skipped (the synthetic rigs keep
/// the geometry well in front of every camera).
pub fn rasterize(mesh: &TriMesh, cam: &Camera) -> Result<RenderTarget> {
    let (right, up, fwd) = cam.basis()?;
    let mut target = RenderTarget::new(cam.width, cam.height);
    if mesh.faces.is_empty() {
        return Ok(target);
    }
    let w = cam.width as f64;
    let h = cam.height as f64;
    let focal = 1.0 / (cam.fov * 0.5).tan();
    let aspect = w / h;

    // camera-space coordinates and screen projections
    let cam_pts: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|p| {
            let d = p - cam.position;
            Vec3::new(right.dot(&d), up.dot(&d), fwd.dot(&d))
        })
        .collect();
    let screen: Vec<[f64; 2]> = cam_pts
        .iter()
        .map(|c| {
            if c.z <= NEAR_PLANE {
                return [f64::NAN, f64::NAN];
            }
            let x_ndc = c.x / c.z * focal / aspect;
            let y_ndc = c.y / c.z * focal;
            [(x_ndc + 1.0) * 0.5 * w, (1.0 - y_ndc) * 0.5 * h]
        })
        .collect();

    for (f, face) in mesh.faces.iter().enumerate() {
        let [i0, i1, i2] = [face[0] as usize, face[1] as usize, face[2] as usize];
        if cam_pts[i0].z <= NEAR_PLANE || cam_pts[i1].z <= NEAR_PLANE || cam_pts[i2].z <= NEAR_PLANE
        {
            continue;
        }
        let (s0, s1, s2) = (screen[i0], screen[i1], screen[i2]);
        let area = (s1[0] - s0[0]) * (s2[1] - s0[1]) - (s1[1] - s0[1]) * (s2[0] - s0[0]);
        if area.abs() < 1e-12 {
            continue;
        }
        let inv_area = 1.0 / area;
        let min_x = s0[0].min(s1[0]).min(s2[0]).floor().max(0.0) as u32;
        let max_x = (s0[0].max(s1[0]).max(s2[0]).ceil() as i64).min(cam.width as i64 - 1);
        let min_y = s0[1].min(s1[1]).min(s2[1]).floor().max(0.0) as u32;
        let max_y = (s0[1].max(s1[1]).max(s2[1]).ceil() as i64).min(cam.height as i64 - 1);
        if max_x < min_x as i64 || max_y < min_y as i64 {
            continue;
        }
        let n = {
            let m = tri_normal_scaled(
                &mesh.vertices[i0],
                &mesh.vertices[i1],
                &mesh.vertices[i2],
            );
            let len = m.norm();
            if len == 0.0 {
                continue;
            }
            m / len
        };
        let (z0, z1, z2) = (cam_pts[i0].z, cam_pts[i1].z, cam_pts[i2].z);
        for py in min_y..=max_y as u32 {
            for px in min_x..=max_x as u32 {
                let p = [px as f64 + 0.5, py as f64 + 0.5];
                let w0 = ((s1[0] - p[0]) * (s2[1] - p[1]) - (s1[1] - p[1]) * (s2[0] - p[0]))
                    * inv_area;
                let w1 = ((s2[0] - p[0]) * (s0[1] - p[1]) - (s2[1] - p[1]) * (s0[0] - p[0]))
                    * inv_area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // perspective-correct barycentrics on the surface
                let d = w0 / z0 + w1 / z1 + w2 / z2;
                let z = 1.0 / d;
                let idx = (py * cam.width + px) as usize;
                if z < target.depth[idx] {
                    target.depth[idx] = z;
                    target.normal[idx] = n;
                    target.mask[idx] = true;
                    target.face[idx] = f as u32;
                    target.bary[idx] = [w0 / z0 * z, w1 / z1 * z, w2 / z2 * z];
                }
            }
        }
    }
    Ok(target)
}

/// Loss breakdown of [`render_loss`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RenderLoss {
    pub depth_mse: f64,
    pub normal_mse: f64,
    pub mask_penalty: f64,
    pub overlap: usize,
}

impl RenderLoss {
    pub fn total(&self) -> f64 {
        self.depth_mse + self.normal_mse + self.mask_penalty
    }

    /// The differentiable part: depth plus normal error. The silhouette
    /// penalty is reported but carries no gradient, so the refinement
    /// accepts steps on this value.
    pub fn objective(&self) -> f64 {
        self.depth_mse + self.normal_mse
    }
}

/// Weight of the silhouette-mismatch penalty (mask symmetric difference
/// fraction); it carries no gradient.
pub const MASK_PENALTY_WEIGHT: f64 = 1.0;

/// Mean squared depth error plus mean squared normal error over pixels
/// covered in both targets, plus the silhouette penalty.
pub fn render_loss(rendered: &RenderTarget, observed: &RenderTarget) -> Result<RenderLoss> {
    if rendered.width != observed.width || rendered.height != observed.height {
        return Err(Error::ImageSize(
            rendered.width,
            rendered.height,
            observed.width,
            observed.height,
        ));
    }
    let mut loss = RenderLoss::default();
    let mut mismatch = 0usize;
    for i in 0..rendered.depth.len() {
        match (rendered.mask[i], observed.mask[i]) {
            (true, true) => {
                let dd = rendered.depth[i] - observed.depth[i];
                loss.depth_mse += dd * dd;
                loss.normal_mse += (rendered.normal[i] - observed.normal[i]).norm_squared();
                loss.overlap += 1;
            }
            (false, false) => {}
            _ => mismatch += 1,
        }
    }
    if loss.overlap > 0 {
        loss.depth_mse /= loss.overlap as f64;
        loss.normal_mse /= loss.overlap as f64;
    }
    loss.mask_penalty = MASK_PENALTY_WEIGHT * mismatch as f64 / rendered.depth.len() as f64;
    Ok(loss)
}

fn cross_matrix_mul(v: &Vec3, rhs: &Vec3) -> Vec3 {
    v.cross(rhs)
}

/// Gradient of the per-view loss with respect to mesh vertex positions.
/// Barycentric weights and coverage are treated as constants (hard
/// rasterization has no silhouette gradient).
/// Gradients and Gauss-Newton curvature diagonals of one view's loss,
/// kept separate per term: the depth and normal errors live on curvature
/// scales that differ by orders of magnitude, so each needs its own
/// preconditioning before the directions can be combined.
struct ViewGradient {
    depth_grad: Vec<Vec3>,
    depth_diag: Vec<f64>,
    normal_grad: Vec<Vec3>,
    normal_diag: Vec<f64>,
}

impl ViewGradient {
    fn zeros(n: usize) -> Self {
        ViewGradient {
            depth_grad: vec![Vec3::zeros(); n],
            depth_diag: vec![0.0; n],
            normal_grad: vec![Vec3::zeros(); n],
            normal_diag: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &ViewGradient) {
        for i in 0..self.depth_grad.len() {
            self.depth_grad[i] += other.depth_grad[i];
            self.depth_diag[i] += other.depth_diag[i];
            self.normal_grad[i] += other.normal_grad[i];
            self.normal_diag[i] += other.normal_diag[i];
        }
    }

    /// Full analytic gradient of the view loss (both terms).
    #[cfg(test)]
    fn total_grad(&self) -> Vec<Vec3> {
        self.depth_grad
            .iter()
            .zip(self.normal_grad.iter())
            .map(|(a, b)| a + b)
            .collect()
    }
}

fn view_gradient(
    mesh: &TriMesh,
    cam: &Camera,
    rendered: &RenderTarget,
    observed: &RenderTarget,
) -> (RenderLoss, ViewGradient) {
    let loss = render_loss(rendered, observed).expect("sizes match by construction");
    let mut out = ViewGradient::zeros(mesh.vertices.len());
    if loss.overlap == 0 {
        return (loss, out);
    }
    let (_, _, fwd) = cam.basis().expect("validated earlier");
    let inv_overlap = 1.0 / loss.overlap as f64;

    for i in 0..rendered.depth.len() {
        if !(rendered.mask[i] && observed.mask[i]) {
            continue;
        }
        let f = rendered.face[i] as usize;
        let [v0, v1, v2] = mesh.faces[f];
        let (p0, p1, p2) = (
            mesh.vertices[v0 as usize],
            mesh.vertices[v1 as usize],
            mesh.vertices[v2 as usize],
        );
        // depth term: z = sum w_k * (fwd . (P_k - cam)), d z / d P_k = w_k * fwd
        let dd = 2.0 * (rendered.depth[i] - observed.depth[i]) * inv_overlap;
        let bary = rendered.bary[i];
        out.depth_grad[v0 as usize] += fwd * (dd * bary[0]);
        out.depth_grad[v1 as usize] += fwd * (dd * bary[1]);
        out.depth_grad[v2 as usize] += fwd * (dd * bary[2]);
        out.depth_diag[v0 as usize] += 2.0 * inv_overlap * bary[0] * bary[0];
        out.depth_diag[v1 as usize] += 2.0 * inv_overlap * bary[1] * bary[1];
        out.depth_diag[v2 as usize] += 2.0 * inv_overlap * bary[2] * bary[2];

        // normal term: n = m / |m|, m = (P1-P0) x (P2-P0)
        let rn = (rendered.normal[i] - observed.normal[i]) * (2.0 * inv_overlap);
        let e1 = p1 - p0;
        let e2 = p2 - p0;
        let m = e1.cross(&e2);
        let len = m.norm();
        if len < 1e-30 {
            continue;
        }
        let n = m / len;
        // (I - n n^T) / |m| applied to the residual
        let s = (rn - n * n.dot(&rn)) / len;
        // d m / d P0 = [e2 - e1]_x, d m / d P1 = -[e2]_x, d m / d P2 = [e1]_x
        // gradient contribution is the transpose action: [v]_x^T s = s x v
        out.normal_grad[v0 as usize] += cross_matrix_mul(&s, &(e2 - e1));
        out.normal_grad[v1 as usize] -= cross_matrix_mul(&s, &e2);
        out.normal_grad[v2 as usize] += cross_matrix_mul(&s, &e1);
        let inv_len2 = 1.0 / (len * len);
        out.normal_diag[v0 as usize] += 2.0 * inv_overlap * (e2 - e1).norm_squared() * inv_len2;
        out.normal_diag[v1 as usize] += 2.0 * inv_overlap * e2.norm_squared() * inv_len2;
        out.normal_diag[v2 as usize] += 2.0 * inv_overlap * e1.norm_squared() * inv_len2;
    }
    (loss, out)
}

const GRADIENT_SMOOTHING_PASSES: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct RefineConfig {
    pub iterations: usize,
    /// Fraction of the preconditioned (weighted mean residual) step taken
    /// per iteration.
    pub step_size: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            iterations: 50,
            step_size: 0.3,
        }
    }
}

/// Refine the deformations against depth/normal renderings of `raw_mesh`
/// under `cams`. Only corners of cubes that own at least one visible
/// triangle are updated. Returns the loss trace (summed over views).
pub fn refine_with_views(
    grid: &mut SparseGrid,
    raw_mesh: &TriMesh,
    cams: &[Camera],
    cfg: &RefineConfig,
) -> Result<crate::deform::LossTrace> {
    let mut trace = crate::deform::LossTrace::default();
    let observed: Vec<RenderTarget> = cams
        .par_iter()
        .map(|cam| rasterize(raw_mesh, cam))
        .collect::<Result<_>>()?;

    let (mesh0, jac) = marching_cubes(grid)?;
    if mesh0.faces.is_empty() {
        return Ok(trace);
    }
    let faces = mesh0.faces.clone();

    let render_all = |mesh: &TriMesh| -> Result<Vec<RenderTarget>> {
        cams.par_iter().map(|cam| rasterize(mesh, cam)).collect()
    };

    // visibility from the initial extraction decides which corners may move
    let first = render_all(&mesh0)?;
    let mut visible_cube = vec![false; grid.cubes.len()];
    let mut live_views = vec![true; cams.len()];
    for (v, t) in first.iter().enumerate() {
        if t.coverage() == 0 {
            log::warn!("view {v} sees no voxels; skipping it");
            live_views[v] = false;
            continue;
        }
        for &f in &t.face {
            if f != u32::MAX {
                visible_cube[jac.tri_cube[f as usize] as usize] = true;
            }
        }
    }
    let mut corner_visible = vec![false; grid.corners.len()];
    for (cube, ids) in grid.cube_corners.iter().enumerate() {
        if visible_cube[cube] {
            for &c in ids {
                corner_visible[c as usize] = true;
            }
        }
    }

    let eval = |grid: &SparseGrid, with_grad: bool| -> Result<(f64, ViewGradient)> {
        let mesh = TriMesh::new(vertex_positions(grid, &jac), faces.clone());
        let rendered = render_all(&mesh)?;
        let mut total = 0.0;
        let mut acc = ViewGradient::zeros(mesh.vertices.len());
        for (v, (cam, r)) in cams.iter().zip(rendered.iter()).enumerate() {
            if !live_views[v] {
                continue;
            }
            if with_grad {
                let (loss, g) = view_gradient(&mesh, cam, r, &observed[v]);
                total += loss.objective();
                acc.add(&g);
            } else {
                total += render_loss(r, &observed[v])?.objective();
            }
        }
        Ok((total, acc))
    };

    let n_corners = grid.corners.len();
    // 6-neighborhood of every corner, for gradient smoothing
    let neighbors: Vec<[u32; 6]> = grid
        .corners
        .iter()
        .map(|&[i, j, k]| {
            let mut out = [u32::MAX; 6];
            let offs = [
                [-1i32, 0, 0],
                [1, 0, 0],
                [0, -1, 0],
                [0, 1, 0],
                [0, 0, -1],
                [0, 0, 1],
            ];
            for (slot, d) in offs.iter().enumerate() {
                let (ni, nj, nk) = (i + d[0], j + d[1], k + d[2]);
                if ni >= 0 && nj >= 0 && nk >= 0 {
                    if let Some(n) = grid.corner_index(crate::grid::CornerKey::pack(
                        ni as u32, nj as u32, nk as u32,
                    )) {
                        out[slot] = n;
                    }
                }
            }
            out
        })
        .collect();
    let precondition = |vgrad: &[Vec3], vdiag: &[f64], jac: &ExtractionJacobian| -> Vec<Vec3> {
        let mut grad = vec![Vec3::zeros(); n_corners];
        let mut diag = vec![0.0f64; n_corners];
        for ((v, g), d) in jac.vertices.iter().zip(vgrad.iter()).zip(vdiag.iter()) {
            let (wa, wb) = v.delta_weights();
            grad[v.corner_a as usize] += g * wa;
            grad[v.corner_b as usize] += g * wb;
            diag[v.corner_a as usize] += d * wa * wa;
            diag[v.corner_b as usize] += d * wb * wb;
        }
        // dividing by the term's own curvature turns the raw gradient into
        // a weighted mean residual; the high floor damps poorly covered
        // corners instead of amplifying their noisy gradients
        let max_diag = diag.iter().cloned().fold(0.0f64, f64::max);
        if max_diag > 0.0 {
            let floor = 0.3 * max_diag;
            for (g, d) in grad.iter_mut().zip(diag.iter()) {
                *g /= d.max(floor);
            }
        }
        grad
    };
    let route_to_corners = |vg: &ViewGradient, jac: &ExtractionJacobian, vis: &[bool]| -> Vec<Vec3> {
        let depth_dir = precondition(&vg.depth_grad, &vg.depth_diag, jac);
        let normal_dir = precondition(&vg.normal_grad, &vg.normal_diag, jac);
        let mut grad: Vec<Vec3> = depth_dir
            .iter()
            .zip(normal_dir.iter())
            .map(|(a, b)| a + b)
            .collect();
        // hard rasterization yields spiky per-corner gradients whose bumps
        // the normal term then punishes; diffusing the field keeps it a
        // descent direction while letting useful step sizes through. The
        // visibility mask is enforced inside every pass so the field never
        // bleeds into (or out of) never-visible cubes.
        for (c, visible) in vis.iter().enumerate() {
            if !visible {
                grad[c] = Vec3::zeros();
            }
        }
        for _ in 0..GRADIENT_SMOOTHING_PASSES {
            let mut smoothed = grad.clone();
            for c in 0..n_corners {
                if !vis[c] {
                    continue; // never moves, never drains its neighbors
                }
                let mut acc = Vec3::zeros();
                let mut cnt = 0.0;
                for &n in &neighbors[c] {
                    if n != u32::MAX && vis[n as usize] {
                        acc += grad[n as usize];
                        cnt += 1.0;
                    }
                }
                if cnt > 0.0 {
                    smoothed[c] = grad[c] * 0.5 + acc * (0.5 / cnt);
                }
            }
            grad = smoothed;
        }
        grad
    };

    let (mut loss, vgrad) = eval(grid, true)?;
    let mut grad = route_to_corners(&vgrad, &jac, &corner_visible);
    trace.rows.push((0, loss, 0.0));

    for iter in 1..=cfg.iterations {
        if grad.iter().all(|g| *g == Vec3::zeros()) {
            break;
        }
        let saved = grid.delta.clone();
        let mut step = cfg.step_size;
        let mut accepted = false;
        for _ in 0..=5 {
            for c in 0..grid.corners.len() {
                if grad[c] != Vec3::zeros() {
                    grid.set_delta(c, saved[c] - grad[c] * step);
                }
            }
            let (new_loss, _) = eval(grid, false)?;
            if new_loss <= loss {
                loss = new_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            grid.delta = saved;
            trace.rows.push((iter, loss, 0.0));
            break;
        }
        trace.rows.push((iter, loss, step));
        let (l2, vg) = eval(grid, true)?;
        loss = l2;
        grad = route_to_corners(&vg, &jac, &corner_visible);
    }
    Ok(trace)
}

/// Write depth (normalized to [0,1] over the covered range) and normal
/// images as PNGs with the given path prefix.
pub fn dump_target(target: &RenderTarget, prefix: &Path) -> Result<()> {
    let (w, h) = (target.width, target.height);
    let (lo, hi) = target
        .depth
        .iter()
        .zip(target.mask.iter())
        .filter(|(_, &m)| m)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&d, _)| {
            (lo.min(d), hi.max(d))
        });
    let span = (hi - lo).max(1e-12);
    let mut depth_img = image::GrayImage::new(w, h);
    let mut normal_img = image::RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if target.mask[i] {
                let v = ((target.depth[i] - lo) / span * 255.0).clamp(0.0, 255.0) as u8;
                depth_img.put_pixel(x, y, image::Luma([v]));
                let n = target.normal[i];
                let to_u8 = |c: f64| (((c + 1.0) * 0.5) * 255.0).clamp(0.0, 255.0) as u8;
                normal_img.put_pixel(x, y, image::Rgb([to_u8(n.x), to_u8(n.y), to_u8(n.z)]));
            }
        }
    }
    let depth_path = prefix.with_extension("depth.png");
    let normal_path = prefix.with_extension("normal.png");
    depth_img
        .save(&depth_path)
        .map_err(|e| Error::GridFormat(format!("png write failed: {e}")))?;
    normal_img
        .save(&normal_path)
        .map_err(|e| Error::GridFormat(format!("png write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::test_fixtures::dense_block;
    use crate::shapes;

    fn look_down_z(size: u32) -> Camera {
        Camera {
            position: Vec3::new(0.0, 0.0, 2.0),
            look_at: Vec3::zeros(),
            up: Vec3::y(),
            fov: 0.9,
            width: size,
            height: size,
        }
    }

    fn screen_quad(z: f64) -> TriMesh {
        shapes::plate(
            &Vec3::new(-5.0, -5.0, z),
            &Vec3::new(10.0, 0.0, 0.0),
            &Vec3::new(0.0, 10.0, 0.0),
            1,
            1,
        )
    }

    #[test]
    fn screen_filling_quad_depth_and_normal() {
        let cam = look_down_z(32);
        let quad = screen_quad(0.0); // depth 2 from the camera
        let t = rasterize(&quad, &cam).unwrap();
        assert_eq!(t.coverage(), 32 * 32);
        let (_, _, fwd) = cam.basis().unwrap();
        for i in 0..t.depth.len() {
            assert!((t.depth[i] - 2.0).abs() < 1e-9);
            assert!((t.normal[i].dot(&fwd).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mesh_renders_empty() {
        let t = rasterize(&TriMesh::default(), &look_down_z(16)).unwrap();
        assert_eq!(t.coverage(), 0);
    }

    #[test]
    fn nearer_quad_wins() {
        let far = screen_quad(0.0);
        let near = screen_quad(1.0); // depth 1
        let both = shapes::merge(&[far, near]);
        let t = rasterize(&both, &look_down_z(16)).unwrap();
        for i in 0..t.depth.len() {
            assert!((t.depth[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_camera_is_rejected() {
        let mut cam = look_down_z(8);
        cam.look_at = cam.position;
        assert!(rasterize(&screen_quad(0.0), &cam).is_err());
        let mut cam = look_down_z(8);
        cam.fov = 0.0;
        assert!(rasterize(&screen_quad(0.0), &cam).is_err());
    }

    #[test]
    fn loss_arithmetic() {
        let cam = look_down_z(16);
        let a = rasterize(&screen_quad(0.0), &cam).unwrap();
        let l = render_loss(&a, &a).unwrap();
        assert_eq!(l.total(), 0.0);

        // depth uniformly off by 0.1, same normals, full overlap
        let b = rasterize(&screen_quad(0.1), &cam).unwrap();
        let l = render_loss(&b, &a).unwrap();
        assert!((l.depth_mse - 0.01).abs() < 1e-9);
        assert!(l.normal_mse < 1e-18);
        assert_eq!(l.mask_penalty, 0.0);

        // disjoint masks: pure penalty, weight times symmetric difference
        let empty = rasterize(&TriMesh::default(), &cam).unwrap();
        let l = render_loss(&empty, &a).unwrap();
        assert_eq!(l.depth_mse, 0.0);
        assert_eq!(l.mask_penalty, MASK_PENALTY_WEIGHT * 1.0);

        // size mismatch is an error
        let c = rasterize(&screen_quad(0.0), &look_down_z(8)).unwrap();
        assert!(render_loss(&c, &a).is_err());
    }

    fn slab_grid(offset: f64) -> SparseGrid {
        // a 6x6x3 block whose zero crossing is a z-plane at 11.5 + offset
        dense_block(6, 6, 3, move |_, _, k| k as f64 - 11.5 - offset)
    }

    #[test]
    fn observed_equals_rendered_is_a_fixed_point() {
        let mut grid = slab_grid(0.0);
        let (mesh, _) = marching_cubes(&grid).unwrap();
        let h = grid.h();
        let cams = camera_rig(4, 2.5, 0.8, 64);
        let cfg = RefineConfig {
            iterations: 10,
            step_size: 0.1,
        };
        refine_with_views(&mut grid, &mesh, &cams, &cfg).unwrap();
        for d in &grid.delta {
            assert!(d.norm() <= 1e-6 * h, "moved by {}", d.norm() / h);
        }
    }

    #[test]
    fn offset_slab_depth_loss_halves() {
        let mut grid = slab_grid(0.0);
        // observed targets come from the slab extraction shifted 0.2 h
        let target_grid = slab_grid(0.2);
        let (target_mesh, _) = marching_cubes(&target_grid).unwrap();
        // single roughly face-on view
        let o = grid.origin();
        let h = grid.h();
        let center = Vec3::new(o + 13.0 * h, o + 13.0 * h, o + 11.5 * h);
        let cams = vec![Camera {
            position: center + Vec3::new(0.02, 0.03, 1.0),
            look_at: center,
            up: Vec3::y(),
            fov: 0.25,
            width: 64,
            height: 64,
        }];
        let cfg = RefineConfig {
            iterations: 50,
            step_size: 0.1,
        };
        let trace = refine_with_views(&mut grid, &target_mesh, &cams, &cfg).unwrap();
        let first = trace.initial().unwrap();
        let last = trace.last().unwrap();
        assert!(
            last < 0.5 * first,
            "loss {first} -> {last} did not halve"
        );
    }

    #[test]
    fn invisible_corners_bit_identical() {
        let mut grid = slab_grid(0.0);
        let h = grid.h();
        for c in 0..grid.corners.len() {
            let s = ((c * 31 % 17) as f64 / 17.0 - 0.5) * 0.2;
            grid.set_delta(c, Vec3::new(s * h, -s * h, 0.5 * s * h));
        }
        let before = grid.delta.clone();
        let (mesh, _) = marching_cubes(&grid).unwrap();
        // camera that sees only the top of the slab from a grazing side
        let o = grid.origin();
        let center = Vec3::new(o + 13.0 * h, o + 13.0 * h, o + 11.5 * h);
        let cams = vec![Camera {
            position: center + Vec3::new(3.0 * h, 0.0, 20.0 * h),
            look_at: center + Vec3::new(3.0 * h, 0.0, 0.0),
            up: Vec3::y(),
            fov: 0.08,
            width: 24,
            height: 24,
        }];
        let target_grid = slab_grid(0.15);
        let (target_mesh, _) = marching_cubes(&target_grid).unwrap();
        drop(mesh);
        let cfg = RefineConfig {
            iterations: 8,
            step_size: 0.1,
        };
        let trace = refine_with_views(&mut grid, &target_mesh, &cams, &cfg).unwrap();
        assert!(trace.rows.len() > 1);
        // some corner moved, but never one of an invisible cube
        let (m2, jac) = marching_cubes(&grid).unwrap();
        drop(m2);
        let rendered = rasterize(
            &TriMesh::new(vertex_positions(&grid, &jac), jac.tri_cube.iter().map(|_| [0u32; 3]).collect()),
            &cams[0],
        );
        drop(rendered);
        let mut moved_any = false;
        let mut visible_corner = vec![false; grid.corners.len()];
        {
            // rebuild the visibility set the same way refine does
            let (mesh0, jac0) = marching_cubes(&{
                let mut g = grid.clone();
                g.delta = before.clone();
                g
            })
            .unwrap();
            let t = rasterize(&mesh0, &cams[0]).unwrap();
            let mut vis_cube = vec![false; grid.cubes.len()];
            for &f in &t.face {
                if f != u32::MAX {
                    vis_cube[jac0.tri_cube[f as usize] as usize] = true;
                }
            }
            for (cube, ids) in grid.cube_corners.iter().enumerate() {
                if vis_cube[cube] {
                    for &c in ids {
                        visible_corner[c as usize] = true;
                    }
                }
            }
        }
        for c in 0..grid.corners.len() {
            if grid.delta[c] != before[c] {
                moved_any = true;
                assert!(visible_corner[c], "invisible corner {c} moved");
            }
        }
        assert!(moved_any, "refinement made no updates at all");
    }

    #[test]
    fn gradient_matches_finite_differences_through_rasterizer() {
        let mut grid = dense_block(2, 1, 1, |i, j, k| {
            // irregular crossing inside a 2-cube block
            (k as f64 - 10.4) + 0.2 * (i as f64 - 10.0) + 0.1 * (j as f64 - 10.0)
        });
        let h = grid.h();
        let o = grid.origin();
        let center = Vec3::new(o + 11.0 * h, o + 10.5 * h, o + 10.5 * h);
        let cam = Camera {
            position: center + Vec3::new(0.3 * h, 0.2 * h, 14.0 * h),
            look_at: center,
            up: Vec3::y(),
            fov: 0.3,
            width: 16,
            height: 16,
        };
        let target_grid = dense_block(2, 1, 1, |i, j, k| {
            (k as f64 - 10.55) + 0.18 * (i as f64 - 10.0) + 0.12 * (j as f64 - 10.0)
        });
        let (target_mesh, _) = marching_cubes(&target_grid).unwrap();
        let observed = rasterize(&target_mesh, &cam).unwrap();

        let (_, jac) = marching_cubes(&grid).unwrap();
        let faces = marching_cubes(&grid).unwrap().0.faces;
        let eval = |grid: &SparseGrid| -> f64 {
            let mesh = TriMesh::new(vertex_positions(grid, &jac), faces.clone());
            let r = rasterize(&mesh, &cam).unwrap();
            render_loss(&r, &observed).unwrap().total()
        };
        let mesh = TriMesh::new(vertex_positions(&grid, &jac), faces.clone());
        let rendered = rasterize(&mesh, &cam).unwrap();
        let (_, vg) = view_gradient(&mesh, &cam, &rendered, &observed);
        let vgrad = vg.total_grad();
        // route to corners without the visibility mask
        let mut grad = vec![Vec3::zeros(); grid.corners.len()];
        for (v, g) in jac.vertices.iter().zip(vgrad.iter()) {
            let (wa, wb) = v.delta_weights();
            grad[v.corner_a as usize] += g * wa;
            grad[v.corner_b as usize] += g * wb;
        }
        let step = 1e-4 * h;
        let mut checked = 0;
        for c in 0..grid.corners.len() {
            for axis in 0..3 {
                if grad[c][axis].abs() < 1e-4 {
                    continue;
                }
                let saved = grid.delta[c];
                let mut d = saved;
                d[axis] += step;
                grid.delta[c] = d;
                let up = eval(&grid);
                d[axis] = saved[axis] - step;
                grid.delta[c] = d;
                let down = eval(&grid);
                grid.delta[c] = saved;
                let num = (up - down) / (2.0 * step);
                let rel = (num - grad[c][axis]).abs() / grad[c][axis].abs().max(1e-9);
                assert!(
                    rel < 5e-2,
                    "corner {c} axis {axis}: fd {num} vs analytic {}",
                    grad[c][axis]
                );
                checked += 1;
            }
        }
        assert!(checked >= 3, "only {checked} gradient entries exercised");
    }

    #[test]
    fn png_dump_writes_files() {
        let cam = look_down_z(16);
        let t = rasterize(&screen_quad(0.0), &cam).unwrap();
        let dir = std::env::temp_dir().join("sparcubes-render-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let prefix = dir.join("view0");
        dump_target(&t, &prefix).unwrap();
        assert!(prefix.with_extension("depth.png").exists());
        assert!(prefix.with_extension("normal.png").exists());
    }


}
