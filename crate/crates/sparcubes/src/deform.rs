//! Gradient descent on the corner deformations so the extracted zero level
//! set conforms to the input surface.
//!
//! The objective is the mean squared unsigned distance of the extracted
//! vertices to the input mesh. Because phi never changes, the set of
//! crossed edges and their interpolation parameters are fixed: only the
//! vertex positions move with delta, so the surface is extracted once and
//! every iteration just re-evaluates positions, distances and the chain
//! rule through the extraction Jacobian.

use crate::bvh::Bvh;
use crate::error::Result;
use crate::geom::Vec3;
use crate::grid::SparseGrid;
use crate::mc::{marching_cubes, ExtractionJacobian};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct DeformConfig {
    /// Maximum gradient steps.
    pub iterations: usize,
    /// Fraction of the locally optimal (diagonally preconditioned) step
    /// applied per iteration; the effective move is this share of each
    /// corner's weighted mean residual.
    pub step_size: f64,
    /// Stop when the mean loss changes by less than this relative amount
    /// over [`Self::window`] iterations.
    pub convergence_tol: f64,
    /// Plateau detection window, in iterations.
    pub window: usize,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            iterations: 100,
            step_size: 0.3,
            convergence_tol: 1e-4,
            window: 10,
        }
    }
}

impl DeformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(crate::error::Error::Config(
                "deform iterations must be at least 1".into(),
            ));
        }
        // the per-axis clamp is half a cell; stepping further than that in
        // one iteration would ping-pong against the clamp
        if !(self.step_size > 0.0 && self.step_size < 0.5) {
            return Err(crate::error::Error::Config(format!(
                "deform step size {} must lie in (0, 0.5) cells",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// One row per iteration: loss after the update and the step size used
/// (0 when the iteration could not improve and kept the previous state).
#[derive(Debug, Clone, Default)]
pub struct LossTrace {
    pub rows: Vec<(usize, f64, f64)>,
}

impl LossTrace {
    pub fn initial(&self) -> Option<f64> {
        self.rows.first().map(|r| r.1)
    }

    pub fn last(&self) -> Option<f64> {
        self.rows.last().map(|r| r.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,step_size\n");
        for (i, loss, step) in &self.rows {
            out.push_str(&format!("{i},{loss},{step}\n"));
        }
        out
    }
}

/// Mean squared distance of the extracted vertices to the input surface,
/// plus its gradient with respect to every corner deformation. `seeds`
/// holds each vertex's last closest triangle to prime the queries; it is
/// updated in place and never changes the result.
pub(crate) fn fit_loss_and_gradient(
    grid: &SparseGrid,
    bvh: &Bvh,
    jac: &ExtractionJacobian,
    seeds: &mut [u32],
) -> (f64, Vec<Vec3>) {
    let n = jac.vertices.len();
    let per_vertex: Vec<(f64, Vec3, u32)> = jac
        .vertices
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(v, &seed)| {
            let p = v.position(grid);
            let hit = bvh.udf_query_seeded(&p, seed);
            // gradient of udf^2 is 2 (p - closest); no surface singularity
            (hit.distance * hit.distance, (p - hit.closest) * 2.0, hit.tri)
        })
        .collect();
    // sequential reductions keep results bit-identical across thread counts
    let mut loss = 0.0;
    let mut grad = vec![Vec3::zeros(); grid.corners.len()];
    let inv_n = 1.0 / n as f64;
    for ((v, (l, g, tri)), seed) in jac
        .vertices
        .iter()
        .zip(per_vertex.iter())
        .zip(seeds.iter_mut())
    {
        loss += *l;
        let (wa, wb) = v.delta_weights();
        grad[v.corner_a as usize] += g * (wa * inv_n);
        grad[v.corner_b as usize] += g * (wb * inv_n);
        *seed = *tri;
    }
    (loss * inv_n, grad)
}

/// Exact diagonal of the Gauss-Newton normal matrix for the squared
/// distance objective: `2/N * sum of w^2` per corner. Dividing the raw
/// gradient by it yields a step in length units (the weighted mean
/// residual), so convergence speed does not degrade with vertex count.
pub(crate) fn gn_diagonal(grid: &SparseGrid, jac: &ExtractionJacobian) -> Vec<f64> {
    let inv_n = 1.0 / jac.vertices.len() as f64;
    let mut diag = vec![0.0f64; grid.corners.len()];
    for v in &jac.vertices {
        let (wa, wb) = v.delta_weights();
        diag[v.corner_a as usize] += 2.0 * wa * wa * inv_n;
        diag[v.corner_b as usize] += 2.0 * wb * wb * inv_n;
    }
    diag
}

#[cfg(test)]
pub(crate) fn fit_loss(
    grid: &SparseGrid,
    bvh: &Bvh,
    jac: &ExtractionJacobian,
    seeds: &[u32],
) -> f64 {
    let per_vertex: Vec<f64> = jac
        .vertices
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(v, &seed)| {
            let d = bvh.udf_query_seeded(&v.position(grid), seed).distance;
            d * d
        })
        .collect();
    per_vertex.iter().sum::<f64>() / jac.vertices.len() as f64
}

const MAX_BACKOFFS: usize = 5;

/// Optimize the deformations in place. The loss trace is monotone
/// non-increasing: steps that fail to improve after halving the step size
/// [`MAX_BACKOFFS`] times are rejected.
pub fn optimize_deformation(
    grid: &mut SparseGrid,
    bvh: &Bvh,
    cfg: &DeformConfig,
) -> Result<LossTrace> {
    cfg.validate()?;
    let (_, jac) = marching_cubes(grid)?;
    let mut trace = LossTrace::default();
    if jac.vertices.is_empty() {
        return Ok(trace);
    }

    let diag = gn_diagonal(grid, &jac);
    let mut seeds = vec![u32::MAX; jac.vertices.len()];
    let (mut loss, mut grad) = fit_loss_and_gradient(grid, bvh, &jac, &mut seeds);
    trace.rows.push((0, loss, 0.0));

    for iter in 1..=cfg.iterations {
        let saved = grid.delta.clone();
        let mut step = cfg.step_size;
        let mut accepted = false;
        for _ in 0..=MAX_BACKOFFS {
            for c in 0..grid.corners.len() {
                let g = grad[c];
                if g != Vec3::zeros() {
                    grid.set_delta(c, saved[c] - g * (step / diag[c]));
                }
            }
            // the accepted point's gradient doubles as the next iteration's
            let (new_loss, new_grad) = fit_loss_and_gradient(grid, bvh, &jac, &mut seeds);
            if new_loss <= loss {
                loss = new_loss;
                grad = new_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            grid.delta = saved;
            trace.rows.push((iter, loss, 0.0));
            break; // no direction of improvement left at this scale
        }
        trace.rows.push((iter, loss, step));

        if iter >= cfg.window {
            let past = trace.rows[iter - cfg.window].1;
            let rel = (past - loss).abs() / past.max(1e-30);
            if rel < cfg.convergence_tol {
                break;
            }
        }
    }
    Ok(trace)
}
