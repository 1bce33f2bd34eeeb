//! End-to-end remeshing: normalize, build the distance index, extract the
//! narrow band, label signs, optimize deformations, optionally refine
//! against rendered views, extract the isosurface, close residual holes
//! and map back to the original coordinates.

use crate::bvh::build_bvh;
use crate::deform::{optimize_deformation, DeformConfig, LossTrace};
use crate::error::{Error, Result};
use crate::geom::{ray_triangle, Vec3};
use crate::grid::{extract_active_voxels, SparseGrid};
use crate::holes::{fill_all_holes, HoleDiagnostics};
use crate::mc::marching_cubes;
use crate::mesh::{denormalize, normalize, NormTransform, TriMesh};
use crate::metrics::face_components;
use crate::render::{camera_rig, refine_with_views, RefineConfig};
use crate::sign::{assemble_sdf, close_sheets, flood_fill, refine_signs};
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Grid cells per axis across the canonical cube.
    pub resolution: u32,
    /// Narrow band half-width, in cells.
    pub band: f64,
    /// Sign-refinement displacement, in cells.
    pub eta: f64,
    pub deform: DeformConfig,
    /// Run the optional view-based refinement stage.
    pub render_refine: bool,
    pub views: usize,
    pub image_size: u32,
    pub render_iters: usize,
    /// Fill boundary loops up to this many vertices; `None` fills all.
    pub max_loop: Option<usize>,
    /// Drop output components that bound enclosed air pockets.
    pub fill_cavities: bool,
    /// Worker threads; `None` uses the process default.
    pub threads: Option<usize>,
    /// Cache stage snapshots here and reuse them on identical reruns.
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            resolution: 512,
            band: 2.0,
            eta: 1.0,
            deform: DeformConfig::default(),
            render_refine: false,
            views: 16,
            image_size: 512,
            render_iters: 50,
            max_loop: Some(64),
            fill_cavities: false,
            threads: None,
            cache_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(64..=1024).contains(&self.resolution) {
            return Err(Error::Config(format!(
                "resolution {} outside 64..=1024",
                self.resolution
            )));
        }
        if self.band < 1.0 {
            return Err(Error::Config(format!("band {} must be >= 1", self.band)));
        }
        if self.eta < 0.0 {
            return Err(Error::Config("eta must be non-negative".into()));
        }
        self.deform.validate()?;
        if self.render_refine && (self.views == 0 || self.image_size == 0) {
            return Err(Error::Config("render refinement needs views and pixels".into()));
        }
        Ok(())
    }

    /// Camera distance and field of view of the synthetic rig, in the
    /// normalized frame.
    pub const RIG_RADIUS: f64 = 2.5;
    pub const RIG_FOV: f64 = 0.8;
}

#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub rows: Vec<(&'static str, f64)>,
}

impl StageTimings {
    fn push(&mut self, stage: &'static str, start: Instant) {
        self.rows.push((stage, start.elapsed().as_secs_f64()));
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|(_, s)| s).sum()
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        for (stage, secs) in &self.rows {
            out.push_str(&format!("{stage:<16} {secs:9.3}s\n"));
        }
        out.push_str(&format!("{:<16} {:9.3}s\n", "total", self.total()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct RemeshOutput {
    /// Watertight result in the input's original coordinates.
    pub mesh: TriMesh,
    /// Final grid (normalized frame), ready for serialization.
    pub grid: SparseGrid,
    pub transform: NormTransform,
    pub timings: StageTimings,
    pub deform_trace: LossTrace,
    pub render_trace: Option<LossTrace>,
    pub holes: HoleDiagnostics,
    pub voids_removed: usize,
}

pub fn remesh(input: &TriMesh, cfg: &PipelineConfig) -> Result<RemeshOutput> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| remesh_inner(input, cfg))
        }
        None => remesh_inner(input, cfg),
    }
}

fn remesh_inner(input: &TriMesh, cfg: &PipelineConfig) -> Result<RemeshOutput> {
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (norm_mesh, transform) = normalize(input).map_err(|e| e.in_stage("normalize"))?;
    timings.push("normalize", t);

    let t = Instant::now();
    let bvh = build_bvh(&norm_mesh).map_err(|e| e.in_stage("build_bvh"))?;
    timings.push("build_bvh", t);

    let cache_key = cfg.cache_dir.as_deref().map(|_| cache_key(input, cfg));
    let deformed_cache = cache_path(cfg, cache_key, "deformed");
    let sdf_cache = cache_path(cfg, cache_key, "sdf");

    let mut deform_trace = LossTrace::default();
    let mut render_trace = None;

    let grid = if let Some(grid) = try_load_cache(deformed_cache.as_deref(), cfg) {
        timings.rows.push(("cached_deformed", 0.0));
        grid
    } else {
        let mut grid = if let Some(grid) = try_load_cache(sdf_cache.as_deref(), cfg) {
            timings.rows.push(("cached_sdf", 0.0));
            grid
        } else {
            let t = Instant::now();
            let mut grid = extract_active_voxels(&bvh, cfg.resolution, cfg.band)
                .map_err(|e| e.in_stage("extract_active_voxels"))?;
            timings.push("active_voxels", t);

            let t = Instant::now();
            let labels = flood_fill(&mut grid);
            close_sheets(&mut grid, &bvh, &labels);
            timings.push("flood_fill", t);

            let t = Instant::now();
            assemble_sdf(&mut grid);
            let eta = cfg.eta * grid.h();
            let stats = refine_signs(&mut grid, &bvh, &labels, eta);
            log::info!(
                "sign refinement: {} ambiguous corners, {} flipped",
                stats.ambiguous,
                stats.flipped
            );
            timings.push("sign_field", t);

            store_cache(sdf_cache.as_deref(), &grid);
            grid
        };

        let t = Instant::now();
        deform_trace =
            optimize_deformation(&mut grid, &bvh, &cfg.deform).map_err(|e| e.in_stage("deform"))?;
        timings.push("deform", t);

        if cfg.render_refine {
            let t = Instant::now();
            let rig = camera_rig(
                cfg.views,
                PipelineConfig::RIG_RADIUS,
                PipelineConfig::RIG_FOV,
                cfg.image_size,
            );
            let rc = RefineConfig {
                iterations: cfg.render_iters,
                ..RefineConfig::default()
            };
            let trace = refine_with_views(&mut grid, &norm_mesh, &rig, &rc)
                .map_err(|e| e.in_stage("render_refine"))?;
            render_trace = Some(trace);
            timings.push("render_refine", t);
        }

        store_cache(deformed_cache.as_deref(), &grid);
        grid
    };

    let t = Instant::now();
    let (raw_extract, jac) = marching_cubes(&grid).map_err(|e| e.in_stage("marching_cubes"))?;
    log::info!(
        "extracted {} vertices / {} faces ({} ambiguous cube cases)",
        raw_extract.vertices.len(),
        raw_extract.faces.len(),
        jac.ambiguous_cases
    );
    // grazing crossings leave needle triangles that a later load would
    // reject as degenerate; collapsing their short edges removes them
    let mut mesh = crate::mesh::collapse_short_edges(&raw_extract, 1e-4 * grid.h());
    timings.push("marching_cubes", t);

    let mut voids_removed = 0;
    if cfg.fill_cavities {
        let t = Instant::now();
        let (filtered, removed) = remove_internal_voids(&mesh);
        mesh = filtered;
        voids_removed = removed;
        timings.push("fill_cavities", t);
    }

    let t = Instant::now();
    let (mesh, holes) = fill_all_holes(&mesh, cfg.max_loop);
    timings.push("hole_fill", t);

    let t = Instant::now();
    let mesh = denormalize(&mesh, &transform);
    timings.push("denormalize", t);

    Ok(RemeshOutput {
        mesh,
        grid,
        transform,
        timings,
        deform_trace,
        render_trace,
        holes,
        voids_removed,
    })
}

fn cache_key(input: &TriMesh, cfg: &PipelineConfig) -> u64 {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    cfg.resolution.hash(&mut hasher);
    cfg.band.to_bits().hash(&mut hasher);
    cfg.eta.to_bits().hash(&mut hasher);
    cfg.deform.iterations.hash(&mut hasher);
    cfg.deform.step_size.to_bits().hash(&mut hasher);
    cfg.render_refine.hash(&mut hasher);
    cfg.views.hash(&mut hasher);
    cfg.image_size.hash(&mut hasher);
    cfg.render_iters.hash(&mut hasher);
    input.vertices.len().hash(&mut hasher);
    input.faces.len().hash(&mut hasher);
    for v in &input.vertices {
        v.x.to_bits().hash(&mut hasher);
        v.y.to_bits().hash(&mut hasher);
        v.z.to_bits().hash(&mut hasher);
    }
    for f in &input.faces {
        f.hash(&mut hasher);
    }
    hasher.finish()
}

fn cache_path(cfg: &PipelineConfig, key: Option<u64>, stage: &str) -> Option<PathBuf> {
    let dir = cfg.cache_dir.as_ref()?;
    let key = key?;
    Some(dir.join(format!("{key:016x}.{stage}.spc3")))
}

fn try_load_cache(path: Option<&std::path::Path>, cfg: &PipelineConfig) -> Option<SparseGrid> {
    let path = path?;
    if !path.exists() {
        return None;
    }
    match crate::spc3::load_grid(path) {
        Ok(grid) if grid.resolution == cfg.resolution => {
            log::info!("reusing cached grid {}", path.display());
            Some(grid)
        }
        Ok(_) => None,
        Err(e) => {
            log::warn!("ignoring unreadable cache {}: {e}", path.display());
            None
        }
    }
}

fn store_cache(path: Option<&std::path::Path>, grid: &SparseGrid) {
    let Some(path) = path else { return };
    if let Some(dir) = path.parent() {
        let _ = std::fs::create_dir_all(dir);
    }
    if let Err(e) = crate::spc3::save_grid(grid, path) {
        log::warn!("could not write cache {}: {e}", path.display());
    }
}

/// Remove output components that bound enclosed air pockets: a component
/// whose immediate outside is itself inside the remaining mesh (odd ray
/// parity) only decorates an internal void.
pub fn remove_internal_voids(mesh: &TriMesh) -> (TriMesh, usize) {
    let (labels, count) = face_components(mesh);
    if count <= 1 {
        return (mesh.clone(), 0);
    }
    let mut keep = vec![true; count];
    for comp in 0..count as u32 {
        let Some(face) = labels.iter().position(|&l| l == comp) else {
            continue;
        };
        let [a, b, c] = mesh.face_points(face);
        let centroid = (a + b + c) / 3.0;
        let n = mesh.face_normal(face);
        if n == Vec3::zeros() {
            continue;
        }
        let probe = centroid + n * (1e-4 * mesh.bbox().diagonal().max(1e-9));
        // parity against the other components only
        if let Some(inside) = parity_inside_subset(mesh, &labels, comp, &probe) {
            if inside {
                keep[comp as usize] = false;
            }
        }
    }
    let removed = keep.iter().filter(|&&k| !k).count();
    if removed == 0 {
        return (mesh.clone(), 0);
    }
    let faces: Vec<[u32; 3]> = mesh
        .faces
        .iter()
        .zip(labels.iter())
        .filter(|(_, &l)| keep[l as usize])
        .map(|(f, _)| *f)
        .collect();
    (TriMesh::new(mesh.vertices.clone(), faces), removed)
}

/// Deterministic even/odd ray parity of `p` against every face outside
/// component `skip`; `None` when no clean ray direction is found.
fn parity_inside_subset(
    mesh: &TriMesh,
    labels: &[u32],
    skip: u32,
    p: &Vec3,
) -> Option<bool> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    'attempts: for _ in 0..32 {
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
        for (f, face_label) in labels.iter().enumerate() {
            if *face_label == skip {
                continue;
            }
            let [a, b, c] = mesh.face_points(f);
            if let Some((_, u, v)) = ray_triangle(p, &dir, &a, &b, &c) {
                let w = 1.0 - u - v;
                if u < 1e-9 || v < 1e-9 || w < 1e-9 {
                    continue 'attempts;
                }
                crossings += 1;
            }
        }
        return Some(crossings % 2 == 1);
    }
    None
}
