//! Command-line front end: `remesh`, `metrics`, `inspect` and `fill-holes`
//! over the sparcubes library. Flags override config-file values, which
//! override built-in defaults; diagnostics go to stderr and results to
//! files or stdout.

mod config;

use anyhow::{bail, Context};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use sparcubes::deform::DeformConfig;
use sparcubes::io::Format;
use sparcubes::pipeline::{remesh, PipelineConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "sparcubes",
    about = "Watertight remeshing through a sparse deformable marching cubes grid",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a raw mesh into a watertight mesh.
    Remesh(RemeshArgs),
    /// Compare a test mesh against a reference and report CD/ANC/F1.
    Metrics(MetricsArgs),
    /// Print the header and field statistics of a serialized grid.
    Inspect(InspectArgs),
    /// Detect and fill boundary loops of a mesh.
    FillHoles(FillHolesArgs),
}

#[derive(Args, Debug)]
struct RemeshArgs {
    /// Input mesh (obj, stl or ply).
    input: PathBuf,
    /// Output mesh path.
    #[arg(short, long)]
    output: PathBuf,
    /// Output format: obj, stl, stl-ascii, ply or ply-ascii.
    #[arg(long, default_value = "ply")]
    format: String,
    /// Grid cells per axis.
    #[arg(long, default_value_t = 512)]
    resolution: u32,
    /// Narrow band half-width, in cells.
    #[arg(long, default_value_t = 2.0)]
    band: f64,
    /// Sign-refinement displacement, in cells.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Deformation optimization iterations.
    #[arg(long, default_value_t = 100)]
    deform_iters: usize,
    /// Deformation step, as a fraction of the locally optimal move.
    #[arg(long, default_value_t = 0.3)]
    deform_step: f64,
    /// Enable the view-based refinement stage (default: off).
    #[arg(long, default_value_t = false)]
    render_refine: bool,
    /// Cameras in the synthetic rig.
    #[arg(long, default_value_t = 16)]
    views: usize,
    /// Rendered image side length in pixels.
    #[arg(long, default_value_t = 512)]
    image_size: u32,
    /// Fill boundary loops up to this many vertices.
    #[arg(long, default_value_t = 64)]
    max_loop: usize,
    /// Fill every boundary loop regardless of size (default: off).
    #[arg(long, default_value_t = false)]
    fill_all: bool,
    /// Remove output components that bound enclosed air pockets (default: off).
    #[arg(long, default_value_t = false)]
    fill_cavities: bool,
    /// Worker threads (SPARCUBE_THREADS is the fallback).
    #[arg(long)]
    threads: Option<usize>,
    /// Cache stage snapshots in this directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Write the optimization loss trace to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Reference mesh.
    reference: PathBuf,
    /// Mesh under test.
    test: PathBuf,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// F1 threshold as a fraction of the reference bbox diagonal.
    #[arg(long, default_value_t = 0.01)]
    tau_rel: f64,
    /// Worker threads (SPARCUBE_THREADS is the fallback).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the machine-readable JSON report here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Serialized grid (.spc3).
    grid: PathBuf,
}

#[derive(Args, Debug)]
struct FillHolesArgs {
    /// Input mesh.
    input: PathBuf,
    /// Output mesh path.
    #[arg(short, long)]
    output: PathBuf,
    /// Output format: obj, stl, stl-ascii, ply or ply-ascii.
    #[arg(long, default_value = "ply")]
    format: String,
    /// Fill boundary loops up to this many vertices.
    #[arg(long, default_value_t = 64)]
    max_loop: usize,
    /// Fill every boundary loop regardless of size (default: off).
    #[arg(long, default_value_t = false)]
    fill_all: bool,
    /// Key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let (_, sub) = matches
        .subcommand()
        .expect("subcommand required by clap");
    let result = match cli.command {
        Command::Remesh(args) => run_remesh(args, sub),
        Command::Metrics(args) => run_metrics(args, sub),
        Command::Inspect(args) => run_inspect(args),
        Command::FillHoles(args) => run_fill_holes(args, sub),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}


fn env_threads() -> Option<usize> {
    std::env::var("SPARCUBE_THREADS").ok()?.parse().ok()
}

fn parse_format(name: &str) -> anyhow::Result<Format> {
    Format::from_name(name).with_context(|| format!("unknown output format {name:?}"))
}

fn run_remesh(mut args: RemeshArgs, matches: &ArgMatches) -> anyhow::Result<()> {
    if let Some(path) = &args.config {
        let file = config::ConfigFile::load(path)?;
        file.override_u32(matches, "resolution", &mut args.resolution)?;
        file.override_f64(matches, "band", &mut args.band)?;
        file.override_f64(matches, "eta", &mut args.eta)?;
        file.override_usize(matches, "deform-iters", &mut args.deform_iters)?;
        file.override_f64(matches, "deform-step", &mut args.deform_step)?;
        file.override_bool(matches, "render-refine", &mut args.render_refine)?;
        file.override_usize(matches, "views", &mut args.views)?;
        file.override_u32(matches, "image-size", &mut args.image_size)?;
        file.override_usize(matches, "max-loop", &mut args.max_loop)?;
        file.override_bool(matches, "fill-all", &mut args.fill_all)?;
        file.override_bool(matches, "fill-cavities", &mut args.fill_cavities)?;
        file.override_opt_usize(matches, "threads", &mut args.threads)?;
        file.override_opt_path(matches, "cache-dir", &mut args.cache_dir)?;
        file.override_string(matches, "format", &mut args.format)?;
        file.finish()?;
    }
    let format = parse_format(&args.format)?;
    let threads = args.threads.or_else(env_threads);

    let cfg = PipelineConfig {
        resolution: args.resolution,
        band: args.band,
        eta: args.eta,
        deform: DeformConfig {
            iterations: args.deform_iters,
            step_size: args.deform_step,
            ..DeformConfig::default()
        },
        render_refine: args.render_refine,
        views: args.views,
        image_size: args.image_size,
        render_iters: 50,
        max_loop: if args.fill_all {
            None
        } else {
            Some(args.max_loop)
        },
        fill_cavities: args.fill_cavities,
        threads,
        cache_dir: args.cache_dir.clone(),
    };

    let mesh = sparcubes::io::load_mesh(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    eprintln!(
        "loaded {}: {} vertices, {} faces",
        args.input.display(),
        mesh.vertices.len(),
        mesh.faces.len()
    );
    let out = remesh(&mesh, &cfg)?;
    sparcubes::io::save_mesh(&out.mesh, &args.output, Some(format))
        .with_context(|| format!("writing {}", args.output.display()))?;

    if let Some(trace_path) = &args.trace {
        let mut csv = out.deform_trace.to_csv();
        if let Some(render) = &out.render_trace {
            csv.push_str(&render.to_csv());
        }
        std::fs::write(trace_path, csv)
            .with_context(|| format!("writing {}", trace_path.display()))?;
    }
    eprintln!("{}", out.holes.report());
    eprint!("{}", out.timings.report());
    eprintln!(
        "wrote {} ({} vertices, {} faces)",
        args.output.display(),
        out.mesh.vertices.len(),
        out.mesh.faces.len()
    );
    Ok(())
}

fn run_metrics(mut args: MetricsArgs, matches: &ArgMatches) -> anyhow::Result<()> {
    if let Some(path) = &args.config {
        let file = config::ConfigFile::load(path)?;
        file.override_usize(matches, "samples", &mut args.samples)?;
        file.override_u64(matches, "seed", &mut args.seed)?;
        file.override_f64(matches, "tau-rel", &mut args.tau_rel)?;
        file.override_opt_usize(matches, "threads", &mut args.threads)?;
        file.finish()?;
    }
    if let Some(n) = args.threads.or_else(env_threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let reference = sparcubes::io::load_mesh(&args.reference)
        .with_context(|| format!("loading {}", args.reference.display()))?;
    let test = sparcubes::io::load_mesh(&args.test)
        .with_context(|| format!("loading {}", args.test.display()))?;
    let report =
        sparcubes::metrics::compare_meshes(&reference, &test, args.samples, args.seed, args.tau_rel)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.output {
        std::fs::write(path, report.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run_inspect(args: InspectArgs) -> anyhow::Result<()> {
    let grid = sparcubes::spc3::load_grid(&args.grid)
        .with_context(|| format!("loading {}", args.grid.display()))?;
    let n = grid.corners.len();
    let (mut min_phi, mut max_phi, mut sum_abs) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    let mut interior = 0usize;
    for (&phi, &sign) in grid.phi.iter().zip(grid.sign.iter()) {
        min_phi = min_phi.min(phi);
        max_phi = max_phi.max(phi);
        sum_abs += phi.abs();
        interior += sign as usize;
    }
    println!("resolution = {}", grid.resolution);
    println!("band = {}", grid.band);
    println!("pad = {}", grid.pad);
    println!("h = {}", grid.h());
    println!("cubes = {}", grid.cubes.len());
    println!("corners = {}", n);
    println!("interior_corners = {interior}");
    println!("phi_min = {min_phi}");
    println!("phi_max = {max_phi}");
    println!("phi_mean_abs = {}", sum_abs / n.max(1) as f64);
    println!("delta_clamp_saturation = {:.6}", grid.delta_saturation());
    Ok(())
}

fn run_fill_holes(mut args: FillHolesArgs, matches: &ArgMatches) -> anyhow::Result<()> {
    if let Some(path) = &args.config {
        let file = config::ConfigFile::load(path)?;
        file.override_usize(matches, "max-loop", &mut args.max_loop)?;
        file.override_bool(matches, "fill-all", &mut args.fill_all)?;
        file.override_string(matches, "format", &mut args.format)?;
        file.finish()?;
    }
    let format = parse_format(&args.format)?;
    let mesh = sparcubes::io::load_mesh(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let max_loop = if args.fill_all {
        None
    } else {
        Some(args.max_loop)
    };
    let (filled, diag) = sparcubes::holes::fill_all_holes(&mesh, max_loop);
    eprintln!("{}", diag.report());
    if diag.open_walks > 0 {
        bail!("{} boundary walks could not close", diag.open_walks);
    }
    sparcubes::io::save_mesh(&filled, &args.output, Some(format))
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "wrote {} (+{} faces)",
        args.output.display(),
        filled.faces.len() - mesh.faces.len()
    );
    Ok(())
}
