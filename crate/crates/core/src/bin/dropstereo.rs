use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dropstereo::detect::detect_drops;
use dropstereo::eval::{evaluate, Normalization};
use dropstereo::formats::*;
use dropstereo::rectify::{rectify_drop, DepthSource};
use dropstereo::scene::{synthesize, SceneSpec};
use dropstereo::solver::{initial_volume, solve_fixed_volume};
use dropstereo::stereo::depth_from_drops;
use dropstereo::volume::{background_brightness, estimate_shape_with_target};
use dropstereo::{DropMask, Error, HeightField, PipelineConfig, Result};

#[derive(Parser)]
#[command(
    name = "dropstereo",
    version,
    about = "Depth and rectification from water drops on glass"
)]
struct Cli {
    /// Offset added to every seed in a synthetic scene.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: one per drop).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Find drop masks in an image.
    Detect(DetectArgs),
    /// Reconstruct one drop surface.
    Reconstruct(ReconstructArgs),
    /// Triangulate depth from two or more reconstructed drops.
    Stereo(StereoArgs),
    /// Resample one drop into a perspective-correct view.
    Rectify(RectifyArgs),
    /// Compare a predicted map with ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Solve at this fixed volume coefficient.
    #[arg(long, conflicts_with = "estimate_volume")]
    alpha: Option<f64>,
    /// Estimate the volume from the dark band (the default).
    #[arg(long)]
    estimate_volume: bool,
    /// Masks of the other drops, left out of the background brightness.
    #[arg(long, value_delimiter = ',')]
    other_masks: Vec<PathBuf>,
}

#[derive(Args)]
struct StereoArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    drops: Vec<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use these matches instead of block matching.
    #[arg(long)]
    correspondences: Option<PathBuf>,
}

#[derive(Args)]
struct RectifyArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    drop: PathBuf,
    /// Per-pixel depth map over the drop.
    #[arg(
        long,
        required_unless_present = "plane_depth",
        conflicts_with = "plane_depth"
    )]
    depth: Option<PathBuf>,
    /// Depth of a fronto-parallel plane.
    #[arg(long)]
    plane_depth: Option<f64>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    DropDiameter,
    SceneDepth,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "drop-diameter")]
    normalize: Norm,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DROPSTEREO_LOG", "warn"))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let jobs = cli.jobs;
    match cli.cmd {
        Command::Synth(a) => synth(a, seed, jobs),
        Command::Detect(a) => detect(a),
        Command::Reconstruct(a) => reconstruct(a, seed),
        Command::Stereo(a) => stereo(a, seed, jobs),
        Command::Rectify(a) => rectify(a),
        Command::Eval(a) => eval(a),
    }
}

/// Sizes the rayon pool; outputs never depend on the thread count.
fn init_pool(jobs: Option<usize>, default: usize) {
    let n = jobs.unwrap_or(default).max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
    {
        log::debug!("thread pool already set: {e}");
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn indexed(dir: &Path, stem: &str, k: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{k:03}.{ext}"))
}

fn synth(a: SynthArgs, seed: u64, jobs: Option<usize>) -> Result<()> {
    let spec: SceneSpec = read_json(&a.scene)?;
    let spec = spec.reseeded(seed);
    let config = read_config(&a.config)?;
    init_pool(jobs, spec.drops.len());
    let base = a.scene.parent().unwrap_or(Path::new("."));
    let (render, drops) = synthesize(&spec, &config, base)?;
    out_dir(&a.out)?;
    write_ppm(a.out.join("image.ppm"), &render.image)?;
    write_pfm(
        a.out.join("depth.pfm"),
        &FloatMap::from_f64(spec.width, spec.height, &render.depth)?,
    )?;
    write_pfm(
        a.out.join("transmittance.pfm"),
        &FloatMap::from_f64(spec.width, spec.height, &render.transmittance)?,
    )?;
    for (k, hf) in drops.iter().enumerate() {
        write_height_field(indexed(&a.out, "drop", k, "pfm"), hf)?;
        write_mask(indexed(&a.out, "mask", k, "pgm"), hf.mask())?;
    }
    write_json(a.out.join("scene.json"), &spec)?;
    log::info!(
        "rendered {}x{} with {} drops",
        spec.width,
        spec.height,
        drops.len()
    );
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    let image = read_pnm(&a.image)?;
    let config = read_config(&a.config)?;
    let masks = detect_drops(&image, &config.detect)?;
    out_dir(&a.out)?;
    for (k, m) in masks.iter().enumerate() {
        write_mask(indexed(&a.out, "mask", k, "pgm"), m)?;
    }
    log::info!("{} drops detected", masks.len());
    Ok(())
}

#[derive(Serialize)]
struct ReconstructReport {
    mode: &'static str,
    iterations: usize,
    final_energy: f64,
    tension_energy: f64,
    gravity_energy: f64,
    converged: bool,
    max_volume_error: f64,
    alpha_est: f64,
    volume: f64,
    alpha_history: Vec<f64>,
    brightness_history: Vec<f64>,
    target_brightness: Option<f64>,
    seed: u64,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn reconstruct(a: ReconstructArgs, seed: u64) -> Result<()> {
    let image = read_pnm(&a.image)?;
    let mask = read_mask(&a.mask)?;
    let config = read_config(&a.config)?;
    let start = Instant::now();
    let (hf, report, alphas, brightness, target, mode) = match a.alpha {
        Some(alpha) => {
            dropstereo::config::validate_alpha(alpha)?;
            let v = initial_volume(&mask, alpha)?;
            let (hf, r) = solve_fixed_volume(&mask, v, &config.solver, &config.optics)?;
            (hf, r, vec![alpha], vec![], None, "fixed_alpha")
        }
        None => {
            let mut all: Vec<DropMask> = vec![mask.clone()];
            for p in &a.other_masks {
                all.push(read_mask(p)?);
            }
            let i_r = config.volume.ring_ratio * background_brightness(&image, &all)?;
            let est = estimate_shape_with_target(&image, &mask, i_r, &config)?;
            let target = est
                .target_brightness
                .is_finite()
                .then_some(est.target_brightness);
            (
                est.height_field,
                est.report,
                est.alpha_history,
                est.brightness_history,
                target,
                "estimate_volume",
            )
        }
    };
    let volume: f64 = hf.heights().iter().sum();
    let alpha_est = volume / (mask.area() as f64).powf(1.5);
    log::info!(
        "{mode}: {} sweeps in {:.2} s",
        report.iterations_run,
        start.elapsed().as_secs_f64()
    );
    write_height_field(&a.out, &hf)?;
    write_json(
        sidecar(&a.out),
        &ReconstructReport {
            mode,
            iterations: report.iterations_run,
            final_energy: report.final_energy.total,
            tension_energy: report.final_energy.tension,
            gravity_energy: report.final_energy.gravity,
            converged: report.converged,
            max_volume_error: report.max_volume_error,
            alpha_est,
            volume,
            alpha_history: alphas,
            brightness_history: brightness,
            target_brightness: target,
            seed,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct StereoStats {
    correspondences: usize,
    valid_points: usize,
    median_depth: Option<f64>,
    median_residual: Option<f64>,
    mean_residual: Option<f64>,
    max_residual: Option<f64>,
    seed: u64,
}

fn stereo(a: StereoArgs, seed: u64, jobs: Option<usize>) -> Result<()> {
    let image = read_pnm(&a.image)?;
    let drops = a
        .drops
        .iter()
        .map(read_height_field)
        .collect::<Result<Vec<HeightField>>>()?;
    let config = read_config(&a.config)?;
    let given = a
        .correspondences
        .as_ref()
        .map(read_correspondences)
        .transpose()?;
    init_pool(jobs, drops.len());
    let result = depth_from_drops(&image, &drops, &config, given.as_deref())?;
    out_dir(&a.out)?;
    for (k, m) in result.depth_maps.iter().enumerate() {
        write_pfm(indexed(&a.out, "depth", k, "pfm"), m)?;
    }
    write_points(a.out.join("points.csv"), &result)?;
    write_correspondences(a.out.join("matches.csv"), &result.correspondences)?;
    let n = result.residuals.len();
    write_json(
        a.out.join("stats.json"),
        &StereoStats {
            correspondences: result.correspondences.len(),
            valid_points: result.valid_points().count(),
            median_depth: result.median_depth(),
            median_residual: result.median_residual(),
            mean_residual: (n > 0).then(|| result.residuals.iter().sum::<f64>() / n as f64),
            max_residual: result.residuals.iter().cloned().reduce(f64::max),
            seed,
        },
    )?;
    Ok(())
}

fn rectify(a: RectifyArgs) -> Result<()> {
    let image = read_pnm(&a.image)?;
    let hf = read_height_field(&a.drop)?;
    let config: PipelineConfig = read_config(&a.config)?;
    let map = a.depth.as_ref().map(read_pfm).transpose()?;
    let depth = match (&map, a.plane_depth) {
        (Some(m), _) => DepthSource::PerPixel(m),
        (None, Some(d)) => DepthSource::Plane(d),
        (None, None) => unreachable!("clap requires one depth source"),
    };
    let view = rectify_drop(&image, &hf, &config.optics, depth)?;
    write_ppm(&a.out, &view.image)?;
    write_json(sidecar(&a.out), &view.info)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_pfm(&a.pred)?;
    let truth = read_pfm(&a.truth)?;
    let norm = match a.normalize {
        Norm::DropDiameter => Normalization::DropDiameter,
        Norm::SceneDepth => Normalization::SceneDepth,
    };
    let report = evaluate(&pred, &truth, norm)?;
    write_json(&a.out, &report)?;
    println!(
        "rms {:.4} ({:.3}% of {:.2}), median {:.4}",
        report.rms,
        100.0 * report.rms_rel,
        report.scale,
        report.median_abs
    );
    Ok(())
}
