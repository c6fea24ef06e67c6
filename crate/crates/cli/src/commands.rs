//! Subcommand arguments and implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use difftrace::gradcheck::{gradcheck, GradcheckConfig};
use difftrace::inverse::{optimize, OptimConfig, Status};
use difftrace::prelude::*;
use difftrace::scene::file::{load_scene, SceneFile};
use serde::Serialize;

use crate::manifest::{sidecar, RunManifest};
use crate::{bench, write_csv, write_png, CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "difftrace", version, about = "Differentiable ray tracer and inverse renderer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene file to PPM.
    Render(RenderArgs),
    /// Recover selected parameters of a scene from a target image.
    Invert(InvertArgs),
    /// Compare reverse-mode gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Run a timing sweep and write CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct Precision {
    /// Compute in 64-bit floats instead of 32-bit.
    #[arg(long = "f64")]
    pub f64: bool,
}

impl Precision {
    fn width(&self) -> u32 {
        if self.f64 {
            64
        } else {
            32
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub scene: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also write a PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Also write an unquantized float32 dump.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub depth: u32,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub no_bvh: bool,
    #[command(flatten)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Target image (PPM).
    #[arg(long, conflicts_with = "target_raw")]
    pub target: Option<PathBuf>,
    /// Target image as a float32 dump.
    #[arg(long)]
    pub target_raw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Scene holding the initial guess.
    pub scene: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Comma-separated parameter paths.
    #[arg(long)]
    pub select: String,
    /// Optimizer settings (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Allow vertex, center and radius parameters.
    #[arg(long)]
    pub unsafe_geometry: bool,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[command(flatten)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    pub scene: PathBuf,
    #[arg(long)]
    pub select: String,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Use the scene's own render as target.
    #[arg(long, conflicts_with_all = ["target", "target_raw"])]
    pub target_self: bool,
    /// Central-difference step; defaults by float width.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub rtol: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Mse)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 2)]
    pub depth: u32,
    /// CSV report path.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// `path=amount` added to one reverse-mode partial.
    #[arg(long, hide = true)]
    pub corrupt_param: Option<String>,
    #[command(flatten)]
    pub precision: Precision,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossArg {
    Mse,
    Ssd,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Bvh,
    Ad,
    Lr,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Image sizes for the bvh suite.
    #[arg(long, value_delimiter = ',', default_values_t = bench::BVH_SIZES)]
    pub sizes: Vec<usize>,
    /// Triangle counts for the ad suite.
    #[arg(long, value_delimiter = ',', default_values_t = (1..=20).collect::<Vec<usize>>())]
    pub triangles: Vec<usize>,
    /// Image side for the ad suite.
    #[arg(long, default_value_t = 32)]
    pub ad_size: usize,
    /// Learning rates for the lr suite.
    #[arg(long, value_delimiter = ',', default_values_t = bench::LR_SWEEP)]
    pub rates: Vec<f64>,
    /// Iterations per run for the lr suite.
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[command(flatten)]
    pub precision: Precision,
}

pub fn run(cli: Cli) -> Result<Exit, CliError> {
    match cli.command {
        Command::Render(a) => {
            let threads = a.threads.unwrap_or_else(default_threads);
            in_pool(threads, || if a.precision.f64 { render_cmd::<f64>(&a, threads) } else { render_cmd::<f32>(&a, threads) })
        }
        Command::Invert(a) => in_pool(a.threads, || if a.precision.f64 { invert_cmd::<f64>(&a) } else { invert_cmd::<f32>(&a) }),
        Command::Gradcheck(a) => {
            in_pool(a.threads, || if a.precision.f64 { gradcheck_cmd::<f64>(&a) } else { gradcheck_cmd::<f32>(&a) })
        }
        Command::Bench(a) => in_pool(a.threads, || if a.precision.f64 { bench_cmd::<f64>(&a) } else { bench_cmd::<f32>(&a) }),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn load<R: Real>(path: &Path, manifest: &mut RunManifest) -> Result<World<R>, CliError> {
    manifest.hash_scene(path)?;
    let loaded = load_scene::<R>(path)?;
    for (mesh, report) in &loaded.obj_reports {
        if report.ignored_lines > 0 || report.degenerate_dropped > 0 {
            eprintln!(
                "warning: {mesh}: ignored {} unsupported line(s), dropped {} degenerate triangle(s)",
                report.ignored_lines, report.degenerate_dropped
            );
        }
    }
    Ok(loaded.world)
}

fn read_target<R: Real>(t: &TargetArgs) -> Result<Option<Image<R>>, CliError> {
    Ok(match (&t.target, &t.target_raw) {
        (Some(p), _) => Some(Image::read_ppm(p)?),
        (None, Some(p)) => Some(Image::read_raw(p)?),
        (None, None) => None,
    })
}

fn accel_for<R: Real>(world: &World<R>, use_bvh: bool) -> Result<Option<Bvh<R>>, CliError> {
    if use_bvh && !world.scene.primitives.is_empty() {
        Ok(Some(Bvh::build(&world.scene.primitives)?))
    } else {
        Ok(None)
    }
}

fn render_cmd<R: Real>(a: &RenderArgs, threads: usize) -> Result<Exit, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("render", a.precision.width(), threads);
    let world = load::<R>(&a.scene, &mut manifest)?;
    manifest.config = serde_json::json!({ "depth": a.depth, "bvh": !a.no_bvh });
    let bvh = accel_for(&world, !a.no_bvh)?;
    let accel = bvh.as_ref().map_or(Accel::Linear, Accel::Bvh);
    let t = Instant::now();
    let image = render(&world, accel, a.depth)?;
    manifest.time("render", ms(t));
    image.write_ppm(&a.out)?;
    if let Some(p) = &a.png {
        write_png(&image, p)?;
    }
    if let Some(p) = &a.raw {
        image.write_raw(p)?;
    }
    manifest.time("total", ms(start));
    manifest.write(&sidecar(&a.out))?;
    Ok(Exit::Ok)
}

#[derive(Serialize)]
struct ParamsReport {
    status: Status,
    iterations: usize,
    initial_loss: f64,
    final_loss: f64,
    message: Option<String>,
    initial: BTreeMap<String, f64>,
    params: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct LossRow {
    iteration: usize,
    loss: f64,
    wall_ms: f64,
}

fn named<R: Real>(p: &ParamVector<R>) -> BTreeMap<String, f64> {
    p.layout.iter().zip(&p.values).map(|(t, v)| (t.to_string(), v.as_f64())).collect()
}

fn read_config(path: Option<&Path>) -> Result<OptimConfig, CliError> {
    let Some(path) = path else { return Ok(OptimConfig::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: OptimConfig = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn invert_cmd<R: Real>(a: &InvertArgs) -> Result<Exit, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("invert", a.precision.width(), a.threads);
    let world = load::<R>(&a.scene, &mut manifest)?;
    let cfg = read_config(a.config.as_deref())?;
    manifest.config = serde_json::json!({ "select": a.select, "optim": cfg, "unsafe_geometry": a.unsafe_geometry });
    let selection = Selection::parse(&a.select, &world)?;
    if selection.has_geometry() && !a.unsafe_geometry {
        return Err(CliError::Usage(format!(
            "`{}` selects geometry; optimizing vertices, centers or radii tends to diverge. Pass --unsafe-geometry to allow it",
            a.select
        )));
    }
    let target: Image<R> = read_target(&a.target)?.ok_or_else(|| CliError::Usage("one of --target or --target-raw is required".into()))?;
    let init = pack_params(&world, &selection)?;

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let snap_dir = a.out_dir.join("snapshots");
    if cfg.snapshot_every > 0 {
        fs::create_dir_all(&snap_dir).map_err(|e| CliError::io(&snap_dir, e))?;
    }

    let mut objective = Objective::new(&world, &target, cfg.loss)?;
    objective.depth = cfg.depth;
    let initial_loss = objective.value(&init)?.as_f64();

    let mut snapshot_error = None;
    let t = Instant::now();
    let outcome = optimize(&world, &init, &target, &cfg, |r| {
        if !r.snapshot || snapshot_error.is_some() {
            return;
        }
        let stem = snap_dir.join(format!("iter_{:04}", r.iteration));
        let result = objective
            .render_at(r.params)
            .map_err(CliError::from)
            .and_then(|img| Ok(img.write_ppm(stem.with_extension("ppm"))?))
            .and_then(|_| write_json(&stem.with_extension("json"), &named(r.params)));
        if let Err(e) = result {
            snapshot_error = Some(e);
        }
    })?;
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    manifest.time("optimize", ms(t));

    let rows: Vec<LossRow> = outcome
        .history
        .iter()
        .zip(&outcome.wall_ms)
        .enumerate()
        .map(|(i, (l, w))| LossRow {
            iteration: i + 1,
            loss: l.as_f64(),
            wall_ms: *w,
        })
        .collect();
    write_csv(&a.out_dir.join("loss.csv"), &rows)?;
    write_json(
        &a.out_dir.join("params.json"),
        &ParamsReport {
            status: outcome.status,
            iterations: outcome.iterations,
            initial_loss,
            final_loss: outcome.final_loss.as_f64(),
            message: outcome.message.clone(),
            initial: named(&init),
            params: named(&outcome.params),
        },
    )?;
    let recovered = objective.world_at(&outcome.params)?;
    let scene_out = a.out_dir.join("scene.json");
    fs::write(&scene_out, SceneFile::from_world(&recovered).to_json() + "\n").map_err(|e| CliError::io(&scene_out, e))?;
    objective.render_at(&outcome.params)?.write_ppm(a.out_dir.join("final.ppm"))?;
    manifest.time("total", ms(start));
    manifest.write(&a.out_dir.join("manifest.json"))?;

    if let Some(m) = &outcome.message {
        eprintln!("{m}");
    }
    eprintln!(
        "{:?} after {} iteration(s): loss {:.6e} -> {:.6e}",
        outcome.status,
        outcome.iterations,
        initial_loss,
        outcome.final_loss.as_f64()
    );
    Ok(match outcome.status {
        Status::Converged => Exit::Ok,
        Status::MaxIterations => Exit::NotConverged,
        Status::NumericalFailure => Exit::Numerical,
    })
}

fn gradcheck_cmd<R: Real>(a: &GradcheckArgs) -> Result<Exit, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("gradcheck", a.precision.width(), a.threads);
    let world = load::<R>(&a.scene, &mut manifest)?;
    let selection = Selection::parse(&a.select, &world)?;
    if selection.len() > 500 {
        eprintln!("warning: {} parameters; finite differences need {} renders", selection.len(), 2 * selection.len());
    }
    let (w, h) = (world.camera.width, world.camera.height);
    let target = if a.target_self {
        render(&world, Accel::Linear, a.depth)?
    } else {
        read_target(&a.target)?.unwrap_or_else(|| Image::filled(w, h, Vec3::zero()))
    };
    let corrupt = match &a.corrupt_param {
        None => None,
        Some(spec) => {
            let (path, amount) = spec
                .rsplit_once('=')
                .and_then(|(p, v)| Some((p.to_string(), v.parse::<f64>().ok()?)))
                .ok_or_else(|| CliError::Usage(format!("--corrupt-param expects path=amount, got `{spec}`")))?;
            Some((path, amount))
        }
    };
    let cfg = GradcheckConfig {
        delta: a.delta.map_or(R::of(R::DEFAULT_FD_DELTA), R::of),
        rtol: a.rtol,
        loss: match a.loss {
            LossArg::Mse => LossKind::Mse,
            LossArg::Ssd => LossKind::Ssd,
        },
        depth: a.depth,
        corrupt,
    };
    manifest.config = serde_json::json!({
        "select": a.select,
        "delta": cfg.delta.as_f64(),
        "rtol": a.rtol,
        "depth": a.depth,
        "target_self": a.target_self,
    });
    let t = Instant::now();
    let report = gradcheck(&world, &selection, &target, &cfg)?;
    manifest.time("gradcheck", ms(t));
    fs::write(&a.out, report.to_csv()).map_err(|e| CliError::io(&a.out, e))?;
    manifest.time("total", ms(start));
    manifest.write(&sidecar(&a.out))?;

    let failed: Vec<_> = report.rows.iter().filter(|r| !r.boundary && !r.pass).collect();
    for r in &failed {
        eprintln!("FAIL {}: ad {:e} fd {:e} rel {:e}", r.path, r.ad, r.fd, r.rel_err);
    }
    eprintln!(
        "{} parameter(s), {} checked, {} boundary, {} failed",
        report.rows.len(),
        report.checked(),
        report.rows.len() - report.checked(),
        failed.len()
    );
    Ok(if report.passed() { Exit::Ok } else { Exit::Numerical })
}

fn bench_cmd<R: Real>(a: &BenchArgs) -> Result<Exit, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("bench", a.precision.width(), a.threads);
    manifest.seed = Some(a.seed);
    match a.suite {
        Suite::Bvh => {
            manifest.config = serde_json::json!({ "suite": a.suite, "sizes": a.sizes, "trials": a.trials });
            write_csv(&a.out, &bench::bvh_suite::<R>(&a.sizes, a.trials)?)?;
        }
        Suite::Ad => {
            manifest.config = serde_json::json!({
                "suite": a.suite, "triangles": a.triangles, "size": a.ad_size, "trials": a.trials,
            });
            if a.triangles.contains(&0) {
                return Err(CliError::Usage("--triangles entries must be at least 1".into()));
            }
            write_csv(&a.out, &bench::ad_suite::<R>(&a.triangles, a.ad_size, a.trials, a.seed)?)?;
        }
        Suite::Lr => {
            manifest.config = serde_json::json!({ "suite": a.suite, "rates": a.rates, "iterations": a.iterations });
            write_csv(&a.out, &bench::lr_suite::<R>(&a.rates, a.iterations)?)?;
        }
    }
    manifest.time("total", ms(start));
    manifest.write(&sidecar(&a.out))?;
    Ok(Exit::Ok)
}
