//! `splatloc` command line: synthetic benchmarks, training, localization,
//! refinement, rendering and evaluation.

mod config;

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use splatloc::bench::{self, Split};
use splatloc::geometry::{parse_poses, CameraIntrinsics, Pose};
use splatloc::imaging::{save_depth_pgm, Image};
use splatloc::model::{init_params, stored_config};
use splatloc::network::PreparedScene;
use splatloc::refinement::{localize, refine, MatcherKind, ModelMatcher, NccMatcher};
use splatloc::render::render;
use splatloc::scene_io::{load_ply, GaussianScene};
use splatloc::supervision::{train, TrainingSample};
use splatloc::{ModelParams, Real};

use config::RunConfig;

/// Exit code for a query that could not be localized.
const EXIT_LOCALIZATION_FAILURE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "splatloc", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CARGO_PKG_NAME"), ")"))]
#[command(about = "Camera localization against 3D Gaussian Splatting scenes")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key (`key=value`); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Append structured JSON-lines events to this file.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    /// Shorthand for `--set ransac.max_iters=N`.
    #[arg(long, global = true, value_name = "N")]
    ransac_iters: Option<usize>,
    /// Shorthand for `--set ransac.inlier_px=PX`.
    #[arg(long, global = true, value_name = "PX")]
    inlier_px: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic benchmark directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a matcher on one or more benchmark directories.
    Train(TrainArgs),
    /// Localize one query image.
    Localize(LocalizeArgs),
    /// Refine a given pose by render-and-match.
    Refine(RefineArgs),
    /// Render color and depth at a pose.
    Render(RenderArgs),
    /// Evaluate a model on a benchmark's test split.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Benchmark root or scene directory; repeat for several scenes.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from existing weights.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Trained weights; optional when --init-pose is given with the ncc matcher.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    /// Skip learned matching and refine this pose instead.
    #[arg(long)]
    init_pose: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    diag: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RefineArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long)]
    init_pose: PathBuf,
    /// Weights for the model matcher.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    diag: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Pose file; the line selected by --index is used.
    #[arg(long)]
    pose: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    intrinsics: PathBuf,
    /// Color PNG and 16-bit depth PGM.
    #[arg(long, num_args = 2, value_names = ["COLOR", "DEPTH"])]
    out: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Benchmark root or scene directory with a `test/` split.
    #[arg(long)]
    data: PathBuf,
    /// Trained weights; not needed with eval.oracle = true.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Human messages to stderr, structured events to the optional JSON-lines file.
struct Logger {
    file: Option<Mutex<File>>,
}

impl Logger {
    fn new(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => Some(Mutex::new(
                fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .with_context(|| format!("opening log {}", p.display()))?,
            )),
            None => None,
        };
        Ok(Self { file })
    }

    fn event(&self, event: &str, fields: serde_json::Value) {
        if let Some(f) = &self.file {
            let mut line = json!({ "event": event });
            if let (Some(o), serde_json::Value::Object(extra)) = (line.as_object_mut(), fields) {
                o.extend(extra);
            }
            if let Ok(mut f) = f.lock() {
                let _ = writeln!(f, "{line}");
            }
        }
    }

    fn info(&self, msg: impl AsRef<str>) {
        eprintln!("{}", msg.as_ref());
        self.event("message", json!({ "text": msg.as_ref() }));
    }
}

/// Error kinds that map to exit codes.
#[derive(Debug)]
struct LocalizationFailure(String);

impl std::fmt::Display for LocalizationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "localization failed: {}", self.0)
    }
}

impl std::error::Error for LocalizationFailure {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<LocalizationFailure>().is_some() {
                ExitCode::from(EXIT_LOCALIZATION_FAILURE)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        c.set_pair(o)?;
    }
    if let Some(n) = cli.ransac_iters {
        c.set("ransac.max_iters", &n.to_string())?;
    }
    if let Some(px) = cli.inlier_px {
        c.set("ransac.inlier_px", &px.to_string())?;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let log = Logger::new(cli.log.as_deref())?;
    log.event("start", json!({ "args": std::env::args().collect::<Vec<_>>() }));
    let r = match &cli.command {
        Command::Synth { out } => synth(&cfg, out, &log),
        Command::Train(a) => precision(&cfg, |f32| if f32 { run_train::<f32>(&cfg, a, &log) } else { run_train::<f64>(&cfg, a, &log) }),
        Command::Localize(a) => precision(&cfg, |f32| {
            if f32 {
                run_localize::<f32>(&cfg, a, &log)
            } else {
                run_localize::<f64>(&cfg, a, &log)
            }
        }),
        Command::Refine(a) => run_refine(&cfg, a, &log),
        Command::Render(a) => run_render(&cfg, a, &log),
        Command::Eval(a) => precision(&cfg, |f32| if f32 { run_eval::<f32>(&cfg, a, &log) } else { run_eval::<f64>(&cfg, a, &log) }),
    };
    log.event("end", json!({ "ok": r.is_ok(), "error": r.as_ref().err().map(|e| format!("{e:#}")) }));
    r
}

fn precision(cfg: &RunConfig, f: impl FnOnce(bool) -> Result<()>) -> Result<()> {
    f(cfg.use_f32()?)
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved"), cfg.resolved())?;
    Ok(())
}

/// Directory holding an output file.
fn parent(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn synth(cfg: &RunConfig, out: &Path, log: &Logger) -> Result<()> {
    let spec = cfg.bench()?;
    bench::write_benchmark(out, &spec)?;
    write_resolved(out, cfg)?;
    log.info(format!(
        "wrote benchmark to {} ({} Gaussians, {} train / {} test views)",
        out.display(),
        spec.n_gaussians,
        spec.n_train_views,
        spec.n_test_views
    ));
    Ok(())
}

/// A benchmark root resolves to its single scene directory.
fn resolve_scene_dir(p: &Path) -> PathBuf {
    if p.join("scene.ply").exists() {
        p.to_path_buf()
    } else {
        bench::scene_dir(p)
    }
}

fn load_scene(cfg: &RunConfig, path: &Path) -> Result<(GaussianScene, GaussianScene)> {
    let raw = load_ply(path).with_context(|| format!("loading {}", path.display()))?;
    let prepared = raw.prepare(cfg.get("scene.opacity_threshold")?, cfg.get("scene.subsample")?, cfg.seed()?)?;
    Ok((raw, prepared))
}

fn load_model<T: Real>(path: &Path) -> Result<ModelParams<T>> {
    ModelParams::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn run_train<T: Real>(cfg: &RunConfig, a: &TrainArgs, log: &Logger) -> Result<()> {
    let model_cfg = cfg.model()?;
    let mut tc = cfg.train()?;
    let regime = cfg.raw("train.regime");
    if regime == "single" && a.data.len() != 1 {
        bail!("single-scene training takes exactly one --data directory, got {}", a.data.len());
    }
    let mut scenes = Vec::new();
    let mut samples: Vec<TrainingSample> = Vec::new();
    for (i, d) in a.data.iter().enumerate() {
        let dir = resolve_scene_dir(d);
        let (_, scene) = load_scene(cfg, &dir.join("scene.ply"))?;
        scenes.push(PreparedScene::new(&scene, &model_cfg)?);
        let split: Split = bench::load_split(&dir, &dir)?;
        samples.extend(bench::training_samples(&split, &model_cfg, i)?);
    }
    let mut p: ModelParams<T> = match &a.init {
        Some(path) => load_model(path)?,
        None => init_params(&model_cfg, cfg.get("model.init_seed")?)?,
    };
    fs::create_dir_all(&a.out)?;
    write_resolved(&a.out, cfg)?;
    tc.checkpoint_dir = Some(a.out.join("checkpoints"));
    if tc.checkpoint_every > 0 {
        fs::create_dir_all(a.out.join("checkpoints"))?;
    }
    log.info(format!(
        "training on {} scene(s), {} images, {} weights, regime {regime}",
        scenes.len(),
        samples.len(),
        p.num_weights()
    ));
    let mut loss_log = std::io::BufWriter::new(File::create(a.out.join("loss_log.jsonl"))?);
    let result = train(&scenes, &samples, &mut p, &model_cfg, &tc, |s| {
        let _ = writeln!(loss_log, "{}", serde_json::to_string(s).unwrap_or_default());
        if s.step == 1 || s.step % 100 == 0 {
            log.event("step", serde_json::to_value(s).unwrap_or_default());
            eprintln!("step {} loss {:?} (coarse {:?}, fine {:?})", s.step, s.loss, s.coarse, s.fine);
        }
    });
    loss_log.flush()?;
    let steps = result?;
    p.save(&a.out.join("model.params"))?;
    let losses: Vec<f64> = steps.iter().filter_map(|s| s.loss).collect();
    log.info(format!(
        "trained {} steps; loss {:?} -> {:?}; saved {}",
        steps.len(),
        losses.first(),
        losses.last(),
        a.out.join("model.params").display()
    ));
    Ok(())
}

fn read_pose(path: &Path, index: usize) -> Result<Pose> {
    let poses = parse_poses(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
    poses
        .get(index)
        .copied()
        .ok_or_else(|| anyhow!("{} has {} poses, wanted index {index}", path.display(), poses.len()))
}

fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    Ok(bench::load_intrinsics(path)?)
}

fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    fs::write(path, format!("{}\n", pose.to_line()))?;
    Ok(())
}

fn run_localize<T: Real>(cfg: &RunConfig, a: &LocalizeArgs, log: &Logger) -> Result<()> {
    let (_, scene) = load_scene(cfg, &a.scene)?;
    let k = read_intrinsics(&a.intrinsics)?;
    let query = Image::load_rgb(&a.image)?;
    let rcfg = cfg.refinement()?;
    write_resolved(&parent(&a.out), cfg)?;
    let (pose, diag) = if let Some(init) = &a.init_pose {
        let pose0 = read_pose(init, 0)?;
        let refined = refine_with(cfg, &query, &pose0, &scene, &k, a.model.as_deref())?;
        let skipped = refined.skipped;
        (Some(refined.pose), json!({ "init_pose": pose0.to_line(), "refinement": refined, "skipped": skipped }))
    } else {
        let model = a.model.as_ref().ok_or_else(|| anyhow!("--model is required without --init-pose"))?;
        let p: ModelParams<T> = load_model(model)?;
        let model_cfg = stored_config(&p)?;
        let prepared = PreparedScene::new(&scene, &model_cfg)?;
        let loc = localize(&query, &prepared, &scene, &p, &model_cfg, &k, &cfg.ransac()?, &rcfg)?;
        (loc.pose, serde_json::to_value(&loc.diagnostics)?)
    };
    if let Some(d) = &a.diag {
        fs::write(d, serde_json::to_string_pretty(&diag)?)?;
    }
    log.event("localize", diag.clone());
    match pose {
        Some(p) => {
            write_pose(&a.out, &p)?;
            log.info(format!("pose written to {}", a.out.display()));
            Ok(())
        }
        None => Err(LocalizationFailure(diag["failure"].as_str().unwrap_or("no pose").to_string()).into()),
    }
}

fn refine_with(
    cfg: &RunConfig,
    query: &Image,
    pose0: &Pose,
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    model: Option<&Path>,
) -> Result<splatloc::refinement::Refined> {
    let rcfg = cfg.refinement()?;
    Ok(match rcfg.matcher {
        MatcherKind::Ncc => refine(query, pose0, scene, k, &rcfg, &NccMatcher { cfg: rcfg.ncc })?,
        MatcherKind::Model => {
            let path = model.ok_or_else(|| anyhow!("refine.matcher = model needs --model"))?;
            // the model matcher follows the configured precision
            if cfg.use_f32()? {
                let p: ModelParams<f32> = load_model(path)?;
                let mc = stored_config(&p)?;
                refine(query, pose0, scene, k, &rcfg, &ModelMatcher { params: &p, cfg: &mc })?
            } else {
                let p: ModelParams<f64> = load_model(path)?;
                let mc = stored_config(&p)?;
                refine(query, pose0, scene, k, &rcfg, &ModelMatcher { params: &p, cfg: &mc })?
            }
        }
    })
}

fn run_refine(cfg: &RunConfig, a: &RefineArgs, log: &Logger) -> Result<()> {
    let (_, scene) = load_scene(cfg, &a.scene)?;
    let k = read_intrinsics(&a.intrinsics)?;
    let query = Image::load_rgb(&a.image)?;
    let pose0 = read_pose(&a.init_pose, 0)?;
    write_resolved(&parent(&a.out), cfg)?;
    let refined = refine_with(cfg, &query, &pose0, &scene, &k, a.model.as_deref())?;
    write_pose(&a.out, &refined.pose)?;
    if let Some(d) = &a.diag {
        fs::write(d, serde_json::to_string_pretty(&refined)?)?;
    }
    log.event("refine", serde_json::to_value(&refined)?);
    log.info(format!(
        "refined pose written to {} ({} of {} rounds adopted)",
        a.out.display(),
        refined.rounds.iter().filter(|r| r.adopted).count(),
        refined.rounds.len()
    ));
    Ok(())
}

fn run_render(cfg: &RunConfig, a: &RenderArgs, log: &Logger) -> Result<()> {
    let scene = load_ply(&a.scene).with_context(|| format!("loading {}", a.scene.display()))?;
    let pose = read_pose(&a.pose, a.index)?;
    let k = read_intrinsics(&a.intrinsics)?;
    let (color, depth) = (&a.out[0], &a.out[1]);
    write_resolved(&parent(color), cfg)?;
    let out = render(&scene, &pose, &k);
    out.color.save_png(color)?;
    let scale = save_depth_pgm(&out.depth, depth)?;
    let mut sidecar = depth.as_os_str().to_owned();
    sidecar.push(".scale");
    fs::write(
        PathBuf::from(sidecar),
        format!("# depth = value / scale\nscale = {scale:e}\n"),
    )?;
    log.info(format!(
        "rendered {}x{} (coverage {:.3}, {} singular splats skipped)",
        k.width,
        k.height,
        out.coverage(0.5),
        out.skipped_singular
    ));
    Ok(())
}

fn run_eval<T: Real>(cfg: &RunConfig, a: &EvalArgs, log: &Logger) -> Result<()> {
    let ecfg = cfg.eval()?;
    let dir = resolve_scene_dir(&a.data);
    let (_, scene) = load_scene(cfg, &dir.join("scene.ply"))?;
    let test = bench::load_split(&dir, &dir.join("test"))?;
    let extent = match bench::load_spec(&a.data) {
        Ok(s) => s.extent,
        Err(_) => scene.bbox.diagonal() / 3f64.sqrt(),
    };
    fs::create_dir_all(&a.out)?;
    write_resolved(&a.out, cfg)?;
    let (p, model_cfg): (ModelParams<T>, _) = match &a.model {
        Some(m) => {
            let p = load_model(m)?;
            let c = stored_config(&p)?;
            (p, c)
        }
        None if ecfg.oracle => {
            let c = cfg.model()?;
            (init_params(&c, 0)?, c)
        }
        None => bail!("--model is required unless eval.oracle = true"),
    };
    let prepared = PreparedScene::new(&scene, &model_cfg)?;
    let overlays = a.out.join("overlays");
    if ecfg.overlays && !ecfg.oracle {
        fs::create_dir_all(&overlays)?;
    }
    let report = bench::evaluate(&scene, &prepared, &test, &p, &model_cfg, &ecfg, extent, Some(&overlays))?;
    bench::write_report(&a.out, &report)?;
    log.event("eval", json!({ "unrefined": report.unrefined, "refined": report.refined }));
    log.info(format!(
        "{} queries: recall {:.3} unrefined, {:.3} refined; report in {}",
        report.queries,
        report.unrefined.recall,
        report.refined.recall,
        a.out.display()
    ));
    Ok(())
}
