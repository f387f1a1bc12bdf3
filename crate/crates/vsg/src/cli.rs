//! The `vsg` command line.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vsg_core::detection::SyntheticDetector;
use vsg_core::eval::{coverage_report, evaluate, AnglePairing, CoverageReport, LabeledPose, PoseLabel, PoseSet, ViewpointReport};
use vsg_core::scoring::{PriorTable, VOCABULARY};
use vsg_core::session::{CaptureSession, CompletionStatus, Pipeline, SessionConfig};
use vsg_core::sim::{render_frame, sample_ground_truth, Scene, Trajectory};
use vsg_core::sphere::{CoverageMerge, MergeCenter};
use vsg_core::Pose;

use crate::dataset::DatasetWriter;
use crate::error::{Error, Result};
use crate::formats::{self, write_json, write_pose_set, write_text};
use crate::server::{AppState, PoseAck, BIND_ENV, DEFAULT_BIND, SKIPPED_STATUS};
use crate::{bundled, runner, snapshot};

#[derive(Debug, Parser)]
#[command(name = "vsg", version, about = "View-sampling guidance: simulate, serve and evaluate capture sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a session over a scripted trajectory or stdin poses and write its artifacts.
    Run(RunArgs),
    /// Serve the keyframe and state endpoints.
    Serve(ServeArgs),
    /// Compare a training pose set against a ground-truth pose set.
    Eval(EvalArgs),
    /// Write the five scoring prompts over the category vocabulary.
    ExportPrompts(ExportPromptsArgs),
    /// Write the prior table as CSV.
    ExportTable(ExportTableArgs),
    /// Sample ground-truth viewpoints in a scene's free space.
    SampleGt(SampleGtArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CenterArg {
    Midpoint,
    Enclosing,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CoverageArg {
    IntersectRemaining,
    IntersectCovered,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PairingArg {
    NearestPosition,
    MinAngle,
}

impl From<PairingArg> for AnglePairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::NearestPosition => AnglePairing::NearestPosition,
            PairingArg::MinAngle => AnglePairing::MinAngle,
        }
    }
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Prior table CSV; the bundled table when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Complexity score a category must exceed [default: 60].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Sphere radius as a fraction of the mask span [default: 0.75].
    #[arg(long)]
    pub radius_scale: Option<f64>,
    /// Subsurfaces per sphere [default: 32].
    #[arg(long)]
    pub subsurfaces: Option<usize>,
    /// Detections below this confidence are dropped [default: 0.5].
    #[arg(long)]
    pub confidence_cutoff: Option<f64>,
    /// Occupancy voxel edge in meters [default: 0.1].
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Largest radius a merge may produce, in meters [default: 1].
    #[arg(long)]
    pub max_radius: Option<f64>,
    /// Where merged spheres are centered [default: midpoint].
    #[arg(long, value_enum)]
    pub merge_center: Option<CenterArg>,
    /// How merged spheres combine subsurface coverage [default: intersect-remaining].
    #[arg(long, value_enum)]
    pub coverage_merge: Option<CoverageArg>,
}

impl SessionArgs {
    fn apply(&self, cfg: &mut SessionConfig) {
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.radius_scale {
            cfg.radius_scale = v;
        }
        if let Some(v) = self.subsurfaces {
            cfg.subsurfaces = v;
        }
        if let Some(v) = self.confidence_cutoff {
            cfg.confidence_cutoff = v;
        }
        if let Some(v) = self.voxel_size {
            cfg.voxel_size = v;
        }
        if let Some(v) = self.max_radius {
            cfg.merge.max_radius = v;
        }
        if let Some(c) = self.merge_center {
            cfg.merge.center = match c {
                CenterArg::Midpoint => MergeCenter::Midpoint,
                CenterArg::Enclosing => MergeCenter::Enclosing,
            };
        }
        if let Some(c) = self.coverage_merge {
            cfg.merge.coverage = match c {
                CoverageArg::IntersectRemaining => CoverageMerge::IntersectRemaining,
                CoverageArg::IntersectCovered => CoverageMerge::IntersectCovered,
            };
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scene file, or the name of a bundled scene (desk, large, medium, small).
    #[arg(long, default_value = "desk")]
    pub scene: String,
    /// Trajectory file, or `desk_orbit` for the bundled orbit.
    #[arg(long, conflicts_with = "interactive")]
    pub trajectory: Option<String>,
    /// Read `{"timestamp", "pose"}` JSON lines from stdin instead of a trajectory.
    #[arg(long)]
    pub interactive: bool,
    /// Seed for ground-truth viewpoint sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of ground-truth viewpoints to sample.
    #[arg(long, default_value_t = 64)]
    pub gt_count: usize,
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Skip writing per-frame images and depth.
    #[arg(long)]
    pub no_dataset: bool,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address.
    #[arg(long, env = BIND_ENV, default_value = DEFAULT_BIND)]
    pub bind: String,
    /// Prior table CSV; the bundled table when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Where session snapshots are written on shutdown.
    #[arg(long, default_value = "snapshots")]
    pub snapshot_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Training poses (JSON pose set).
    #[arg(long)]
    pub train: PathBuf,
    /// Ground-truth poses (JSON pose set).
    #[arg(long)]
    pub gt: PathBuf,
    /// Which training view each ground-truth view is compared against.
    #[arg(long, value_enum, default_value = "nearest-position")]
    pub pairing: PairingArg,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportPromptsArgs {
    /// Directory for one `<metric>.txt` per prompt; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportTableArgs {
    /// Table to re-export; the bundled table when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleGtArgs {
    #[arg(long, default_value = "desk")]
    pub scene: String,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output pose set (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything `run` writes to `report.json`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub scene: String,
    pub seed: u64,
    pub coverage: CoverageReport,
    pub completion: CompletionStatus,
    pub viewpoints: ViewpointReport,
}

fn load_table(path: Option<&Path>) -> Result<PriorTable> {
    match path {
        Some(p) => formats::load_prior_table(p),
        None => Ok(bundled::prior_table()),
    }
}

/// A path when it exists, else a bundled name, else a missing-file error.
fn resolve_scene(arg: &str) -> Result<Scene> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(scene) = bundled::scene(arg) {
            return Ok(scene);
        }
    }
    formats::load_scene(path)
}

fn resolve_trajectory(arg: &str) -> Result<Trajectory> {
    let path = Path::new(arg);
    if !path.exists() && arg == "desk_orbit" {
        return Ok(bundled::desk_orbit());
    }
    formats::load_trajectory(path)
}

fn scene_label(arg: &str) -> String {
    Path::new(arg)
        .file_stem()
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_run(args: &RunArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<RunReport> {
    let scene = resolve_scene(&args.scene)?;
    let table = load_table(args.session.table.as_deref())?;
    let mut config = runner::session_config(&scene);
    args.session.apply(&mut config);
    config.validate()?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut recorder = if args.no_dataset {
        None
    } else {
        Some(DatasetWriter::create(&args.out.join("dataset"))?)
    };
    let session = if args.interactive {
        run_interactive(&scene, &table, config, recorder.as_mut(), stdin, stdout)?
    } else {
        let trajectory = resolve_trajectory(args.trajectory.as_deref().unwrap_or("desk_orbit"))?;
        runner::simulate(&scene, &trajectory, &table, config, recorder.as_mut())?
    };
    if let Some(rec) = recorder {
        rec.finish()?;
    }
    let report = write_artifacts(&args.out, &scene_label(&args.scene), &scene, &session, args.seed, args.gt_count)?;
    writeln!(stdout, "{}", summary(&report)).map_err(|e| Error::io("<stdout>", e))?;
    Ok(report)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseLine {
    timestamp: f64,
    pose: Pose,
}

fn run_interactive(
    scene: &Scene,
    table: &PriorTable,
    config: SessionConfig,
    mut recorder: Option<&mut DatasetWriter>,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
) -> Result<CaptureSession> {
    let mut session = CaptureSession::new(config)?;
    let detector = SyntheticDetector::new(scene.clone());
    let pipeline = Pipeline {
        detector: &detector,
        table,
    };
    let intr = runner::render_intrinsics();
    for (n, line) in stdin.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let input: PoseLine =
            serde_json::from_str(&line).map_err(|e| Error::malformed(format!("<stdin>:{}", n + 1), e))?;
        let frame = render_frame(scene, &input.pose, &intr, input.timestamp);
        let report = session.ingest(&frame, pipeline)?;
        if let (Some(rec), true) = (recorder.as_deref_mut(), report.accepted) {
            rec.write(&frame, report.keyframe)?;
        }
        let ack = PoseAck {
            accepted: report.accepted,
            frame_index: report.frame_index,
            keyframe: report.keyframe,
            status: if report.accepted { "ingested" } else { SKIPPED_STATUS }.into(),
        };
        writeln!(stdout, "{}", serde_json::to_string(&ack).expect("ack serializes")).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(session)
}

fn write_artifacts(out: &Path, label: &str, scene: &Scene, session: &CaptureSession, seed: u64, gt_count: usize) -> Result<RunReport> {
    let snap = out.join("session.vsgsnap");
    std::fs::write(&snap, snapshot::snapshot(session)).map_err(|e| Error::io(&snap, e))?;
    formats::write_grid(out, "grid", session.grid())?;

    let mut events = String::new();
    for e in session.events() {
        events.push_str(&serde_json::to_string(e).expect("event serializes"));
        events.push('\n');
    }
    write_text(&out.join("events.jsonl"), &events)?;

    let labeled = |poses: Vec<Pose>, l: PoseLabel| PoseSet {
        poses: poses
            .into_iter()
            .map(|pose| LabeledPose {
                pose,
                label: l,
                scene: Some(label.to_string()),
            })
            .collect(),
        metric_scale: true,
    };
    let training = labeled(session.frames().iter().map(|f| f.pose).collect(), PoseLabel::Training);
    let ground_truth = labeled(sample_ground_truth(scene, gt_count, seed)?, PoseLabel::GroundTruth);
    write_pose_set(&out.join("training_poses.json"), &training)?;
    write_pose_set(&out.join("ground_truth_poses.json"), &ground_truth)?;

    let report = RunReport {
        scene: label.to_string(),
        seed,
        coverage: coverage_report(session),
        completion: session.completion_status(),
        viewpoints: evaluate(&training, &ground_truth, AnglePairing::default())?,
    };
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &format!("{}\n", summary(&report)))?;
    Ok(report)
}

pub fn summary(r: &RunReport) -> String {
    let c = &r.coverage;
    let pct = if c.total_subsurfaces == 0 {
        0.0
    } else {
        100.0 * c.covered_subsurfaces as f64 / c.total_subsurfaces as f64
    };
    let mut s = format!(
        "scene {}: {} frames, {} keyframes, {} spheres\n\
         subsurfaces covered {}/{} ({pct:.1}%), unobserved fraction {:.4}\n\
         nearest-view distance {:.3} ± {:.3} m, angle {:.2} ± {:.2} deg over {} ground-truth views",
        r.scene,
        c.frames,
        c.keyframes,
        c.spheres,
        c.covered_subsurfaces,
        c.total_subsurfaces,
        c.unobserved_fraction,
        r.viewpoints.pooled.distance.mean,
        r.viewpoints.pooled.distance.sd,
        r.viewpoints.pooled.angle.mean,
        r.viewpoints.pooled.angle.sd,
        r.viewpoints.pooled.distance.n,
    );
    for sphere in &r.completion.spheres {
        s.push_str(&format!(
            "\n  sphere {} ({}): r = {:.3} m, {}/{} covered",
            sphere.id, sphere.category, sphere.radius, sphere.covered, sphere.total
        ));
    }
    s
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<ViewpointReport> {
    let train = formats::load_pose_set(&args.train)?;
    let gt = formats::load_pose_set(&args.gt)?;
    match (&train.frame_convention, &gt.frame_convention) {
        (Some(a), Some(b)) if a != b => {
            writeln!(stderr, "warning: frame conventions differ: {a:?} ({}) vs {b:?} ({})", args.train.display(), args.gt.display())
                .map_err(|e| Error::io("<stderr>", e))?;
        }
        (None, _) | (_, None) => {
            writeln!(stderr, "warning: a pose set does not declare its frame convention; assuming both match")
                .map_err(|e| Error::io("<stderr>", e))?;
        }
        _ => {}
    }
    let report = evaluate(&train.set, &gt.set, args.pairing.into())?;
    let p = &report.pooled;
    let mut text = format!(
        "distance {:.6} ± {:.6} m\nangle {:.6} ± {:.6} deg\nn {}",
        p.distance.mean, p.distance.sd, p.angle.mean, p.angle.sd, p.distance.n
    );
    for (scene, s) in &report.per_scene {
        text.push_str(&format!(
            "\n  {scene}: distance {:.6} ± {:.6} m, angle {:.6} ± {:.6} deg",
            s.distance.mean, s.distance.sd, s.angle.mean, s.angle.sd
        ));
    }
    writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

pub fn cmd_export_prompts(args: &ExportPromptsArgs, stdout: &mut dyn Write) -> Result<()> {
    for (metric, prompt) in crate::chat::prompts(VOCABULARY) {
        match &args.out {
            Some(dir) => write_text(&dir.join(format!("{}.txt", metric.column())), &format!("{prompt}\n"))?,
            None => writeln!(stdout, "# {}\n{prompt}\n", metric.column()).map_err(|e| Error::io("<stdout>", e))?,
        }
    }
    Ok(())
}

pub fn cmd_export_table(args: &ExportTableArgs, stdout: &mut dyn Write) -> Result<()> {
    let text = formats::format_prior_table(&load_table(args.table.as_deref())?);
    match &args.out {
        Some(path) => write_text(path, &text),
        None => write!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn cmd_sample_gt(args: &SampleGtArgs) -> Result<()> {
    let scene = resolve_scene(&args.scene)?;
    let mut set = PoseSet::new(sample_ground_truth(&scene, args.count, args.seed)?, PoseLabel::GroundTruth);
    let label = scene_label(&args.scene);
    for p in &mut set.poses {
        p.scene = Some(label.clone());
    }
    write_pose_set(&args.out, &set)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let table = load_table(args.table.as_deref())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .map_err(|e| Error::io(&args.bind, e))?;
        let addr = listener.local_addr().map_err(|e| Error::io(&args.bind, e))?;
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
        let state = AppState::new(table);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        };
        crate::server::serve(listener, state.clone(), shutdown)
            .await
            .map_err(|e| Error::io(&args.bind, e))?;
        let written = state.flush_snapshots(&args.snapshot_dir)?;
        println!("wrote {} session snapshot(s) to {}", written.len(), args.snapshot_dir.display());
        Ok(())
    })
}

/// Run a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, &mut stdin.lock(), &mut stdout).map(drop),
        Command::Serve(a) => cmd_serve(a),
        Command::Eval(a) => cmd_eval(a, &mut stdout, &mut stderr).map(drop),
        Command::ExportPrompts(a) => cmd_export_prompts(a, &mut stdout),
        Command::ExportTable(a) => cmd_export_table(a, &mut stdout),
        Command::SampleGt(a) => cmd_sample_gt(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
