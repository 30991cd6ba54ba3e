//! Command-line driver.
//!
//! Exit codes: 0 success, 1 invalid arguments or a failed pipeline stage,
//! 2 malformed input file, 3 a stage produced nothing, 4 verification failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wristpipe_core::dataset::{Skill, SkillLexicon};
use wristpipe_core::grasp::AffordancePoint;
use wristpipe_core::policy::RetrievalIndex;
use wristpipe_core::se3::{EulerZyx, Intrinsics};
use wristpipe_core::sim::{eval_camera, goal_feature, grasp_proposals, EVAL_INTRINSICS};
use wristpipe_core::executor::{run_episode, Calibration, GraspPhase};

use crate::config::RunConfig;
use crate::formats::{self, load, Dataset, IndexConfig};
use crate::pipeline::{self, EvalSettings, PipelineError};
use crate::records::{write_atomic, FormatError, Record};
use crate::scene_io::{parse_scene, write_rollout_log, write_scene};

pub const DETECTIONS_FILE: &str = "detections.txt";
pub const CAMERAS_FILE: &str = "cameras.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const ANNOTATIONS_FILE: &str = "annotations.txt";
pub const TRUTH_FILE: &str = "truth.txt";
pub const TRAJECTORIES_FILE: &str = "trajectories.txt";
pub const TRIALS_FILE: &str = "trials.txt";

#[derive(Debug, Parser)]
#[command(name = "wristpipe", version, about = "Distil manipulation skills from egocentric hand tracks and replay them in a kitchen simulator")]
pub struct Cli {
    /// Run seed; every random draw derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` run configuration, applied before command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Extra `key=value` override; repeatable, applied after `--config`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render scripted demonstrations into detection, camera, feature and annotation files.
    Synth(SynthArgs),
    /// Lift hand detections into world-frame wrist trajectories.
    Extract(ExtractArgs),
    /// Cut annotated trajectories into per-skill training datasets.
    Build(BuildArgs),
    /// Fit retrieval indices over datasets.
    Fit(FitArgs),
    /// Run seeded simulator trials with fitted indices.
    Eval(EvalArgs),
    /// Run one episode on a scene file and log every step.
    Rollout(RolloutArgs),
    /// Select grasps from candidates and an affordance point with every selection mode.
    Grasp(GraspArgs),
    /// Summarise trial files.
    Report(ReportArgs),
    /// Compare trajectories against ground truth.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Comma-separated skills, or `all`.
    #[arg(long, default_value = "all")]
    pub skills: String,
    #[arg(long)]
    pub demos: Option<String>,
    /// Also write the initial scene of every clip under `scenes/`.
    #[arg(long)]
    pub scenes: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub min_confidence: Option<String>,
    #[arg(long)]
    pub max_gap: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub trajectories: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub chunk_size: Option<String>,
    /// Action representation, e.g. `relT+relO`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub stride: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset files; the skill is read from the file stem unless `--skill` is given.
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long)]
    pub skill: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required = true)]
    pub index: Vec<PathBuf>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub budget: Option<String>,
    /// `full` or `post_grasp`.
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub grasp_mode: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write every trial's initial scene and per-step log into this directory.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    /// Log file name inside the output directory.
    #[arg(long, default_value = "rollout.log")]
    pub log: String,
}

#[derive(Debug, Args)]
pub struct GraspArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub affordance: PathBuf,
    /// Depth map; when given the affordance depth is re-read from it.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// `fx,fy,cx,cy`.
    #[arg(long)]
    pub intrinsics: Option<String>,
    /// Current gripper orientation in the camera frame, `alpha,beta,gamma`.
    #[arg(long)]
    pub orientation: Option<String>,
    #[arg(long)]
    pub score_threshold: Option<String>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "grasp.txt")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required = true)]
    pub trials: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub trajectories: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Largest allowed translation (m) and rotation (rad) error.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Format(FormatError),
    Empty(String),
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Format(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Verify(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Empty(m) | CliError::Verify(m) => f.write_str(m),
            CliError::Format(e) => write!(f, "{e}"),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => CliError::Invalid(e.to_string()),
            e => CliError::Format(e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::EmptyExtraction | PipelineError::EmptyDataset => CliError::Empty(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Defaults, then the config file, then `--set`, then `--seed` and per-command flags.
fn resolve_config(cli: &Cli, flags: &[(&str, &Option<String>)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| invalid(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(invalid)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v).map_err(invalid)?;
        }
    }
    Ok(cfg)
}

fn parse_skills(s: &str) -> Result<Vec<Skill>, CliError> {
    if s == "all" {
        return Ok(Skill::ALL.to_vec());
    }
    if s == "articulation" {
        return Ok(Skill::ARTICULATION.to_vec());
    }
    s.split(',').map(|k| k.trim().parse::<Skill>().map_err(invalid)).collect()
}

fn floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("bad {what} {s:?}")))?;
    v.try_into().map_err(|_| invalid(format!("{what} needs {N} comma-separated numbers")))
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    write_atomic(&p, text)?;
    Ok(p)
}

/// Fitted index plus the dataset parameters it was built with.
pub fn load_index(path: &Path) -> Result<(IndexConfig, Dataset, RetrievalIndex), CliError> {
    let cfg = load(path, formats::parse_index)?;
    let ds_path = if cfg.dataset.is_absolute() {
        cfg.dataset.clone()
    } else {
        path.parent().unwrap_or(Path::new(".")).join(&cfg.dataset)
    };
    let ds = load(&ds_path, formats::parse_dataset)?;
    let index = pipeline::fit(&ds, cfg.weights, cfg.pose_scale)?;
    Ok((cfg, ds, index))
}

/// Run with parsed arguments, writing human output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let dir = &cli.out_dir;
    let mut msg = String::new();
    match &cli.command {
        Command::Synth(a) => {
            let cfg = resolve_config(cli, &[("demos", &a.demos)])?;
            let skills = parse_skills(&a.skills)?;
            let s = pipeline::synth(&skills, cfg.demos, cfg.noise, cfg.seed)?;
            write_out(dir, DETECTIONS_FILE, &formats::write_detections(&s.detections))?;
            write_out(dir, CAMERAS_FILE, &formats::write_cameras(&s.cameras))?;
            write_out(dir, FEATURES_FILE, &formats::write_features(&s.features))?;
            write_out(dir, ANNOTATIONS_FILE, &formats::write_annotations(&s.annotations))?;
            write_out(dir, TRUTH_FILE, &formats::write_trajectories(&s.truth))?;
            if a.scenes {
                for (id, (scene, task)) in &s.scenes {
                    write_out(&dir.join("scenes"), &format!("{id}.scene"), &write_scene(scene, task))?;
                }
            }
            for &skill in &skills {
                let (_, p) = pipeline::synth_grasp_inputs(skill, cfg.seed)?;
                let gdir = dir.join("grasp").join(skill.name());
                write_out(&gdir, "candidates.txt", &formats::write_candidates(&p.candidates))?;
                write_out(&gdir, "affordance.txt", &formats::write_affordance(&p.affordance))?;
                write_out(&gdir, "depth.txt", &formats::write_depth_map(&p.depth))?;
            }
            let frames: usize = s.detections.values().map(Vec::len).sum();
            let _ = writeln!(msg, "synthesised {} clips ({} detections) into {}", s.detections.len(), frames, dir.display());
        }
        Command::Extract(a) => {
            let cfg = resolve_config(cli, &[("min_confidence", &a.min_confidence), ("max_gap", &a.max_gap)])?;
            let dets = load(&a.detections, formats::parse_detections)?;
            let cams = load(&a.cameras, formats::parse_cameras)?;
            let (trajs, sum) = pipeline::extract(&dets, &cams, cfg.min_confidence, cfg.max_gap)?;
            let p = write_out(dir, TRAJECTORIES_FILE, &formats::write_trajectories(&trajs))?;
            let _ = writeln!(
                msg,
                "clips={} trajectories={} poses={} interpolated={} splits={} -> {}",
                sum.clips,
                sum.trajectories,
                sum.poses,
                sum.interpolated,
                sum.splits,
                p.display()
            );
        }
        Command::Build(a) => {
            let cfg = resolve_config(cli, &[("chunk_size", &a.chunk_size), ("mode", &a.mode), ("stride", &a.stride)])?;
            let trajs = load(&a.trajectories, formats::parse_trajectories)?;
            let cams = load(&a.cameras, formats::parse_cameras)?;
            let feats = load(&a.features, formats::parse_features)?;
            let anns = load(&a.annotations, formats::parse_annotations)?;
            let sets = pipeline::build(&trajs, &cams, &feats, &anns, &SkillLexicon::default(), cfg.chunk_size, cfg.mode, cfg.stride)?;
            for (skill, ds) in &sets {
                let p = write_out(dir, &format!("{skill}.dataset"), &formats::write_dataset(ds))?;
                let _ = writeln!(msg, "{skill}: {} samples -> {}", ds.samples.len(), p.display());
            }
        }
        Command::Fit(a) => {
            let cfg = resolve_config(cli, &[])?;
            if a.skill.is_some() && a.dataset.len() > 1 {
                return Err(invalid("--skill applies to a single --dataset"));
            }
            std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
            let out_abs = std::fs::canonicalize(dir).map_err(invalid)?;
            for path in &a.dataset {
                let name = match &a.skill {
                    Some(s) => s.clone(),
                    None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                };
                let skill: Skill = name
                    .parse()
                    .map_err(|_| invalid(format!("cannot tell the skill of {}; pass --skill", path.display())))?;
                let ds = load(path, formats::parse_dataset)?;
                let index = pipeline::fit(&ds, cfg.weights, cfg.pose_scale)?;
                let ds_abs = std::fs::canonicalize(path).map_err(invalid)?;
                let dataset = match ds_abs.parent() {
                    Some(p) if p == out_abs => PathBuf::from(ds_abs.file_name().expect("canonical file path")),
                    _ => ds_abs,
                };
                let ic = IndexConfig { skill, dataset, weights: cfg.weights, pose_scale: cfg.pose_scale };
                let p = write_out(dir, &format!("{skill}.index"), &formats::write_index(&ic))?;
                let _ = writeln!(msg, "{skill}: {} entries -> {}", index.len(), p.display());
            }
        }
        Command::Eval(a) => {
            let cfg = resolve_config(
                cli,
                &[("trials", &a.trials), ("budget", &a.budget), ("eval_phase", &a.phase), ("grasp_mode", &a.grasp_mode)],
            )?;
            let threads = a.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if threads == 0 {
                return Err(invalid("--threads must be at least 1"));
            }
            let mut records = Vec::new();
            for path in &a.index {
                let (ic, ds, index) = load_index(path)?;
                let mut settings = EvalSettings::from_config(&cfg);
                settings.episode.chunk_size = ds.chunk_size;
                settings.episode.record_states = a.export.is_some();
                let trials = pipeline::evaluate(&index, ic.skill, &settings, threads)?;
                if let Some(ex) = &a.export {
                    for t in &trials {
                        let stem = format!("{}-{:03}", ic.skill, t.record.trial);
                        write_out(ex, &format!("{stem}.scene"), &write_scene(&t.scene, &t.task))?;
                        write_out(ex, &format!("{stem}.log"), &write_rollout_log(&t.states, &t.task))?;
                    }
                }
                records.extend(trials.into_iter().map(|t| t.record));
            }
            write_out(dir, TRIALS_FILE, &formats::write_trials(&records))?;
            msg.push_str(&pipeline::report(&records));
        }
        Command::Rollout(a) => {
            let cfg = resolve_config(cli, &[])?;
            let (scene, task) = load(&a.scene, parse_scene)?;
            let (ic, ds, index) = load_index(&a.index)?;
            if ic.skill != task.skill {
                return Err(invalid(format!("index is for {} but the scene's task is {}", ic.skill, task.skill)));
            }
            let cam = eval_camera(&scene, &task, scene.rng_seed);
            let calib = Calibration::from_extrinsic(&cam.extrinsic_world_to_cam);
            let goal = goal_feature(&scene, &task, &cam.extrinsic_world_to_cam).map_err(invalid)?;
            let proposals = grasp_proposals(&scene, &task, &cam, cfg.seed).map_err(invalid)?;
            let phase = GraspPhase {
                proposals,
                mode: cfg.grasp_mode,
                score_threshold: cfg.score_threshold,
                standoff: cfg.standoff,
                step: cfg.approach_step,
            };
            let mut settings = EvalSettings::from_config(&cfg).episode;
            settings.chunk_size = ds.chunk_size;
            settings.record_states = true;
            let r = run_episode(&index, scene, &task, &calib, &goal, &settings, Some(&phase)).map_err(invalid)?;
            let p = write_out(dir, &a.log, &write_rollout_log(&r.states, &task))?;
            let _ = writeln!(
                msg,
                "success={} steps={} inference_calls={} grasp_steps={} -> {}",
                r.success,
                r.steps,
                r.inference_calls,
                r.grasp_steps,
                p.display()
            );
        }
        Command::Grasp(a) => {
            let cfg = resolve_config(cli, &[("score_threshold", &a.score_threshold)])?;
            let k = match &a.intrinsics {
                Some(s) => {
                    let [fx, fy, cx, cy] = floats::<4>(s, "intrinsics")?;
                    Intrinsics::new(fx, fy, cx, cy).map_err(invalid)?
                }
                None => EVAL_INTRINSICS,
            };
            let initial = match &a.orientation {
                Some(s) => {
                    let [alpha, beta, gamma] = floats::<3>(s, "orientation")?;
                    EulerZyx { alpha, beta, gamma }
                }
                None => EulerZyx { alpha: 0.0, beta: 0.0, gamma: 0.0 },
            };
            let cands = load(&a.candidates, formats::parse_candidates)?;
            let mut aff = load(&a.affordance, |p, t| formats::parse_affordance(p, t, &k))?;
            if let Some(dp) = &a.depth {
                let depth = load(dp, formats::parse_depth_map)?;
                aff = AffordancePoint::from_depth_map(aff.pixel, &depth, &k, &aff.task_text).map_err(invalid)?;
            }
            let outcomes = pipeline::grasp_all_modes(&aff, &cands, cfg.score_threshold, initial, cfg.standoff, cfg.approach_step);
            let text = write_grasp_plans(&outcomes);
            write_out(dir, &a.out, &text)?;
            msg.push_str(&text);
        }
        Command::Report(a) => {
            resolve_config(cli, &[])?;
            let mut records = Vec::new();
            for p in &a.trials {
                records.extend(load(p, formats::parse_trials)?);
            }
            if records.is_empty() {
                return Err(CliError::Empty("no trials to report".into()));
            }
            msg.push_str(&pipeline::report(&records));
        }
        Command::Verify(a) => {
            resolve_config(cli, &[])?;
            let got = load(&a.trajectories, formats::parse_trajectories)?;
            let truth = load(&a.truth, formats::parse_trajectories)?;
            let (dt, dr, n) = pipeline::compare_trajectories(&got, &truth).map_err(CliError::Verify)?;
            let rmse = pipeline::translation_rmse(&got, &truth);
            let _ = writeln!(msg, "poses={n} max_translation_error={dt:e} max_rotation_error={dr:e} rmse={rmse:e}");
            out.write_all(msg.as_bytes()).map_err(invalid)?;
            if n == 0 {
                return Err(CliError::Empty("no poses to compare".into()));
            }
            if dt > a.tolerance || dr > a.tolerance {
                return Err(CliError::Verify(format!("error exceeds tolerance {:e}", a.tolerance)));
            }
            return Ok(());
        }
    }
    out.write_all(msg.as_bytes()).map_err(invalid)
}

/// `mode=<m> grasp <pose>` then `mode=<m> approach <k> <pose>` per waypoint, or `mode=<m> error <message>`.
pub fn write_grasp_plans(outcomes: &[pipeline::GraspOutcome]) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for o in outcomes {
        match &o.result {
            Ok((g, path)) => {
                r.keyed("mode", o.mode).push("grasp").floats(&g.to_array()).line(&mut out);
                for (i, w) in path.iter().enumerate() {
                    r.keyed("mode", o.mode).push("approach").push(i).floats(&w.to_array()).line(&mut out);
                }
            }
            Err(e) => r.keyed("mode", o.mode).push("error").push(e).line(&mut out),
        }
    }
    out
}

/// Selected grasp per mode from a file written by [`write_grasp_plans`].
pub fn parse_grasp_selections(text: &str) -> BTreeMap<String, [f64; 6]> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let mut w = line.split_whitespace();
        if let (Some(m), Some("grasp")) = (w.next().and_then(|m| m.strip_prefix("mode=")), w.next()) {
            let v: Vec<f64> = w.filter_map(|x| x.parse().ok()).collect();
            if let Ok(a) = v.try_into() {
                out.insert(m.to_string(), a);
            }
        }
    }
    out
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = stdout.flush();
            eprintln!("wristpipe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
