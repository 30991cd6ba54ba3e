//! The pipeline stages behind each subcommand, on in-memory data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use wristpipe_core::codec::ActionMode;
use wristpipe_core::dataset::{
    build_samples, segment_by_skill, Annotation, DatasetError, Skill, SkillClip, SkillLexicon,
};
use wristpipe_core::egolift::{lift_clip, HandDetection, LiftError, WristTrajectory};
use wristpipe_core::executor::{run_episode, Calibration, EpisodeConfig, ExecutorError, GraspPhase};
use wristpipe_core::grasp::{
    plan_linear_approach, select_grasp, AffordancePoint, GraspCandidate, GraspError, SelectionMode,
};
use wristpipe_core::policy::{PolicyError, RetrievalIndex, RetrievalWeights};
use wristpipe_core::se3::{CameraFrame, EulerZyx, Pose6D};
use wristpipe_core::sim::{
    eval_camera, goal_feature, grasp_proposals, random_scene, render_detections, replay, scripted_demo,
    DetectionNoise, GraspProposals, SimError, SimScene, TaskSpec,
};

use crate::config::{EvalPhase, RunConfig};
use crate::formats::{ByClip, Dataset, TrialRecord};
use crate::seeds::{derive, DEMO_STREAM, DETECTION_STREAM, EVAL_STREAM, GRASP_STREAM};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Grasp(#[from] GraspError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error("clip {0} has detections but no cameras")]
    MissingCameras(String),
    #[error("no trajectories survived extraction")]
    EmptyExtraction,
    #[error("no training samples for any skill")]
    EmptyDataset,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn skill_index(skill: Skill) -> u64 {
    Skill::ALL.iter().position(|s| *s == skill).expect("skill is listed") as u64
}

/// Narration written for synthetic clips; each names exactly one skill in the default lexicon.
pub fn narration(skill: Skill) -> &'static str {
    match skill {
        Skill::SlideOpen => "open the drawer",
        Skill::SlideClose => "close the drawer",
        Skill::HingeOpen => "open the cupboard",
        Skill::HingeClose => "close the cupboard",
        Skill::Pick => "pick up the item",
        Skill::Place => "place the item on the mat",
        Skill::Pour => "pour the cup into the bowl",
        Skill::Stir => "stir the pot",
        Skill::Cut => "slice the carrot",
    }
}

pub fn clip_id(skill: Skill, i: usize) -> String {
    format!("{skill}-{i:03}")
}

/// Synthetic egocentric recordings: scripted demonstrations seen by a head camera.
#[derive(Debug, Clone, Default)]
pub struct SynthOutput {
    pub detections: ByClip<HandDetection>,
    pub cameras: ByClip<CameraFrame>,
    pub features: BTreeMap<String, BTreeMap<u64, Vec<f64>>>,
    pub annotations: Vec<Annotation>,
    /// Ground-truth world wrist path of every clip, one segment per clip.
    pub truth: ByClip<WristTrajectory>,
    /// Initial scene of every clip.
    pub scenes: BTreeMap<String, (SimScene, TaskSpec)>,
}

pub fn synth(skills: &[Skill], demos: usize, noise: DetectionNoise, seed: u64) -> Result<SynthOutput, PipelineError> {
    let jobs: Vec<(Skill, usize)> = skills.iter().flat_map(|s| (0..demos).map(move |i| (*s, i))).collect();
    let clips = jobs
        .par_iter()
        .map(|&(skill, i)| {
            let k = skill_index(skill);
            let (scene, task) = random_scene(skill, derive(seed, DEMO_STREAM, k, i as u64));
            let demo = scripted_demo(&task, &scene)?;
            let states = replay(&scene, &demo);
            let det_seed = derive(seed, DETECTION_STREAM, k, i as u64);
            let rendered = render_detections(&demo.gripper, &demo.cameras, &states, &task, noise, det_seed)?;
            Ok((skill, i, scene, task, demo, rendered))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut out = SynthOutput::default();
    for (skill, i, scene, task, demo, rendered) in clips {
        let id = clip_id(skill, i);
        let last = demo.len() as u64 - 1;
        out.annotations.push(Annotation {
            clip_id: id.clone(),
            text: narration(skill).to_string(),
            start_frame: demo.grasp_frame as u64,
            end_frame: last,
        });
        out.truth.insert(
            id.clone(),
            vec![WristTrajectory {
                clip_id: id.clone(),
                poses: demo.gripper.iter().enumerate().map(|(f, p)| (f as u64, *p)).collect(),
                source_gaps: Vec::new(),
            }],
        );
        out.features.insert(id.clone(), rendered.features.into_iter().enumerate().map(|(f, v)| (f as u64, v)).collect());
        out.detections.insert(id.clone(), rendered.detections);
        out.cameras.insert(id.clone(), rendered.cameras);
        out.scenes.insert(id, (scene, task));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractSummary {
    pub clips: usize,
    pub trajectories: usize,
    pub poses: usize,
    pub interpolated: usize,
    /// Extra trajectories created by splitting at long gaps.
    pub splits: usize,
}

pub fn extract(
    detections: &ByClip<HandDetection>,
    cameras: &ByClip<CameraFrame>,
    min_confidence: f64,
    max_gap: u64,
) -> Result<(ByClip<WristTrajectory>, ExtractSummary), PipelineError> {
    let mut out = ByClip::new();
    let mut summary = ExtractSummary::default();
    for (clip, dets) in detections {
        let cams = cameras.get(clip).ok_or_else(|| PipelineError::MissingCameras(clip.clone()))?;
        let trajs = match lift_clip(clip, dets, cams, min_confidence, max_gap) {
            Ok(t) => t,
            Err(LiftError::EmptyClip) => continue,
            Err(e) => return Err(e.into()),
        };
        summary.clips += 1;
        summary.trajectories += trajs.len();
        summary.splits += trajs.len().saturating_sub(1);
        for t in &trajs {
            summary.poses += t.len();
            summary.interpolated += t.source_gaps.iter().map(|(a, b)| (b - a + 1) as usize).sum::<usize>();
        }
        out.insert(clip.clone(), trajs);
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyExtraction);
    }
    Ok((out, summary))
}

/// Per-skill datasets from annotated trajectories.
///
/// Each annotation naming exactly one skill cuts its clip's trajectories to
/// the annotated frame range; pieces shorter than `n + 1` poses are skipped.
#[allow(clippy::too_many_arguments)]
pub fn build(
    trajectories: &ByClip<WristTrajectory>,
    cameras: &ByClip<CameraFrame>,
    features: &BTreeMap<String, BTreeMap<u64, Vec<f64>>>,
    annotations: &[Annotation],
    lexicon: &SkillLexicon,
    n: usize,
    mode: ActionMode,
    stride: usize,
) -> Result<BTreeMap<Skill, Dataset>, PipelineError> {
    let mut out: BTreeMap<Skill, Dataset> = BTreeMap::new();
    for ann in annotations {
        let Some(seg) = segment_by_skill(std::slice::from_ref(ann), lexicon).pop() else {
            continue;
        };
        let (Some(trajs), Some(cams), Some(feats)) =
            (trajectories.get(&seg.clip_id), cameras.get(&seg.clip_id), features.get(&seg.clip_id))
        else {
            continue;
        };
        for traj in trajs {
            let piece = traj.restrict(seg.start_frame, seg.end_frame);
            if piece.len() < n + 1 {
                continue;
            }
            let clip = SkillClip::new(seg.skill, &ann.text, piece, feats)?;
            let samples = build_samples(&clip, cams, n, mode, stride)?;
            let ds = out.entry(seg.skill).or_insert_with(|| Dataset {
                feature_dim: clip.feature_dim(),
                chunk_size: n,
                mode,
                samples: Vec::new(),
            });
            if ds.feature_dim != clip.feature_dim() {
                return Err(DatasetError::FeatureDimension { expected: ds.feature_dim, got: clip.feature_dim() }.into());
            }
            ds.samples.extend(samples);
        }
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    Ok(out)
}

pub fn fit(ds: &Dataset, weights: RetrievalWeights, pose_scale: f64) -> Result<RetrievalIndex, PipelineError> {
    Ok(RetrievalIndex::fit(ds.samples.clone(), weights, pose_scale)?)
}

/// Everything `evaluate` needs besides the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub trials: usize,
    pub seed: u64,
    pub phase: EvalPhase,
    pub grasp_mode: SelectionMode,
    pub score_threshold: f64,
    pub standoff: f64,
    pub approach_step: f64,
    pub episode: EpisodeConfig,
}

impl EvalSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            trials: cfg.trials,
            seed: cfg.seed,
            phase: cfg.eval_phase,
            grasp_mode: cfg.grasp_mode,
            score_threshold: cfg.score_threshold,
            standoff: cfg.standoff,
            approach_step: cfg.approach_step,
            episode: EpisodeConfig { budget: cfg.budget, chunk_size: cfg.chunk_size, record_states: false },
        }
    }
}

/// A finished trial with the states needed for a rollout log.
#[derive(Debug, Clone)]
pub struct Trial {
    pub record: TrialRecord,
    pub scene: SimScene,
    pub task: TaskSpec,
    pub final_scene: SimScene,
    /// Per-step states when `EpisodeConfig::record_states` is set.
    pub states: Vec<SimScene>,
}

/// Seed of the held-out scene used by trial `trial` of `skill`.
pub fn eval_scene_seed(seed: u64, skill: Skill, trial: usize) -> u64 {
    derive(seed, EVAL_STREAM, skill_index(skill), trial as u64)
}

fn run_trial(index: &RetrievalIndex, skill: Skill, trial: usize, s: &EvalSettings) -> Result<Trial, PipelineError> {
    let scene_seed = eval_scene_seed(s.seed, skill, trial);
    let (scene, task) = random_scene(skill, scene_seed);
    let cam = eval_camera(&scene, &task, scene_seed);
    let calib = Calibration::from_extrinsic(&cam.extrinsic_world_to_cam);
    let goal = goal_feature(&scene, &task, &cam.extrinsic_world_to_cam)?;
    let result = match s.phase {
        EvalPhase::Full => {
            let proposals = grasp_proposals(&scene, &task, &cam, derive(s.seed, GRASP_STREAM, skill_index(skill), trial as u64))?;
            let phase = GraspPhase {
                proposals,
                mode: s.grasp_mode,
                score_threshold: s.score_threshold,
                standoff: s.standoff,
                step: s.approach_step,
            };
            run_episode(index, scene.clone(), &task, &calib, &goal, &s.episode, Some(&phase))?
        }
        EvalPhase::PostGrasp => {
            let demo = scripted_demo(&task, &scene)?;
            let start = replay(&scene, &demo).swap_remove(demo.grasp_frame);
            run_episode(index, start, &task, &calib, &goal, &s.episode, None)?
        }
    };
    Ok(Trial {
        record: TrialRecord {
            skill,
            trial,
            seed: scene_seed,
            success: result.success,
            steps: result.steps,
            inference_calls: result.inference_calls,
            grasp_steps: result.grasp_steps,
            grasped: result.grasped,
        },
        scene,
        task,
        final_scene: result.final_scene,
        states: result.states,
    })
}

/// Run `settings.trials` seeded episodes of `skill` on `threads` worker threads.
/// Results are in trial order and independent of the thread count.
pub fn evaluate(
    index: &RetrievalIndex,
    skill: Skill,
    settings: &EvalSettings,
    threads: usize,
) -> Result<Vec<Trial>, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    pool.install(|| (0..settings.trials).into_par_iter().map(|t| run_trial(index, skill, t, settings)).collect())
}

/// Outcome of one selection mode on a set of proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspOutcome {
    pub mode: SelectionMode,
    pub result: Result<(Pose6D, Vec<Pose6D>), GraspError>,
}

/// Selected grasp and approach path for every selection mode.
pub fn grasp_all_modes(
    affordance: &AffordancePoint,
    candidates: &[GraspCandidate],
    threshold: f64,
    initial: EulerZyx,
    standoff: f64,
    step: f64,
) -> Vec<GraspOutcome> {
    SelectionMode::ALL
        .iter()
        .map(|&mode| GraspOutcome {
            mode,
            result: select_grasp(affordance, candidates, mode, threshold, initial)
                .and_then(|g| Ok((g, plan_linear_approach(&g, standoff, step)?))),
        })
        .collect()
}

/// Grasp inputs for one synthetic scene, as an affordance model and grasp generator would emit them.
pub fn synth_grasp_inputs(skill: Skill, seed: u64) -> Result<(CameraFrame, GraspProposals), PipelineError> {
    let (scene, task) = random_scene(skill, derive(seed, EVAL_STREAM, skill_index(skill), u64::MAX));
    let cam = eval_camera(&scene, &task, seed);
    let p = grasp_proposals(&scene, &task, &cam, derive(seed, GRASP_STREAM, skill_index(skill), u64::MAX))?;
    Ok((cam, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillSummary {
    pub skill: Skill,
    pub trials: usize,
    pub successes: usize,
    pub mean_steps: f64,
    pub mean_inference_calls: f64,
}

impl SkillSummary {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

pub fn summarize(trials: &[TrialRecord]) -> Vec<SkillSummary> {
    let mut by: BTreeMap<Skill, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        by.entry(t.skill).or_default().push(t);
    }
    by.into_iter()
        .map(|(skill, ts)| {
            let n = ts.len() as f64;
            SkillSummary {
                skill,
                trials: ts.len(),
                successes: ts.iter().filter(|t| t.success).count(),
                mean_steps: ts.iter().map(|t| t.steps as f64).sum::<f64>() / n,
                mean_inference_calls: ts.iter().map(|t| t.inference_calls as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn percent(rate: f64) -> String {
    format!("{:.1}%", 100.0 * rate)
}

/// Aligned table for people, followed by `key=value` records for scripts.
pub fn report(trials: &[TrialRecord]) -> String {
    let rows = summarize(trials);
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>6} {:>9} {:>8} {:>10} {:>10}", "skill", "trials", "successes", "rate", "mean_steps", "mean_calls");
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>9} {:>8} {:>10.1} {:>10.1}",
            r.skill.name(),
            r.trials,
            r.successes,
            percent(r.rate()),
            r.mean_steps,
            r.mean_inference_calls
        );
    }
    let total: usize = rows.iter().map(|r| r.trials).sum();
    let ok: usize = rows.iter().map(|r| r.successes).sum();
    let overall = if total == 0 { 0.0 } else { ok as f64 / total as f64 };
    let _ = writeln!(out, "{:<14} {:>6} {:>9} {:>8}", "all", total, ok, percent(overall));
    let _ = writeln!(out, "# success is judged by simulator predicates standing in for the goal image");
    for r in &rows {
        let _ = writeln!(out, "skill={} trials={} successes={} rate={}", r.skill, r.trials, r.successes, r.rate());
    }
    out
}

/// Largest translation and rotation error of extracted poses against ground truth, matched by clip and frame.
pub fn compare_trajectories(
    got: &ByClip<WristTrajectory>,
    truth: &ByClip<WristTrajectory>,
) -> Result<(f64, f64, usize), String> {
    let mut worst = (0.0f64, 0.0f64);
    let mut compared = 0;
    for (clip, trajs) in got {
        let reference: BTreeMap<u64, Pose6D> = truth
            .get(clip)
            .ok_or_else(|| format!("clip {clip} missing from ground truth"))?
            .iter()
            .flat_map(|t| t.poses.iter().copied())
            .collect();
        for t in trajs {
            for (f, p) in &t.poses {
                let r = reference.get(f).ok_or_else(|| format!("clip {clip} frame {f} missing from ground truth"))?;
                let (dt, dr) = p.error_to(r);
                worst = (worst.0.max(dt), worst.1.max(dr));
                compared += 1;
            }
        }
    }
    Ok((worst.0, worst.1, compared))
}

/// Per-coordinate translation RMSE (meters) of extracted poses against ground truth,
/// over frames backed by a detection.
pub fn translation_rmse(got: &ByClip<WristTrajectory>, truth: &ByClip<WristTrajectory>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (clip, trajs) in got {
        let Some(reference) = truth.get(clip) else { continue };
        let reference: BTreeMap<u64, Pose6D> = reference.iter().flat_map(|t| t.poses.iter().copied()).collect();
        for t in trajs {
            for (f, p) in &t.poses {
                if t.is_interpolated(*f) {
                    continue;
                }
                if let Some(r) = reference.get(f) {
                    sum += (p.translation() - r.translation()).norm_squared();
                    count += 3;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}
