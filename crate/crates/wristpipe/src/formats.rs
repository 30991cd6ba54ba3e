//! Readers and writers for the pipeline's plain-text files.
//!
//! | file         | record                                                                 |
//! |--------------|------------------------------------------------------------------------|
//! | detections   | `clip_id frame_id x y z alpha beta gamma confidence`                   |
//! | cameras      | `clip_id frame_id fx fy cx cy qw qx qy qz tx ty tz` (world to camera)  |
//! | trajectories | `clip_id segment frame_id x y z alpha beta gamma interpolated`         |
//! | features     | `clip_id frame_id f_1 .. f_d`                                          |
//! | annotations  | `clip_id start_frame end_frame free text...`                           |
//! | dataset      | header, then `clip_id frame_id base[6] obs[d] goal[d] actions[6n]`     |
//! | index        | header, then `key=value` lines                                         |
//! | candidates   | `x y z alpha beta gamma score width` (camera frame)                    |
//! | affordance   | `u v depth free text...`                                               |
//! | depth map    | `width height`, then one row of `width` floats per line               |
//! | trials       | `skill=.. trial=.. seed=.. success=.. steps=.. inference_calls=.. ...` |
//!
//! Poses are `(x, y, z)` plus intrinsic Z-Y-X Euler angles in radians.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use wristpipe_core::codec::{ActionChunk, ActionMode, Encoding};
use wristpipe_core::dataset::{Annotation, Skill, TrainingSample};
use wristpipe_core::egolift::{HandDetection, WristTrajectory};
use wristpipe_core::grasp::{AffordancePoint, DepthMap, GraspCandidate};
use wristpipe_core::math::Vec3;
use wristpipe_core::policy::RetrievalWeights;
use wristpipe_core::se3::{lift_pixel, CameraFrame, Intrinsics, Pose6D, RigidTransform};

use crate::records::{lines, read_text, FormatError, Line, Record};

pub const DATASET_VERSION: u32 = 1;
pub const INDEX_VERSION: u32 = 1;
const DATASET_MAGIC: &str = "wristpipe-dataset";
const INDEX_MAGIC: &str = "wristpipe-index";

pub type ByClip<T> = BTreeMap<String, Vec<T>>;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn pose(line: &mut Line<'_>) -> Result<Pose6D, FormatError> {
    let a: [f64; 6] = line.floats("pose")?;
    let p = Pose6D::from_array(a);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(line.error("non-finite pose"))
    }
}

// ---- detections ----

pub fn write_detections(dets: &ByClip<HandDetection>) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for (clip, list) in dets {
        for d in list {
            r.push(clip).push(d.frame_id).floats(&d.wrist_pose_cam.to_array()).push(d.confidence).line(&mut out);
        }
    }
    out
}

pub fn parse_detections(path: &str, text: &str) -> Result<ByClip<HandDetection>, FormatError> {
    let mut out: ByClip<HandDetection> = BTreeMap::new();
    for mut line in lines(path, text) {
        let clip = line.word("clip_id")?.to_string();
        let frame_id = line.parse("frame_id")?;
        let wrist_pose_cam = pose(&mut line)?;
        let confidence: f64 = line.parse("confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(line.error(format_args!("confidence {confidence} outside [0, 1]")));
        }
        line.finish()?;
        out.entry(clip).or_default().push(HandDetection { frame_id, wrist_pose_cam, confidence });
    }
    Ok(out)
}

// ---- cameras ----

pub fn write_cameras(cams: &ByClip<CameraFrame>) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for (clip, list) in cams {
        for c in list {
            let k = c.intrinsics;
            let e = c.extrinsic_world_to_cam;
            r.push(clip)
                .push(c.frame_id)
                .floats(&[k.fx, k.fy, k.cx, k.cy])
                .floats(&e.quaternion())
                .floats(&e.translation().to_array())
                .line(&mut out);
        }
    }
    out
}

pub fn parse_cameras(path: &str, text: &str) -> Result<ByClip<CameraFrame>, FormatError> {
    let mut out: ByClip<CameraFrame> = BTreeMap::new();
    for mut line in lines(path, text) {
        let clip = line.word("clip_id")?.to_string();
        let frame_id = line.parse("frame_id")?;
        let [fx, fy, cx, cy] = line.floats("intrinsics")?;
        let q: [f64; 4] = line.floats("quaternion")?;
        let t: [f64; 3] = line.floats("translation")?;
        line.finish_ref()?;
        let intrinsics = Intrinsics::new(fx, fy, cx, cy).map_err(|e| line.error(e))?;
        let ext = RigidTransform::from_quaternion(q, Vec3::from_array(t)).map_err(|e| line.error(e))?;
        out.entry(clip).or_default().push(CameraFrame::new(frame_id, intrinsics, ext));
    }
    Ok(out)
}

// ---- trajectories ----

pub fn write_trajectories(trajs: &ByClip<WristTrajectory>) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for (clip, segments) in trajs {
        for (s, t) in segments.iter().enumerate() {
            for (f, p) in &t.poses {
                r.push(clip).push(s).push(f).floats(&p.to_array()).push(u8::from(t.is_interpolated(*f))).line(&mut out);
            }
        }
    }
    out
}

pub fn parse_trajectories(path: &str, text: &str) -> Result<ByClip<WristTrajectory>, FormatError> {
    let mut out: ByClip<WristTrajectory> = BTreeMap::new();
    for mut line in lines(path, text) {
        let clip = line.word("clip_id")?.to_string();
        let segment: usize = line.parse("segment")?;
        let frame: u64 = line.parse("frame_id")?;
        let p = pose(&mut line)?;
        let interp: u8 = line.parse("interpolated")?;
        line.finish_ref()?;
        let segs = out.entry(clip.clone()).or_default();
        if segment == segs.len() {
            segs.push(WristTrajectory { clip_id: clip, poses: Vec::new(), source_gaps: Vec::new() });
        } else if segment + 1 != segs.len() {
            return Err(line.error(format_args!("segment {segment} out of order")));
        }
        let t = segs.last_mut().expect("segment exists");
        if t.poses.last().is_some_and(|(f, _)| *f >= frame) {
            return Err(line.error(format_args!("frame {frame} not increasing")));
        }
        match interp {
            0 => {}
            1 => match t.source_gaps.last_mut() {
                Some(g) if t.poses.last().map(|(f, _)| *f) == Some(g.1) => g.1 = frame,
                _ => t.source_gaps.push((frame, frame)),
            },
            _ => return Err(line.error("interpolated flag must be 0 or 1")),
        }
        t.poses.push((frame, p));
    }
    Ok(out)
}

// ---- features ----

pub fn write_features(features: &BTreeMap<String, BTreeMap<u64, Vec<f64>>>) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for (clip, frames) in features {
        for (f, v) in frames {
            r.push(clip).push(f).floats(v).line(&mut out);
        }
    }
    out
}

pub fn parse_features(path: &str, text: &str) -> Result<BTreeMap<String, BTreeMap<u64, Vec<f64>>>, FormatError> {
    let mut out: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for mut line in lines(path, text) {
        let clip = line.word("clip_id")?.to_string();
        let frame: u64 = line.parse("frame_id")?;
        let v: Result<Vec<f64>, _> = line.rest().split_whitespace().map(str::parse).collect();
        let v = v.map_err(|_| line.error("bad feature value"))?;
        out.entry(clip).or_default().insert(frame, v);
    }
    Ok(out)
}

// ---- annotations ----

pub fn write_annotations(anns: &[Annotation]) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for a in anns {
        r.push(&a.clip_id).push(a.start_frame).push(a.end_frame).push(&a.text).line(&mut out);
    }
    out
}

pub fn parse_annotations(path: &str, text: &str) -> Result<Vec<Annotation>, FormatError> {
    lines(path, text)
        .map(|mut line| {
            let clip_id = line.word("clip_id")?.to_string();
            let start_frame: u64 = line.parse("start_frame")?;
            let end_frame: u64 = line.parse("end_frame")?;
            if end_frame < start_frame {
                return Err(line.error("end_frame before start_frame"));
            }
            let text = line.rest();
            if text.is_empty() {
                return Err(line.error("missing text"));
            }
            Ok(Annotation { clip_id, text, start_frame, end_frame })
        })
        .collect()
}

// ---- dataset ----

/// Training samples sharing one feature dimension, chunk size and action mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_dim: usize,
    pub chunk_size: usize,
    pub mode: ActionMode,
    pub samples: Vec<TrainingSample>,
}

pub fn write_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    r.push(DATASET_MAGIC)
        .push(DATASET_VERSION)
        .keyed("d", ds.feature_dim)
        .keyed("n", ds.chunk_size)
        .keyed("translation", ds.mode.translation.as_str())
        .keyed("orientation", ds.mode.orientation.as_str())
        .line(&mut out);
    for s in &ds.samples {
        r.push(&s.clip_id).push(s.frame_id).floats(&s.current_pose.to_array()).floats(&s.obs_feature).floats(&s.goal_feature);
        for a in &s.chunk.actions {
            r.floats(a);
        }
        r.line(&mut out);
    }
    out
}

pub fn parse_dataset(path: &str, text: &str) -> Result<Dataset, FormatError> {
    let mut it = lines(path, text);
    let mut header = it.next().ok_or_else(|| FormatError::Parse {
        path: path.into(),
        line: 1,
        message: "missing dataset header".into(),
    })?;
    if header.word("magic")? != DATASET_MAGIC {
        return Err(header.error("not a dataset file"));
    }
    let version: u32 = header.parse("version")?;
    if version != DATASET_VERSION {
        return Err(FormatError::FormatVersionMismatch { path: path.into(), what: "dataset", found: version, expected: DATASET_VERSION });
    }
    let d: usize = header.keyed("d")?;
    let n: usize = header.keyed("n")?;
    let translation: String = header.keyed("translation")?;
    let orientation: String = header.keyed("orientation")?;
    let enc = |s: &str, h: &Line<'_>| s.parse::<Encoding>().map_err(|e| h.error(e));
    let mode = ActionMode::new(enc(&translation, &header)?, enc(&orientation, &header)?);
    header.finish()?;
    let samples = it
        .map(|mut line| {
            let clip_id = line.word("clip_id")?.to_string();
            let frame_id = line.parse("frame_id")?;
            let base = pose(&mut line)?;
            let obs_feature = line.float_vec(d, "observation feature")?;
            let goal_feature = line.float_vec(d, "goal feature")?;
            let actions = (0..n).map(|_| line.floats::<6>("action")).collect::<Result<Vec<_>, _>>()?;
            line.finish_ref()?;
            Ok(TrainingSample {
                clip_id,
                frame_id,
                obs_feature,
                goal_feature,
                current_pose: base,
                chunk: ActionChunk { mode, base_pose: base, actions },
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(Dataset { feature_dim: d, chunk_size: n, mode, samples })
}

// ---- index ----

/// A fitted retrieval index: its dataset file plus scoring parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub skill: Skill,
    /// Relative paths resolve against the index file's directory.
    pub dataset: PathBuf,
    pub weights: RetrievalWeights,
    pub pose_scale: f64,
}

pub fn write_index(cfg: &IndexConfig) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    r.push(INDEX_MAGIC).push(INDEX_VERSION).line(&mut out);
    r.keyed("skill", cfg.skill).line(&mut out);
    r.keyed("dataset", cfg.dataset.display()).line(&mut out);
    r.keyed("weight_obs", cfg.weights.obs).line(&mut out);
    r.keyed("weight_goal", cfg.weights.goal).line(&mut out);
    r.keyed("weight_pose", cfg.weights.pose).line(&mut out);
    r.keyed("pose_scale", cfg.pose_scale).line(&mut out);
    out
}

pub fn parse_index(path: &str, text: &str) -> Result<IndexConfig, FormatError> {
    let mut it = lines(path, text);
    let mut header = it.next().ok_or_else(|| FormatError::Parse {
        path: path.into(),
        line: 1,
        message: "missing index header".into(),
    })?;
    if header.word("magic")? != INDEX_MAGIC {
        return Err(header.error("not an index file"));
    }
    let version: u32 = header.parse("version")?;
    if version != INDEX_VERSION {
        return Err(FormatError::FormatVersionMismatch { path: path.into(), what: "index", found: version, expected: INDEX_VERSION });
    }
    let mut skill: Result<Skill, FormatError> = Err(header.error("missing skill"));
    let mut cfg = IndexConfig {
        skill: Skill::SlideOpen,
        dataset: PathBuf::new(),
        weights: RetrievalWeights::default(),
        pose_scale: wristpipe_core::policy::DEFAULT_POSE_SCALE,
    };
    for line in it {
        let (key, value) = line.text.split_once('=').ok_or_else(|| line.error("expected key=value"))?;
        let num = || value.parse::<f64>().map_err(|_| line.error(format_args!("bad {key} {value:?}")));
        match key {
            "skill" => skill = value.parse().map_err(|e| line.error(e)),
            "dataset" => cfg.dataset = PathBuf::from(value),
            "weight_obs" => cfg.weights.obs = num()?,
            "weight_goal" => cfg.weights.goal = num()?,
            "weight_pose" => cfg.weights.pose = num()?,
            "pose_scale" => cfg.pose_scale = num()?,
            other => return Err(line.error(format_args!("unknown key {other:?}"))),
        }
    }
    cfg.skill = skill?;
    Ok(cfg)
}

// ---- grasp inputs ----

pub fn write_candidates(cands: &[GraspCandidate]) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for c in cands {
        r.floats(&c.pose_cam.to_array()).push(c.score).push(c.width).line(&mut out);
    }
    out
}

pub fn parse_candidates(path: &str, text: &str) -> Result<Vec<GraspCandidate>, FormatError> {
    lines(path, text)
        .map(|mut line| {
            let pose_cam = pose(&mut line)?;
            let score = line.parse("score")?;
            let width = line.parse("width")?;
            line.finish_ref()?;
            Ok(GraspCandidate { pose_cam, score, width })
        })
        .collect()
}

pub fn write_affordance(a: &AffordancePoint) -> String {
    let mut out = String::new();
    Record::new().push(a.pixel.0).push(a.pixel.1).push(a.depth).push(&a.task_text).line(&mut out);
    out
}

pub fn parse_affordance(path: &str, text: &str, k: &Intrinsics) -> Result<AffordancePoint, FormatError> {
    let mut it = lines(path, text);
    let mut line = it.next().ok_or_else(|| FormatError::Parse { path: path.into(), line: 1, message: "empty affordance file".into() })?;
    let u: f64 = line.parse("u")?;
    let v: f64 = line.parse("v")?;
    let depth: f64 = line.parse("depth")?;
    let task_text = line.rest();
    let point3d_cam = lift_pixel((u, v), depth, k).map_err(|e| line.error(e))?;
    if let Some(extra) = it.next() {
        return Err(extra.error("affordance file holds a single record"));
    }
    Ok(AffordancePoint { pixel: (u, v), depth, point3d_cam, task_text })
}

pub fn write_depth_map(d: &DepthMap) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    r.push(d.width()).push(d.height()).line(&mut out);
    for row in d.data().chunks(d.width()) {
        r.floats(row).line(&mut out);
    }
    out
}

pub fn parse_depth_map(path: &str, text: &str) -> Result<DepthMap, FormatError> {
    let mut it = lines(path, text);
    let mut header = it.next().ok_or_else(|| FormatError::Parse { path: path.into(), line: 1, message: "empty depth map".into() })?;
    let width: usize = header.parse("width")?;
    let height: usize = header.parse("height")?;
    header.finish()?;
    let mut data = Vec::with_capacity(width * height);
    let mut rows = 0;
    for mut line in it {
        data.extend(line.float_vec(width, "depth")?);
        line.finish_ref()?;
        rows += 1;
    }
    if rows != height {
        return Err(FormatError::Parse { path: path.into(), line: 1, message: format!("header says {height} rows, found {rows}") });
    }
    DepthMap::new(width, height, data).map_err(|e| FormatError::Parse { path: path.into(), line: 1, message: e.to_string() })
}

// ---- trials ----

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub skill: Skill,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub inference_calls: usize,
    pub grasp_steps: usize,
    pub grasped: bool,
}

pub fn write_trials(trials: &[TrialRecord]) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for t in trials {
        r.keyed("skill", t.skill)
            .keyed("trial", t.trial)
            .keyed("seed", t.seed)
            .keyed("success", u8::from(t.success))
            .keyed("steps", t.steps)
            .keyed("inference_calls", t.inference_calls)
            .keyed("grasp_steps", t.grasp_steps)
            .keyed("grasped", u8::from(t.grasped))
            .line(&mut out);
    }
    out
}

pub fn parse_trials(path: &str, text: &str) -> Result<Vec<TrialRecord>, FormatError> {
    let flag = |line: &mut Line<'_>, key: &str| -> Result<bool, FormatError> {
        match line.keyed::<u8>(key)? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(line.error(format_args!("{key} must be 0 or 1"))),
        }
    };
    lines(path, text)
        .map(|mut line| {
            let skill: String = line.keyed("skill")?;
            let skill = skill.parse().map_err(|e| line.error(e))?;
            let rec = TrialRecord {
                skill,
                trial: line.keyed("trial")?,
                seed: line.keyed("seed")?,
                success: flag(&mut line, "success")?,
                steps: line.keyed("steps")?,
                inference_calls: line.keyed("inference_calls")?,
                grasp_steps: line.keyed("grasp_steps")?,
                grasped: flag(&mut line, "grasped")?,
            };
            line.finish_ref()?;
            Ok(rec)
        })
        .collect()
}

/// Read a file and parse it with `parse`, which receives the path for messages.
pub fn load<T>(path: &Path, parse: impl FnOnce(&str, &str) -> Result<T, FormatError>) -> Result<T, FormatError> {
    let text = read_text(path)?;
    parse(&path_str(path), &text)
}
