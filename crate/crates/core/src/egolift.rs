//! Lifting camera-frame wrist detections into world-frame trajectories.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::se3::{CameraFrame, Pose6D};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;
pub const DEFAULT_MAX_GAP: u64 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LiftError {
    #[error("detection frame {detection} does not match camera frame {camera}")]
    FrameMismatch { detection: u64, camera: u64 },
    #[error("no camera for frame {0}")]
    MissingCamera(u64),
    #[error("no detection survives filtering")]
    EmptyClip,
    #[error("duplicate detection for frame {0}")]
    DuplicateDetection(u64),
    #[error("window [{start}, {start}+{len}] is outside a trajectory of {available} poses")]
    WindowOutOfRange { start: usize, len: usize, available: usize },
}

/// Wrist pose reported by the hand tracker for one frame, in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandDetection {
    pub frame_id: u64,
    pub wrist_pose_cam: Pose6D,
    pub confidence: f64,
}

/// World-frame wrist poses for a contiguous run of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WristTrajectory {
    pub clip_id: String,
    /// Strictly increasing frame ids.
    pub poses: Vec<(u64, Pose6D)>,
    /// Inclusive frame-id ranges filled by interpolation.
    pub source_gaps: Vec<(u64, u64)>,
}

impl WristTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.poses.first().map(|p| p.0)
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.poses.last().map(|p| p.0)
    }

    pub fn is_interpolated(&self, frame_id: u64) -> bool {
        self.source_gaps.iter().any(|&(a, b)| (a..=b).contains(&frame_id))
    }

    /// Poses whose frame id falls inside `[start, end]`, with matching gap records.
    pub fn restrict(&self, start: u64, end: u64) -> WristTrajectory {
        WristTrajectory {
            clip_id: self.clip_id.clone(),
            poses: self.poses.iter().copied().filter(|(f, _)| (start..=end).contains(f)).collect(),
            source_gaps: self
                .source_gaps
                .iter()
                .filter(|(a, b)| *b >= start && *a <= end)
                .map(|&(a, b)| (a.max(start), b.min(end)))
                .collect(),
        }
    }
}

/// World pose of one detection: `invert(extrinsic) ∘ wrist_pose_cam`.
pub fn lift_frame(det: &HandDetection, cam: &CameraFrame) -> Result<Pose6D, LiftError> {
    if det.frame_id != cam.frame_id {
        return Err(LiftError::FrameMismatch { detection: det.frame_id, camera: cam.frame_id });
    }
    Ok(cam.cam_to_world().compose(&det.wrist_pose_cam.to_transform()).to_pose())
}

/// Lift a clip's detections, fill short gaps and split at long ones.
///
/// Detections below `min_confidence` are discarded. A run of `k` missing
/// frames between two surviving detections is interpolated when
/// `k <= max_gap`; otherwise the clip is split there.
pub fn lift_clip(
    clip_id: &str,
    dets: &[HandDetection],
    cams: &[CameraFrame],
    min_confidence: f64,
    max_gap: u64,
) -> Result<Vec<WristTrajectory>, LiftError> {
    let cam_by_frame: BTreeMap<u64, &CameraFrame> = cams.iter().map(|c| (c.frame_id, c)).collect();

    let mut kept: BTreeMap<u64, &HandDetection> = BTreeMap::new();
    for det in dets {
        if kept.contains_key(&det.frame_id) {
            return Err(LiftError::DuplicateDetection(det.frame_id));
        }
        if det.confidence >= min_confidence {
            kept.insert(det.frame_id, det);
        }
    }
    if kept.is_empty() {
        return Err(LiftError::EmptyClip);
    }

    let mut trajectories = Vec::new();
    let mut current = WristTrajectory { clip_id: clip_id.into(), poses: Vec::new(), source_gaps: Vec::new() };
    for (&frame_id, det) in &kept {
        let cam = cam_by_frame.get(&frame_id).ok_or(LiftError::MissingCamera(frame_id))?;
        let world = lift_frame(det, cam)?;
        if let Some(&(prev_id, prev_pose)) = current.poses.last() {
            let missing = frame_id - prev_id - 1;
            if missing > max_gap {
                trajectories.push(core::mem::replace(
                    &mut current,
                    WristTrajectory { clip_id: clip_id.into(), poses: Vec::new(), source_gaps: Vec::new() },
                ));
            } else if missing > 0 {
                let a = prev_pose.to_transform();
                let b = world.to_transform();
                let span = (frame_id - prev_id) as f64;
                for fill in prev_id + 1..frame_id {
                    let s = (fill - prev_id) as f64 / span;
                    current.poses.push((fill, a.interpolate(&b, s).to_pose()));
                }
                current.source_gaps.push((prev_id + 1, frame_id - 1));
            }
        }
        current.poses.push((frame_id, world));
    }
    trajectories.push(current);
    Ok(trajectories)
}

/// Poses `t..=t+n` of `traj` expressed in the camera frame of pose `t`.
///
/// `t` indexes `traj.poses`; the camera is looked up by that pose's frame id.
pub fn reexpress_window(
    traj: &WristTrajectory,
    cams: &[CameraFrame],
    t: usize,
    n: usize,
) -> Result<Vec<Pose6D>, LiftError> {
    if t + n >= traj.poses.len() {
        return Err(LiftError::WindowOutOfRange { start: t, len: n, available: traj.poses.len() });
    }
    let frame_id = traj.poses[t].0;
    let cam = cams.iter().find(|c| c.frame_id == frame_id).ok_or(LiftError::MissingCamera(frame_id))?;
    let ext = cam.extrinsic_world_to_cam;
    Ok(traj.poses[t..=t + n].iter().map(|(_, p)| ext.compose(&p.to_transform()).to_pose()).collect())
}
