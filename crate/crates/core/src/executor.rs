//! Chunk-by-chunk deployment of a policy in the simulator.
//!
//! The robot base frame is the simulator's world frame. Policies see the
//! scene through one fixed camera whose pose relative to the base is the
//! [`Calibration`]; they predict chunks in that camera's frame.

use alloc::vec::Vec;
use core::cell::Cell;

use crate::codec::{decode_transforms, encode_chunk, ActionChunk, ActionMode, CodecError};
use crate::grasp::{plan_linear_approach, select_grasp, GraspError, SelectionMode};
use crate::policy::{Policy, PolicyError, PolicyQuery};
use crate::se3::{Pose6D, RigidTransform};
use crate::sim::{observe, GraspProposals, GripperCommand, SimScene, TaskSpec};

pub const DEFAULT_BUDGET: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecutorError {
    #[error("policy returned a chunk of {got} actions, expected {expected}")]
    ChunkSize { got: usize, expected: usize },
    #[error("chunk size must be positive")]
    ZeroChunk,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Grasp(#[from] GraspError),
}

/// Fixed transform from the evaluation camera frame to the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub camera_to_robot: RigidTransform,
}

impl Calibration {
    pub const IDENTITY: Calibration = Calibration { camera_to_robot: RigidTransform::IDENTITY };

    pub fn new(camera_to_robot: RigidTransform) -> Self {
        Self { camera_to_robot }
    }

    /// Calibration of a camera whose extrinsic maps world (= robot base) to camera.
    pub fn from_extrinsic(world_to_cam: &RigidTransform) -> Self {
        Self { camera_to_robot: world_to_cam.invert() }
    }

    pub fn robot_to_camera(&self) -> RigidTransform {
        self.camera_to_robot.invert()
    }
}

/// Decode `chunk` in the camera frame and map every pose into the robot frame.
pub fn camera_to_robot_chunk(chunk: &ActionChunk, calib: &Calibration) -> Vec<Pose6D> {
    camera_to_robot_transforms(chunk, calib).iter().map(RigidTransform::to_pose).collect()
}

fn camera_to_robot_transforms(chunk: &ActionChunk, calib: &Calibration) -> Vec<RigidTransform> {
    decode_transforms(chunk).iter().map(|p| calib.camera_to_robot.compose(p)).collect()
}

/// Grasping stage run before the post-grasp loop: pick a grasp from camera-frame
/// proposals, approach it in a straight line, close.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPhase {
    pub proposals: GraspProposals,
    pub mode: SelectionMode,
    pub score_threshold: f64,
    pub standoff: f64,
    pub step: f64,
}

impl GraspPhase {
    pub fn new(proposals: GraspProposals, mode: SelectionMode) -> Self {
        Self {
            proposals,
            mode,
            score_threshold: crate::grasp::DEFAULT_SCORE_THRESHOLD,
            standoff: crate::grasp::DEFAULT_STANDOFF,
            step: crate::grasp::DEFAULT_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    /// Maximum post-grasp environment steps.
    pub budget: usize,
    /// Actions executed per policy query.
    pub chunk_size: usize,
    /// Keep a copy of the scene after every step in [`RolloutResult::states`].
    pub record_states: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, chunk_size: crate::codec::DEFAULT_CHUNK_SIZE, record_states: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Post-grasp environment steps.
    pub steps: usize,
    pub inference_calls: usize,
    pub success: bool,
    pub final_scene: SimScene,
    /// Gripper pose (robot frame) after every executed step, grasp phase included.
    pub pose_log: Vec<Pose6D>,
    /// Steps spent in the grasping stage, zero when starting post-grasp.
    pub grasp_steps: usize,
    /// Post-grasp step count at which each policy query happened.
    pub query_steps: Vec<usize>,
    /// Whether the gripper held the task target when the post-grasp loop began.
    pub grasped: bool,
    /// Initial scene then the scene after every step; empty unless requested.
    pub states: Vec<SimScene>,
}

/// Run one episode.
///
/// With `grasp` set the episode starts with the grasping stage; otherwise
/// `env` is assumed to already hold the object. The post-grasp loop then
/// queries `policy`, executes all `chunk_size` actions, and repeats until the
/// task succeeds or `budget` steps have run. Success is checked after every step.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &P,
    env: SimScene,
    task: &TaskSpec,
    calib: &Calibration,
    goal_feature: &[f64],
    config: &EpisodeConfig,
    grasp: Option<&GraspPhase>,
) -> Result<RolloutResult, ExecutorError> {
    let n = config.chunk_size;
    if n == 0 {
        return Err(ExecutorError::ZeroChunk);
    }
    let world_to_cam = calib.robot_to_camera();
    let mut scene = env;
    let mut pose_log = Vec::new();
    let mut states = Vec::new();
    let mut record = |s: &SimScene| {
        if config.record_states {
            states.push(s.clone());
        }
    };
    record(&scene);

    let mut grasp_steps = 0;
    if let Some(g) = grasp {
        for (target, cmd) in grasp_motion(&scene, calib, g)? {
            scene.step_mut(&target, cmd);
            pose_log.push(scene.gripper_pose());
            record(&scene);
            grasp_steps += 1;
        }
    }
    let grasped = scene.attached_id() == Some(task.target.as_str());

    let mut steps = 0;
    let mut query_steps = Vec::new();
    let mut success = scene.success(task);
    while !success && steps < config.budget {
        let query = PolicyQuery {
            obs_feature: observe(&scene, task, &world_to_cam),
            goal_feature: goal_feature.to_vec(),
            current_pose: world_to_cam.compose(&scene.gripper.pose).to_pose(),
        };
        let chunk = policy.predict(&query)?;
        if chunk.n() != n {
            return Err(ExecutorError::ChunkSize { got: chunk.n(), expected: n });
        }
        query_steps.push(steps);
        for target in camera_to_robot_transforms(&chunk, calib) {
            scene.step_mut(&target, GripperCommand::Hold);
            pose_log.push(scene.gripper_pose());
            record(&scene);
            steps += 1;
            success = scene.success(task);
            if success || steps == config.budget {
                break;
            }
        }
    }

    Ok(RolloutResult {
        steps,
        inference_calls: query_steps.len(),
        success,
        final_scene: scene,
        pose_log,
        grasp_steps,
        query_steps,
        grasped,
        states,
    })
}

/// Open, move through the approach waypoints, close on the last one.
fn grasp_motion(
    scene: &SimScene,
    calib: &Calibration,
    g: &GraspPhase,
) -> Result<Vec<(RigidTransform, GripperCommand)>, ExecutorError> {
    let initial_cam = calib.robot_to_camera().compose(&scene.gripper.pose);
    let grasp_cam = select_grasp(
        &g.proposals.affordance,
        &g.proposals.candidates,
        g.mode,
        g.score_threshold,
        initial_cam.euler(),
    )?;
    let waypoints = plan_linear_approach(&grasp_cam, g.standoff, g.step)?;
    let mut out: Vec<_> = waypoints
        .iter()
        .map(|w| (calib.camera_to_robot.compose(&w.to_transform()), GripperCommand::Open))
        .collect();
    let last = out.last().expect("approach has at least two waypoints").0;
    out.push((last, GripperCommand::Close));
    Ok(out)
}

/// Oracle policy that plays back a fixed robot-frame path chunk by chunk,
/// ignoring observations. Past the end of the path it holds the last pose.
#[derive(Debug)]
pub struct ReplayPolicy {
    path_cam: Vec<Pose6D>,
    chunk_size: usize,
    mode: ActionMode,
    cursor: Cell<usize>,
}

impl ReplayPolicy {
    /// `path` starts at the pose the gripper holds when the first query arrives.
    pub fn new(path: &[Pose6D], calib: &Calibration, chunk_size: usize, mode: ActionMode) -> Self {
        let to_cam = calib.robot_to_camera();
        Self {
            path_cam: path.iter().map(|p| to_cam.compose(&p.to_transform()).to_pose()).collect(),
            chunk_size,
            mode,
            cursor: Cell::new(0),
        }
    }

    pub fn reset(&self) {
        self.cursor.set(0);
    }
}

impl Policy for ReplayPolicy {
    fn predict(&self, _query: &PolicyQuery) -> Result<ActionChunk, PolicyError> {
        let last = *self.path_cam.last().ok_or(PolicyError::NoAction)?;
        let start = self.cursor.get();
        let window: Vec<Pose6D> =
            (start..=start + self.chunk_size).map(|i| self.path_cam.get(i).copied().unwrap_or(last)).collect();
        self.cursor.set(start + self.chunk_size);
        encode_chunk(&window, self.chunk_size, self.mode).map_err(|e| match e {
            CodecError::BadWindowLength { .. } | CodecError::ChunkLengthMismatch { .. } | CodecError::UnknownMode(_) => {
                PolicyError::NoAction
            }
        })
    }
}
