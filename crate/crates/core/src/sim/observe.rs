//! What a camera sees: observation features, synthetic hand detections,
//! depth images and grasp proposals.
//!
//! # Observation features
//!
//! [`observe`] returns `FEATURE_DIM` values computed from scene state and
//! expressed in the observing camera's frame:
//!
//! | index  | content                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0..3   | gripper position                                               |
//! | 3..6   | gripper approach axis (local `+z`)                             |
//! | 6..9   | target grasp point (handle, or target body grasp frame)       |
//! | 9..12  | joint axis (articulated target) or zero                        |
//! | 12..15 | hinge pivot minus handle (revolute target) or zero             |
//! | 15     | joint progress `(q - q_min) / (q_max - q_min)`                 |
//! | 16     | joint kind: `+1` prismatic, `-1` revolute, `0` free body        |
//! | 17     | gripper closed                                                 |
//! | 18     | gripper holds the target                                       |
//! | 19..22 | secondary object position (receiver, pot, food) or zero        |
//! | 22     | target container fill                                          |
//! | 23     | secondary container fill                                       |
//! | 24     | stirring progress `|accumulated| / 2pi`                        |
//! | 25     | secondary food cut                                             |
//! | 26     | target body height above its spawn pose                        |
//! | 27..32 | zero                                                           |

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{replay, scripted_demo, BodyKind, Joint, SimError, SimObject, SimScene, TaskSpec};
use crate::egolift::HandDetection;
use crate::grasp::{AffordancePoint, DepthMap, GraspCandidate, GraspError};
use crate::math::Vec3;
use crate::se3::{look_at, project, CameraFrame, Intrinsics, Pose6D, RigidTransform};

pub const FEATURE_DIM: usize = 32;

/// 640x480 pinhole used for every synthetic camera.
pub const EVAL_INTRINSICS: Intrinsics = Intrinsics { fx: 600.0, fy: 600.0, cx: 320.0, cy: 240.0 };
pub const IMAGE_WIDTH: usize = 640;
pub const IMAGE_HEIGHT: usize = 480;

pub fn observe(scene: &SimScene, task: &TaskSpec, world_to_cam: &RigidTransform) -> Vec<f64> {
    let mut f = vec![0.0; FEATURE_DIM];
    let mut put = |at: usize, v: Vec3| f[at..at + 3].copy_from_slice(&v.to_array());
    let point = |p: Vec3| world_to_cam.transform_point(p);
    let dir = |v: Vec3| world_to_cam.transform_vector(v);

    let g = scene.gripper.pose;
    put(0, point(g.translation()));
    put(3, dir(g.rotation().col(2)));
    let target = scene.objects.get(&task.target);
    if let Some(anchor) = target.and_then(SimObject::grasp_pose) {
        put(6, point(anchor.translation()));
    }
    if let Some(SimObject::Articulated(a)) = target {
        match a.joint {
            Joint::Prismatic { axis } => put(9, dir(axis)),
            Joint::Revolute { axis, pivot } => {
                put(9, dir(axis));
                put(12, dir(pivot - a.handle_pose().translation()));
            }
        }
    }
    let secondary = task.params.secondary.as_deref().and_then(|id| scene.body(id));
    if let Some(b) = secondary {
        put(19, point(b.pose.translation()));
    }

    if let Some(SimObject::Articulated(a)) = target {
        f[15] = a.progress();
        f[16] = if matches!(a.joint, Joint::Prismatic { .. }) { 1.0 } else { -1.0 };
    }
    f[17] = if scene.gripper.closed { 1.0 } else { 0.0 };
    f[18] = if scene.attached_id() == Some(task.target.as_str()) { 1.0 } else { 0.0 };
    if let Some(SimObject::Body(b)) = target {
        if let Some(c) = b.container() {
            f[22] = c.fill;
        }
        f[26] = b.pose.translation().z - b.spawn_pose.translation().z;
    }
    if let Some(b) = secondary {
        match b.kind {
            BodyKind::Container(c) => f[23] = c.fill,
            BodyKind::Food(food) => f[25] = if food.cut { 1.0 } else { 0.0 },
            _ => {}
        }
    }
    f[24] = libm::fabs(scene.stir.accumulated) / (2.0 * PI);
    f
}

/// Observation of the scene after the scripted demo has solved the task,
/// seen from `world_to_cam`. Stands in for a goal image of the same setup.
pub fn goal_feature(scene: &SimScene, task: &TaskSpec, world_to_cam: &RigidTransform) -> Result<Vec<f64>, SimError> {
    let demo = scripted_demo(task, scene)?;
    let states = replay(scene, &demo);
    let last = states.last().unwrap_or(scene);
    Ok(observe(last, task, world_to_cam))
}

/// Where a viewer stands for a task: a point to look at and a seeded eye position.
struct CameraRig {
    eye: Vec3,
    look: Vec3,
}

fn camera_rig(scene: &SimScene, task: &TaskSpec, seed: u64) -> CameraRig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00ca_3e7a);
    let target = &scene.objects[&task.target];
    let anchor = target.grasp_pose().map(|g| g.translation()).unwrap_or_default();
    let (toward_viewer, dist, height) = match target {
        SimObject::Articulated(a) => {
            let out = -a.handle_rest.rotation().col(2);
            (Vec3::new(out.x, out.y, 0.0).normalized(), rng.random_range(0.75..0.95), rng.random_range(0.35..0.5))
        }
        SimObject::Body(_) => (-Vec3::X, rng.random_range(0.5..0.65), rng.random_range(0.4..0.55)),
    };
    let lateral = Vec3::Z.cross(toward_viewer) * rng.random_range(-0.12..0.12);
    CameraRig { eye: anchor + toward_viewer * dist + Vec3::Z * height + lateral, look: anchor + toward_viewer * 0.1 }
}

/// Static third-person camera for evaluation, drawn from the same viewpoint distribution as demo cameras.
pub fn eval_camera(scene: &SimScene, task: &TaskSpec, seed: u64) -> CameraFrame {
    let rig = camera_rig(scene, task, seed);
    CameraFrame::new(0, EVAL_INTRINSICS, look_at(rig.eye, rig.look, Vec3::Z))
}

/// Head-mounted camera following a demonstration: slow sway plus partial gaze tracking of the hand.
pub(crate) fn demo_cameras(scene: &SimScene, task: &TaskSpec, gripper: &[RigidTransform]) -> Vec<CameraFrame> {
    let rig = camera_rig(scene, task, scene.rng_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed ^ 0x5a7e);
    let phase: [f64; 3] = core::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    gripper
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let t = i as f64;
            let sway = Vec3::new(
                0.02 * libm::sin(2.0 * PI * t / 45.0 + phase[0]),
                0.015 * libm::sin(2.0 * PI * t / 60.0 + phase[1]),
                0.01 * libm::sin(2.0 * PI * t / 35.0 + phase[2]),
            );
            let look = rig.look * 0.7 + g.translation() * 0.3;
            CameraFrame::new(i as u64, EVAL_INTRINSICS, look_at(rig.eye + sway, look, Vec3::Z))
        })
        .collect()
}

/// Gaussian pose noise and i.i.d. frame dropout for synthetic detections.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionNoise {
    /// Per-axis translation standard deviation (m).
    pub translation_std: f64,
    /// Per-axis standard deviation (rad) of a rotation-vector perturbation.
    pub rotation_std: f64,
    /// Probability a frame has no detection.
    pub dropout: f64,
}

impl DetectionNoise {
    pub const NONE: DetectionNoise = DetectionNoise { translation_std: 0.0, rotation_std: 0.0, dropout: 0.0 };

    fn validate(&self) -> Result<(), SimError> {
        let ok = self.translation_std >= 0.0
            && self.rotation_std >= 0.0
            && (0.0..=1.0).contains(&self.dropout)
            && self.translation_std.is_finite()
            && self.rotation_std.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidNoise)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub detections: Vec<HandDetection>,
    pub cameras: Vec<CameraFrame>,
    /// One feature vector per frame, including dropped frames.
    pub features: Vec<Vec<f64>>,
}

/// Express each gripper pose in its frame's camera, perturb it, and drop frames.
///
/// Noise is applied in the camera frame: `t' = t + e_t`, `R' = exp(e_r) R`.
/// The random stream depends only on `seed` and the frame count, and every
/// frame consumes the same number of draws whether or not it is dropped.
pub fn render_detections(
    gripper: &[Pose6D],
    cameras: &[CameraFrame],
    states: &[SimScene],
    task: &TaskSpec,
    noise: DetectionNoise,
    seed: u64,
) -> Result<Rendered, SimError> {
    if gripper.len() != cameras.len() || gripper.len() != states.len() {
        return Err(SimError::LengthMismatch { gripper: gripper.len(), cameras: cameras.len(), states: states.len() });
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut detections = Vec::with_capacity(gripper.len());
    let mut features = Vec::with_capacity(gripper.len());
    for ((g, cam), state) in gripper.iter().zip(cameras).zip(states) {
        let drop_draw: f64 = rng.random();
        let mut draw3 = || Vec3::new(unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng));
        let et = draw3() * noise.translation_std;
        let er = draw3() * noise.rotation_std;
        features.push(observe(state, task, &cam.extrinsic_world_to_cam));
        if drop_draw < noise.dropout {
            continue;
        }
        let in_cam = cam.extrinsic_world_to_cam.compose(&g.to_transform());
        let noisy = RigidTransform::from_rotvec(Vec3::ZERO, er).compose(&in_cam);
        let noisy = RigidTransform::from_parts(*noisy.rotation(), in_cam.translation() + et);
        detections.push(HandDetection { frame_id: cam.frame_id, wrist_pose_cam: noisy.to_pose(), confidence: 1.0 });
    }
    Ok(Rendered { detections, cameras: cameras.to_vec(), features })
}

/// Radius of the camera-facing disk standing in for a handle or grip.
const HANDLE_RADIUS: f64 = 0.03;

/// Depth image of the task's grasp region: a camera-facing disk centred on the
/// grasp point in front of a surface plane set `HANDLE_RADIUS` behind it along
/// the approach direction. Pixels seeing neither are NaN.
pub fn render_depth_map(scene: &SimScene, task: &TaskSpec, camera: &CameraFrame) -> Result<DepthMap, GraspError> {
    let grasp = scene
        .objects
        .get(&task.target)
        .and_then(SimObject::grasp_pose)
        .ok_or(GraspError::NoViableGrasp)?;
    let ext = camera.extrinsic_world_to_cam;
    let p0 = ext.transform_point(grasp.translation());
    let facing = p0.normalized();
    let normal = ext.transform_vector(grasp.rotation().col(2));
    let surface = normal.dot(p0 + normal * HANDLE_RADIUS);
    let k = camera.intrinsics;
    let mut data = Vec::with_capacity(IMAGE_WIDTH * IMAGE_HEIGHT);
    for v in 0..IMAGE_HEIGHT {
        for u in 0..IMAGE_WIDTH {
            let ray = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let z_disk = facing.dot(p0) / facing.dot(ray);
            let z = if (ray * z_disk - p0).norm() <= HANDLE_RADIUS {
                z_disk
            } else {
                let denom = normal.dot(ray);
                if libm::fabs(denom) > 1e-9 { surface / denom } else { f64::NAN }
            };
            data.push(if z > 0.0 { z } else { f64::NAN });
        }
    }
    DepthMap::new(IMAGE_WIDTH, IMAGE_HEIGHT, data)
}

/// Stand-in outputs of an affordance model and a grasp generator for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspProposals {
    pub affordance: AffordancePoint,
    pub candidates: Vec<GraspCandidate>,
    pub depth: DepthMap,
}

/// Affordance pixel at the true grasp point, plus scored candidates: one good
/// grasp within 2 mm of it, a near miss below the score threshold, and
/// distractors elsewhere on the object, some scoring higher than the good one.
pub fn grasp_proposals(
    scene: &SimScene,
    task: &TaskSpec,
    camera: &CameraFrame,
    seed: u64,
) -> Result<GraspProposals, GraspError> {
    let grasp = scene
        .objects
        .get(&task.target)
        .and_then(SimObject::grasp_pose)
        .ok_or(GraspError::NoViableGrasp)?;
    let ext = camera.extrinsic_world_to_cam;
    let grasp_cam = ext.compose(&grasp);
    let pixel = project(grasp_cam.translation(), &camera.intrinsics)?;
    let depth = render_depth_map(scene, task, camera)?;
    let text = alloc::format!("{} {}", task.skill, task.target);
    let affordance = AffordancePoint::from_depth_map(pixel, &depth, &camera.intrinsics, &text)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a5b);
    let x_axis = grasp_cam.rotation().col(0);
    let y_axis = grasp_cam.rotation().col(1);
    let with_offset = |dx: f64, dy: f64| {
        RigidTransform::from_parts(*grasp_cam.rotation(), grasp_cam.translation() + x_axis * dx + y_axis * dy).to_pose()
    };
    let mut candidates = Vec::new();
    let r = rng.random_range(0.0..0.002);
    let a = rng.random_range(0.0..2.0 * PI);
    candidates.push(GraspCandidate {
        pose_cam: with_offset(r * libm::cos(a), r * libm::sin(a)),
        score: rng.random_range(0.3..0.7),
        width: 0.03,
    });
    let a = rng.random_range(0.0..2.0 * PI);
    candidates.push(GraspCandidate {
        pose_cam: with_offset(0.015 * libm::cos(a), 0.015 * libm::sin(a)),
        score: rng.random_range(0.02..0.15),
        width: 0.03,
    });
    for _ in 0..6 {
        let r = rng.random_range(0.06..0.25);
        let a = rng.random_range(0.0..2.0 * PI);
        candidates.push(GraspCandidate {
            pose_cam: with_offset(r * libm::cos(a), r * libm::sin(a)),
            score: rng.random_range(0.2..1.0),
            width: rng.random_range(0.02..0.08),
        });
    }
    // Shuffle so the good grasp is not always first.
    for i in (1..candidates.len()).rev() {
        let j = rng.random_range(0..=i);
        candidates.swap(i, j);
    }
    Ok(GraspProposals { affordance, candidates, depth })
}
