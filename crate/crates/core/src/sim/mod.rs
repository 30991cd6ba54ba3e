//! Deterministic kinematic kitchen.
//!
//! The world frame is z-up. The gripper moves kinematically to whatever pose
//! it is commanded; while it holds an articulated handle its motion is
//! projected onto the joint's one-dimensional path. Nothing here models
//! contact dynamics or friction.

mod demo;
mod generate;
mod observe;

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::dataset::Skill;
use crate::math::{Mat3, Vec3};
use crate::se3::{wrap, Pose6D, RigidTransform};

pub use demo::{replay, scripted_demo, Demo};
pub use generate::{random_scene, random_scene_with, SceneRandomization};
pub use observe::{
    eval_camera, goal_feature, grasp_proposals, observe, render_depth_map, render_detections, DetectionNoise, GraspProposals,
    Rendered, EVAL_INTRINSICS, FEATURE_DIM, IMAGE_HEIGHT, IMAGE_WIDTH,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("task references unknown object {0:?}")]
    UnknownObject(String),
    #[error("task {skill} is infeasible: {reason}")]
    InfeasibleTask { skill: Skill, reason: &'static str },
    #[error("trajectory lengths differ: {gripper} gripper poses, {cameras} cameras, {states} scene states")]
    LengthMismatch { gripper: usize, cameras: usize, states: usize },
    #[error("invalid noise parameters")]
    InvalidNoise,
}

/// Physical constants of the kinematic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Max gripper-to-grasp-point distance at which closing attaches.
    pub attach_tolerance: f64,
    /// Tilt (rad) beyond which a held container pours.
    pub pour_angle: f64,
    /// Fill fraction moved per step while pouring.
    pub pour_rate: f64,
    /// Max angle (rad) between the knife edge direction and straight down for a cut to count.
    pub cut_tolerance: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { attach_tolerance: 0.005, pour_angle: PI / 3.0, pour_rate: 0.05, cut_tolerance: PI / 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Joint {
    /// Translation along a unit axis (world frame).
    Prismatic { axis: Vec3 },
    /// Rotation about a unit axis through `pivot` (world frame).
    Revolute { axis: Vec3, pivot: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Articulation {
    pub joint: Joint,
    pub q_min: f64,
    pub q_max: f64,
    pub q: f64,
    /// Handle grasp frame at `q = 0`.
    pub handle_rest: RigidTransform,
}

impl Articulation {
    /// Rigid motion of the moving part at joint value `q`.
    pub fn joint_motion(&self, q: f64) -> RigidTransform {
        match self.joint {
            Joint::Prismatic { axis } => RigidTransform::from_translation(axis * q),
            Joint::Revolute { axis, pivot } => {
                let r = Mat3::from_axis_angle(axis, q);
                RigidTransform::from_parts(r, pivot - r.mul_vec(pivot))
            }
        }
    }

    pub fn handle_pose_at(&self, q: f64) -> RigidTransform {
        self.joint_motion(q).compose(&self.handle_rest)
    }

    pub fn handle_pose(&self) -> RigidTransform {
        self.handle_pose_at(self.q)
    }

    /// Fraction of the range covered, in `[0, 1]`.
    pub fn progress(&self) -> f64 {
        let span = self.q_max - self.q_min;
        if span > 0.0 {
            (self.q - self.q_min) / span
        } else {
            0.0
        }
    }

    fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.q_min, self.q_max)
    }

    /// Joint value reached by dragging the handle from `from` toward `to`.
    fn project(&self, from: Vec3, to: Vec3) -> f64 {
        let dq = match self.joint {
            Joint::Prismatic { axis } => axis.dot(to - from),
            Joint::Revolute { axis, pivot } => {
                let flat = |p: Vec3| {
                    let r = p - pivot;
                    r - axis * axis.dot(r)
                };
                let (u, v) = (flat(from), flat(to));
                if u.norm() < 1e-12 || v.norm() < 1e-12 {
                    0.0
                } else {
                    libm::atan2(axis.dot(u.cross(v)), u.dot(v))
                }
            }
        };
        self.clamp(self.q + dq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Container {
    /// Fill fraction in `[0, 1]`.
    pub fill: f64,
    pub radius: f64,
    pub height: f64,
    /// Pour lip in the body frame.
    pub spout: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Food {
    pub radius: f64,
    pub height: f64,
    pub cut: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyKind {
    Item,
    Container(Container),
    /// Body origin is the blade tip; the edge faces local `-z`.
    Knife,
    /// Body origin is the utensil tip.
    Stirrer,
    Food(Food),
}

/// Rigid object with its origin at the bottom centre (tools: at the tip).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeBody {
    pub pose: RigidTransform,
    /// Pose at scene creation.
    pub spawn_pose: RigidTransform,
    /// Grasp frame relative to the body, when graspable.
    pub grasp: Option<RigidTransform>,
    pub kind: BodyKind,
}

impl FreeBody {
    pub fn new(pose: RigidTransform, grasp: Option<RigidTransform>, kind: BodyKind) -> Self {
        Self { pose, spawn_pose: pose, grasp, kind }
    }

    pub fn grasp_pose(&self) -> Option<RigidTransform> {
        self.grasp.map(|g| self.pose.compose(&g))
    }

    pub fn container(&self) -> Option<&Container> {
        match &self.kind {
            BodyKind::Container(c) => Some(c),
            _ => None,
        }
    }

    /// Angle between the body's `+z` axis and world up.
    pub fn tilt(&self) -> f64 {
        libm::acos(self.pose.rotation().col(2).z.clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimObject {
    Articulated(Articulation),
    Body(FreeBody),
}

impl SimObject {
    pub fn articulation(&self) -> Option<&Articulation> {
        match self {
            SimObject::Articulated(a) => Some(a),
            SimObject::Body(_) => None,
        }
    }

    pub fn body(&self) -> Option<&FreeBody> {
        match self {
            SimObject::Body(b) => Some(b),
            SimObject::Articulated(_) => None,
        }
    }

    /// Current grasp frame in the world, if any.
    pub fn grasp_pose(&self) -> Option<RigidTransform> {
        match self {
            SimObject::Articulated(a) => Some(a.handle_pose()),
            SimObject::Body(b) => b.grasp_pose(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub object: String,
    /// Gripper pose in the grasped frame (handle frame or body frame).
    pub offset: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gripper {
    pub pose: RigidTransform,
    pub closed: bool,
    pub attached: Option<Attachment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GripperCommand {
    Open,
    Close,
    Hold,
}

impl GripperCommand {
    pub fn name(self) -> &'static str {
        match self {
            GripperCommand::Open => "open",
            GripperCommand::Close => "close",
            GripperCommand::Hold => "hold",
        }
    }
}

impl fmt::Display for GripperCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GripperCommand {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "open" => Ok(GripperCommand::Open),
            "close" => Ok(GripperCommand::Close),
            "hold" => Ok(GripperCommand::Hold),
            _ => Err(()),
        }
    }
}

/// Running record of a stirring motion inside one container.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StirTrack {
    pub container: Option<String>,
    /// Signed angle swept by the utensil tip about the container axis.
    pub accumulated: f64,
    /// Largest horizontal distance of the tip from the container axis.
    pub max_excursion: f64,
    last_angle: Option<f64>,
}

impl StirTrack {
    pub fn new(container: Option<String>, accumulated: f64, max_excursion: f64) -> Self {
        Self { container, accumulated, max_excursion, last_angle: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub objects: BTreeMap<String, SimObject>,
    pub gripper: Gripper,
    pub params: SimParams,
    pub stir: StirTrack,
    /// Liquid poured with no receiver underneath.
    pub spilled: f64,
    pub steps: u64,
    pub rng_seed: u64,
}

/// Per-skill success thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessParams {
    /// Open skills succeed at `q >= open_fraction * q_max`.
    pub open_fraction: f64,
    /// Close skills succeed at `q <= close_fraction * q_max`.
    pub close_fraction: f64,
    pub lift_height: f64,
    pub place_target: Vec3,
    pub place_tolerance: f64,
    /// Receiver container for pouring, stirred container, or food to cut.
    pub secondary: Option<String>,
    /// Fill the receiver must gain.
    pub pour_fraction: f64,
    pub receiver_start_fill: f64,
    pub stir_angle: f64,
    pub stir_excursion: f64,
}

impl Default for SuccessParams {
    fn default() -> Self {
        Self {
            open_fraction: 0.9,
            close_fraction: 0.1,
            lift_height: 0.05,
            place_target: Vec3::ZERO,
            place_tolerance: 0.05,
            secondary: None,
            pour_fraction: 0.2,
            receiver_start_fill: 0.0,
            stir_angle: 4.0 * PI,
            stir_excursion: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub skill: Skill,
    pub target: String,
    pub params: SuccessParams,
}

impl TaskSpec {
    pub fn validate(&self, scene: &SimScene) -> Result<(), SimError> {
        if !scene.objects.contains_key(&self.target) {
            return Err(SimError::UnknownObject(self.target.clone()));
        }
        if let Some(s) = &self.params.secondary {
            if !scene.objects.contains_key(s) {
                return Err(SimError::UnknownObject(s.clone()));
            }
        }
        Ok(())
    }
}

impl SimScene {
    pub fn new(objects: BTreeMap<String, SimObject>, gripper_pose: RigidTransform, rng_seed: u64) -> Self {
        Self {
            objects,
            gripper: Gripper { pose: gripper_pose, closed: false, attached: None },
            params: SimParams::default(),
            stir: StirTrack::default(),
            spilled: 0.0,
            steps: 0,
            rng_seed,
        }
    }

    pub fn gripper_pose(&self) -> Pose6D {
        self.gripper.pose.to_pose()
    }

    pub fn articulation(&self, id: &str) -> Option<&Articulation> {
        self.objects.get(id).and_then(SimObject::articulation)
    }

    pub fn body(&self, id: &str) -> Option<&FreeBody> {
        self.objects.get(id).and_then(SimObject::body)
    }

    pub fn attached_id(&self) -> Option<&str> {
        self.gripper.attached.as_ref().map(|a| a.object.as_str())
    }

    /// Total liquid in all containers plus spills.
    pub fn total_liquid(&self) -> f64 {
        self.objects.values().filter_map(|o| o.body().and_then(FreeBody::container)).map(|c| c.fill).sum::<f64>()
            + self.spilled
    }

    /// Pure step: returns the successor scene.
    pub fn step(&self, target: &Pose6D, command: GripperCommand) -> SimScene {
        let mut next = self.clone();
        next.step_mut(&target.to_transform(), command);
        next
    }

    /// Advance one tick in place; `target` is the commanded gripper pose in the world frame.
    pub fn step_mut(&mut self, target: &RigidTransform, command: GripperCommand) {
        self.steps += 1;
        if command == GripperCommand::Open {
            self.gripper.attached = None;
            self.gripper.closed = false;
        }
        let tip_before = self.held_tip();

        match self.gripper.attached.clone() {
            Some(att) => match self.objects.get_mut(&att.object) {
                Some(SimObject::Articulated(a)) => {
                    a.q = a.project(self.gripper.pose.translation(), target.translation());
                    self.gripper.pose = a.handle_pose().compose(&att.offset);
                }
                Some(SimObject::Body(b)) => {
                    self.gripper.pose = *target;
                    b.pose = target.compose(&att.offset.invert());
                }
                None => {
                    self.gripper.attached = None;
                    self.gripper.pose = *target;
                }
            },
            None => self.gripper.pose = *target,
        }

        if command == GripperCommand::Close {
            self.gripper.closed = true;
            if self.gripper.attached.is_none() {
                self.try_attach();
            }
        }

        self.update_pouring();
        self.update_stirring();
        if let Some(before) = tip_before {
            self.update_cutting(before);
        }
    }

    fn try_attach(&mut self) {
        let here = self.gripper.pose.translation();
        let tol = self.params.attach_tolerance;
        let best = self
            .objects
            .iter()
            .filter_map(|(id, o)| o.grasp_pose().map(|g| (id, g, (g.translation() - here).norm())))
            .filter(|(_, _, d)| *d <= tol)
            .min_by(|a, b| a.2.total_cmp(&b.2));
        if let Some((id, _, _)) = best {
            let frame = match &self.objects[id] {
                SimObject::Articulated(a) => a.handle_pose(),
                SimObject::Body(b) => b.pose,
            };
            self.gripper.attached =
                Some(Attachment { object: id.clone(), offset: frame.invert().compose(&self.gripper.pose) });
        }
    }

    fn held_body(&self) -> Option<(&str, &FreeBody)> {
        let id = self.attached_id()?;
        self.body(id).map(|b| (id, b))
    }

    fn held_tip(&self) -> Option<Vec3> {
        self.held_body().filter(|(_, b)| matches!(b.kind, BodyKind::Knife)).map(|(_, b)| b.pose.translation())
    }

    fn update_pouring(&mut self) {
        let Some((src_id, src)) = self.held_body() else { return };
        let Some(src_c) = src.container() else { return };
        if src.tilt() <= self.params.pour_angle || src_c.fill <= 0.0 {
            return;
        }
        let spout = src.pose.transform_point(src_c.spout);
        let receiver = self
            .objects
            .iter()
            .filter(|(id, _)| id.as_str() != src_id)
            .filter_map(|(id, o)| o.body().and_then(|b| b.container().map(|c| (id, b, c))))
            .find(|(_, b, c)| {
                let center = b.pose.translation();
                let horizontal = Vec3::new(spout.x - center.x, spout.y - center.y, 0.0).norm();
                horizontal <= c.radius && spout.z >= center.z
            })
            .map(|(id, _, c)| (id.clone(), 1.0 - c.fill));
        let src_id = String::from(src_id);
        let mut amount = self.params.pour_rate.min(src_c.fill);
        if let Some((_, room)) = &receiver {
            amount = amount.min(*room);
        }
        if amount <= 0.0 {
            return;
        }
        if let Some(SimObject::Body(FreeBody { kind: BodyKind::Container(c), .. })) = self.objects.get_mut(&src_id) {
            c.fill -= amount;
        }
        match receiver {
            Some((rid, _)) => {
                if let Some(SimObject::Body(FreeBody { kind: BodyKind::Container(c), .. })) = self.objects.get_mut(&rid) {
                    c.fill += amount;
                }
            }
            None => self.spilled += amount,
        }
    }

    fn update_stirring(&mut self) {
        let Some((_, tool)) = self.held_body() else {
            self.stir.last_angle = None;
            return;
        };
        if !matches!(tool.kind, BodyKind::Stirrer) {
            return;
        }
        let tip = tool.pose.translation();
        let inside = self.objects.iter().find_map(|(id, o)| {
            let b = o.body()?;
            let c = b.container()?;
            let center = b.pose.translation();
            let rel = Vec3::new(tip.x - center.x, tip.y - center.y, 0.0);
            let depth_ok = tip.z >= center.z && tip.z <= center.z + c.height;
            (depth_ok && rel.norm() <= c.radius).then(|| (id.clone(), rel))
        });
        match inside {
            Some((id, rel)) => {
                if self.stir.container.as_deref() != Some(id.as_str()) {
                    self.stir = StirTrack::new(Some(id), 0.0, 0.0);
                }
                let angle = libm::atan2(rel.y, rel.x);
                if let Some(prev) = self.stir.last_angle {
                    self.stir.accumulated += wrap(angle - prev);
                }
                self.stir.last_angle = Some(angle);
                self.stir.max_excursion = self.stir.max_excursion.max(rel.norm());
            }
            None => self.stir.last_angle = None,
        }
    }

    fn update_cutting(&mut self, tip_before: Vec3) {
        let Some((_, knife)) = self.held_body() else { return };
        let tip = knife.pose.translation();
        let edge_down = -knife.pose.rotation().col(2);
        let edge_angle = libm::acos(edge_down.dot(-Vec3::Z).clamp(-1.0, 1.0));
        if edge_angle > self.params.cut_tolerance {
            return;
        }
        for o in self.objects.values_mut() {
            if let SimObject::Body(FreeBody { pose, kind: BodyKind::Food(f), .. }) = o {
                let base = pose.translation();
                let top = base.z + f.height;
                let horizontal = Vec3::new(tip.x - base.x, tip.y - base.y, 0.0).norm();
                if tip_before.z >= top && tip.z < top && horizontal <= f.radius {
                    f.cut = true;
                }
            }
        }
    }

    /// Task success predicate. These are proxies for "matches the goal image".
    pub fn success(&self, task: &TaskSpec) -> bool {
        let p = &task.params;
        match task.skill {
            Skill::SlideOpen | Skill::HingeOpen => {
                self.articulation(&task.target).is_some_and(|a| a.q >= p.open_fraction * a.q_max)
            }
            Skill::SlideClose | Skill::HingeClose => {
                self.articulation(&task.target).is_some_and(|a| a.q <= p.close_fraction * a.q_max)
            }
            Skill::Pick => self.body(&task.target).is_some_and(|b| {
                self.attached_id() == Some(task.target.as_str())
                    && b.pose.translation().z - b.spawn_pose.translation().z >= p.lift_height
            }),
            Skill::Place => {
                self.body(&task.target).is_some_and(|b| (b.pose.translation() - p.place_target).norm() <= p.place_tolerance)
            }
            Skill::Pour => p
                .secondary
                .as_deref()
                .and_then(|r| self.body(r))
                .and_then(FreeBody::container)
                .is_some_and(|c| c.fill - p.receiver_start_fill >= p.pour_fraction - 1e-12),
            Skill::Stir => {
                self.stir.container.as_deref() == p.secondary.as_deref()
                    && libm::fabs(self.stir.accumulated) >= p.stir_angle
                    && self.stir.max_excursion <= p.stir_excursion
            }
            Skill::Cut => p
                .secondary
                .as_deref()
                .and_then(|f| self.body(f))
                .is_some_and(|b| matches!(b.kind, BodyKind::Food(Food { cut: true, .. }))),
        }
    }
}

/// Free-function form of [`SimScene::success`].
pub fn success(scene: &SimScene, task: &TaskSpec) -> bool {
    scene.success(task)
}

/// Free-function form of [`SimScene::step`].
pub fn step(scene: &SimScene, gripper_target: &Pose6D, gripper_command: GripperCommand) -> SimScene {
    scene.step(gripper_target, gripper_command)
}
