//! Scripted demonstrations: ground-truth gripper and egocentric camera paths.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::observe::demo_cameras;
use super::{BodyKind, GripperCommand, Joint, SimError, SimObject, SimScene, TaskSpec};
use crate::dataset::Skill;
use crate::math::Vec3;
use crate::se3::{rot_y, rot_z, CameraFrame, Pose6D, RigidTransform};

const TRAVEL_STEP: f64 = 0.02;
const APPROACH_STEP: f64 = 0.01;
const TURN_STEP: f64 = 0.05;
const STANDOFF: f64 = 0.10;
const SLIDE_STEP: f64 = 0.01;
const HINGE_ARC_STEP: f64 = 0.015;

/// A scripted episode. Frame `i` commands `gripper[i]` with `commands[i]`
/// and is observed through `cameras[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub gripper: Vec<Pose6D>,
    pub commands: Vec<GripperCommand>,
    pub cameras: Vec<CameraFrame>,
    /// Frame at which the gripper closes on the object; the post-grasp phase starts here.
    pub grasp_frame: usize,
}

impl Demo {
    pub fn len(&self) -> usize {
        self.gripper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gripper.is_empty()
    }
}

struct Script {
    poses: Vec<RigidTransform>,
    commands: Vec<GripperCommand>,
}

impl Script {
    fn last(&self) -> RigidTransform {
        *self.poses.last().expect("script starts with the initial pose")
    }

    fn push(&mut self, pose: RigidTransform, cmd: GripperCommand) {
        self.poses.push(pose);
        self.commands.push(cmd);
    }

    /// Straight move with at most `max_step` meters and `TURN_STEP` radians per frame; ends exactly on `to`.
    fn move_to(&mut self, to: RigidTransform, max_step: f64) {
        let from = self.last();
        let (dt, dr) = from.distance(&to);
        let k = libm::ceil((dt / max_step).max(dr / TURN_STEP)).max(1.0) as usize;
        for i in 1..k {
            self.push(from.interpolate(&to, i as f64 / k as f64), GripperCommand::Hold);
        }
        self.push(to, GripperCommand::Hold);
    }

    fn hold(&mut self, frames: usize) {
        let p = self.last();
        for _ in 0..frames {
            self.push(p, GripperCommand::Hold);
        }
    }
}

fn infeasible(task: &TaskSpec, reason: &'static str) -> SimError {
    SimError::InfeasibleTask { skill: task.skill, reason }
}

/// Scripted gripper path that solves `task` when replayed through [`SimScene::step`],
/// plus an egocentric camera path watching it.
pub fn scripted_demo(task: &TaskSpec, scene: &SimScene) -> Result<Demo, SimError> {
    task.validate(scene)?;
    let target = &scene.objects[&task.target];
    let grasp = target.grasp_pose().ok_or_else(|| infeasible(task, "target has no grasp frame"))?;
    if scene.gripper.attached.is_some() {
        return Err(infeasible(task, "gripper already holds an object"));
    }

    let mut s = Script { poses: Vec::new(), commands: Vec::new() };
    s.push(scene.gripper.pose, GripperCommand::Open);
    let standoff = RigidTransform::from_parts(
        *grasp.rotation(),
        grasp.translation() - grasp.rotation().col(2) * STANDOFF,
    );
    s.move_to(standoff, TRAVEL_STEP);
    s.move_to(grasp, APPROACH_STEP);
    s.push(grasp, GripperCommand::Close);
    let grasp_frame = s.poses.len() - 1;

    match (task.skill, target) {
        (Skill::SlideOpen | Skill::SlideClose | Skill::HingeOpen | Skill::HingeClose, SimObject::Articulated(a)) => {
            let is_prismatic = matches!(a.joint, Joint::Prismatic { .. });
            let slide_skill = matches!(task.skill, Skill::SlideOpen | Skill::SlideClose);
            if is_prismatic != slide_skill {
                return Err(infeasible(task, "joint type does not match skill"));
            }
            let goal = if matches!(task.skill, Skill::SlideOpen | Skill::HingeOpen) { a.q_max } else { a.q_min };
            let per_frame = match a.joint {
                Joint::Prismatic { .. } => SLIDE_STEP,
                Joint::Revolute { axis, pivot } => {
                    let r = a.handle_pose().translation() - pivot;
                    let radius = (r - axis * axis.dot(r)).norm();
                    if radius < 1e-6 {
                        return Err(infeasible(task, "handle lies on the hinge axis"));
                    }
                    HINGE_ARC_STEP / radius
                }
            };
            let k = libm::ceil(libm::fabs(goal - a.q) / per_frame).max(1.0) as usize;
            for i in 1..=k {
                let q = a.q + (goal - a.q) * i as f64 / k as f64;
                s.push(a.handle_pose_at(q), GripperCommand::Hold);
            }
        }
        (_, SimObject::Articulated(_)) => return Err(infeasible(task, "skill needs a free body")),
        (skill, SimObject::Body(body)) => {
            let offset = body.grasp.ok_or_else(|| infeasible(task, "target is not graspable"))?;
            let hold_body = |pose: RigidTransform| pose.compose(&offset);
            let lift = |s: &mut Script, dz: f64| {
                let p = s.last();
                s.move_to(RigidTransform::from_parts(*p.rotation(), p.translation() + Vec3::Z * dz), APPROACH_STEP);
            };
            let secondary = || {
                task.params
                    .secondary
                    .as_deref()
                    .and_then(|id| scene.body(id))
                    .ok_or_else(|| infeasible(task, "missing secondary object"))
            };
            match skill {
                Skill::Pick => {
                    lift(&mut s, 0.12);
                }
                Skill::Place => {
                    lift(&mut s, 0.10);
                    let dest = RigidTransform::from_parts(*body.pose.rotation(), task.params.place_target);
                    let above = RigidTransform::from_parts(*body.pose.rotation(), task.params.place_target + Vec3::Z * 0.10);
                    s.move_to(hold_body(above), TRAVEL_STEP);
                    s.move_to(hold_body(dest), APPROACH_STEP);
                }
                Skill::Pour => {
                    let BodyKind::Container(cup) = body.kind else {
                        return Err(infeasible(task, "pouring needs a container"));
                    };
                    let bowl = secondary()?;
                    let Some(rim) = bowl.container().map(|c| c.height) else {
                        return Err(infeasible(task, "receiver is not a container"));
                    };
                    lift(&mut s, 0.15);
                    let spout_at = bowl.pose.translation() + Vec3::Z * (rim + 0.15);
                    let cup_pose = |tilt: f64| {
                        let r = body.pose.rotation().mul_mat(&rot_y(tilt));
                        RigidTransform::from_parts(r, spout_at - r.mul_vec(cup.spout))
                    };
                    s.move_to(hold_body(cup_pose(0.0)), TRAVEL_STEP);
                    let tilt_max = 110f64.to_radians();
                    let k = 22;
                    for i in 1..=k {
                        s.push(hold_body(cup_pose(tilt_max * i as f64 / k as f64)), GripperCommand::Hold);
                    }
                }
                Skill::Stir => {
                    let pot = secondary()?;
                    let Some(depth) = pot.container().map(|c| c.height) else {
                        return Err(infeasible(task, "stirring needs a container"));
                    };
                    let center = pot.pose.translation();
                    let radius = 0.03;
                    let tip_at = |angle: f64, z: f64| {
                        let tip = center + Vec3::new(radius * libm::cos(angle), radius * libm::sin(angle), z);
                        hold_body(RigidTransform::from_parts(*body.pose.rotation(), tip))
                    };
                    lift(&mut s, 0.25);
                    s.move_to(tip_at(0.0, depth + 0.15), TRAVEL_STEP);
                    s.move_to(tip_at(0.0, 0.04), APPROACH_STEP);
                    let turns = 2.5;
                    let k = (turns * 24.0) as usize;
                    for i in 1..=k {
                        s.push(tip_at(2.0 * PI * turns * i as f64 / k as f64, 0.04), GripperCommand::Hold);
                    }
                }
                Skill::Cut => {
                    let food = secondary()?;
                    let BodyKind::Food(f) = food.kind else {
                        return Err(infeasible(task, "cutting needs food"));
                    };
                    if !matches!(body.kind, BodyKind::Knife) {
                        return Err(infeasible(task, "cutting needs a knife"));
                    }
                    let top = food.pose.translation() + Vec3::Z * f.height;
                    // Blade vertical, edge down.
                    let upright = rot_z(0.0);
                    let knife_at = |z: f64| hold_body(RigidTransform::from_parts(upright, top + Vec3::Z * z));
                    lift(&mut s, 0.20);
                    s.move_to(knife_at(0.05), TRAVEL_STEP);
                    s.move_to(knife_at(-0.02), APPROACH_STEP);
                }
                _ => return Err(infeasible(task, "articulation skill on a free body")),
            }
        }
    }
    s.hold(2);

    let gripper: Vec<Pose6D> = s.poses.iter().map(RigidTransform::to_pose).collect();
    let cameras = demo_cameras(scene, task, &s.poses);
    Ok(Demo { gripper, commands: s.commands, cameras, grasp_frame })
}

/// Scene after each demo frame.
pub fn replay(scene: &SimScene, demo: &Demo) -> Vec<SimScene> {
    let mut cur = scene.clone();
    demo.gripper
        .iter()
        .zip(&demo.commands)
        .map(|(p, c)| {
            cur.step_mut(&p.to_transform(), *c);
            cur.clone()
        })
        .collect()
}
