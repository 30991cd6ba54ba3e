//! Seeded random kitchen scenes, one layout family per skill.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Articulation, BodyKind, Container, Food, FreeBody, Joint, SimObject, SimScene, SuccessParams, TaskSpec,
};
use crate::dataset::Skill;
use crate::math::{Mat3, Vec3};
use crate::se3::{rot_x, rot_z, RigidTransform};

/// Ranges sampled by [`random_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneRandomization {
    /// Cabinet yaw jitter (rad) around facing the robot.
    pub yaw_jitter: f64,
    pub drawer_travel: (f64, f64),
    pub door_width: (f64, f64),
    pub door_range: (f64, f64),
    pub handle_height: (f64, f64),
}

impl Default for SceneRandomization {
    fn default() -> Self {
        Self {
            yaw_jitter: 0.3,
            drawer_travel: (0.25, 0.38),
            door_width: (0.32, 0.45),
            door_range: (1.45, 1.65),
            handle_height: (0.35, 0.5),
        }
    }
}

/// Gripper grasp frame for a handle on a front facing `outward`: approach (`+z`) points into the cabinet.
pub(crate) fn handle_frame(outward: Vec3, position: Vec3) -> RigidTransform {
    let z = -outward;
    let x = Vec3::Z;
    let y = z.cross(x);
    RigidTransform::from_parts(Mat3::from_cols(x, y, z), position)
}

/// Top-down grasp `height` above a body origin.
fn top_grasp(height: f64) -> RigidTransform {
    RigidTransform::from_parts(rot_x(PI), Vec3::new(0.0, 0.0, height))
}

fn body_at(p: Vec3, yaw: f64) -> RigidTransform {
    RigidTransform::from_parts(rot_z(yaw), p)
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// A feasible scene and task for `skill`, fully determined by `seed`.
pub fn random_scene(skill: Skill, seed: u64) -> (SimScene, TaskSpec) {
    random_scene_with(skill, seed, &SceneRandomization::default())
}

pub fn random_scene_with(skill: Skill, seed: u64, cfg: &SceneRandomization) -> (SimScene, TaskSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f0b_1ec7);
    let mut objects = BTreeMap::new();
    let mut params = SuccessParams::default();

    let (target, gripper_pose) = if skill.is_articulation() {
        let yaw = PI + uniform(&mut rng, (-cfg.yaw_jitter, cfg.yaw_jitter));
        let outward = Vec3::new(libm::cos(yaw), libm::sin(yaw), 0.0);
        let lateral = Vec3::Z.cross(outward);
        let height = uniform(&mut rng, cfg.handle_height);
        let front = Vec3::new(0.6 + uniform(&mut rng, (-0.05, 0.05)), uniform(&mut rng, (-0.1, 0.1)), height);
        let opening = matches!(skill, Skill::SlideOpen | Skill::HingeOpen);
        let (id, art) = if matches!(skill, Skill::SlideOpen | Skill::SlideClose) {
            let q_max = uniform(&mut rng, cfg.drawer_travel);
            let art = Articulation {
                joint: Joint::Prismatic { axis: outward },
                q_min: 0.0,
                q_max,
                q: 0.0,
                handle_rest: handle_frame(outward, front),
            };
            ("drawer", art)
        } else {
            let width = uniform(&mut rng, cfg.door_width);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let pivot = front + lateral * (side * width / 2.0);
            let handle = front - lateral * (side * (width / 2.0 - 0.04)) + outward * 0.03;
            let art = Articulation {
                joint: Joint::Revolute { axis: Vec3::Z * side, pivot },
                q_min: 0.0,
                q_max: uniform(&mut rng, cfg.door_range),
                q: 0.0,
                handle_rest: handle_frame(outward, handle),
            };
            ("door", art)
        };
        let mut art = art;
        art.q = if opening {
            uniform(&mut rng, (0.0, 0.05)) * art.q_max
        } else {
            uniform(&mut rng, (0.8, 0.95)) * art.q_max
        };
        let handle = art.handle_pose();
        let approach_out = -handle.rotation().col(2);
        let start = handle.translation()
            + approach_out * uniform(&mut rng, (0.25, 0.35))
            + Vec3::Z.cross(approach_out) * uniform(&mut rng, (-0.1, 0.1))
            + Vec3::Z * uniform(&mut rng, (-0.05, 0.1));
        let jitter = rot_z(uniform(&mut rng, (-0.2, 0.2)));
        let gripper = RigidTransform::from_parts(jitter.mul_mat(handle.rotation()), start);
        objects.insert(id.to_string(), SimObject::Articulated(art));
        (id, gripper)
    } else {
        let p = |rng: &mut ChaCha8Rng, x: f64, y: f64| {
            Vec3::new(x + uniform(rng, (-0.05, 0.05)), y + uniform(rng, (-0.05, 0.05)), 0.0)
        };
        let target = match skill {
            Skill::Pick | Skill::Place => {
                let spawn = p(&mut rng, 0.5, -0.1);
                let yaw = uniform(&mut rng, (-PI, PI));
                objects.insert("item".into(), SimObject::Body(FreeBody::new(body_at(spawn, yaw), Some(top_grasp(0.06)), BodyKind::Item)));
                if skill == Skill::Place {
                    params.place_target = p(&mut rng, 0.5, 0.15);
                }
                "item"
            }
            Skill::Pour => {
                let cup_at = p(&mut rng, 0.5, -0.15);
                let bowl_at = p(&mut rng, 0.5, 0.12);
                let toward = bowl_at - cup_at;
                let yaw = libm::atan2(toward.y, toward.x);
                let cup = Container { fill: 0.8, radius: 0.04, height: 0.12, spout: Vec3::new(0.04, 0.0, 0.12) };
                let bowl = Container { fill: 0.0, radius: 0.09, height: 0.08, spout: Vec3::new(0.09, 0.0, 0.08) };
                objects.insert("cup".into(), SimObject::Body(FreeBody::new(body_at(cup_at, yaw), Some(top_grasp(0.10)), BodyKind::Container(cup))));
                objects.insert("bowl".into(), SimObject::Body(FreeBody::new(body_at(bowl_at, 0.0), None, BodyKind::Container(bowl))));
                params.secondary = Some("bowl".into());
                params.receiver_start_fill = 0.0;
                params.pour_fraction = 0.3;
                "cup"
            }
            Skill::Stir => {
                let pot = Container { fill: 0.5, radius: 0.1, height: 0.12, spout: Vec3::new(0.1, 0.0, 0.12) };
                objects.insert("pot".into(), SimObject::Body(FreeBody::new(body_at(p(&mut rng, 0.55, 0.1), 0.0), None, BodyKind::Container(pot))));
                let spoon_at = p(&mut rng, 0.45, -0.15) + Vec3::Z * 0.02;
                objects.insert("spoon".into(), SimObject::Body(FreeBody::new(body_at(spoon_at, 0.0), Some(top_grasp(0.22)), BodyKind::Stirrer)));
                params.secondary = Some("pot".into());
                "spoon"
            }
            Skill::Cut => {
                let food = Food { radius: 0.04, height: 0.05, cut: false };
                objects.insert("food".into(), SimObject::Body(FreeBody::new(body_at(p(&mut rng, 0.55, 0.1), 0.0), None, BodyKind::Food(food))));
                let knife_at = p(&mut rng, 0.45, -0.15) + Vec3::Z * 0.02;
                objects.insert("knife".into(), SimObject::Body(FreeBody::new(body_at(knife_at, 0.0), Some(top_grasp(0.18)), BodyKind::Knife)));
                params.secondary = Some("food".into());
                "knife"
            }
            _ => unreachable!("articulation skills handled above"),
        };
        let grasp = match &objects[target] {
            SimObject::Body(b) => b.grasp_pose().expect("target bodies are graspable"),
            SimObject::Articulated(a) => a.handle_pose(),
        };
        let start = grasp.translation()
            + Vec3::new(uniform(&mut rng, (-0.25, -0.15)), uniform(&mut rng, (-0.1, 0.1)), uniform(&mut rng, (0.15, 0.3)));
        let jitter = rot_z(uniform(&mut rng, (-0.3, 0.3)));
        (target, RigidTransform::from_parts(jitter.mul_mat(grasp.rotation()), start))
    };

    let scene = SimScene::new(objects, gripper_pose, seed);
    let task = TaskSpec { skill, target: String::from(target), params };
    (scene, task)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for skill in Skill::ALL {
            assert_eq!(random_scene(skill, 11), random_scene(skill, 11));
            assert_ne!(random_scene(skill, 11).0, random_scene(skill, 12).0);
        }
    }

    #[test]
    fn tasks_validate_and_start_unsolved() {
        for skill in Skill::ALL {
            for seed in 0..10 {
                let (scene, task) = random_scene(skill, seed);
                task.validate(&scene).unwrap();
                assert!(!scene.success(&task), "{skill} seed {seed} starts solved");
            }
        }
    }

    #[test]
    fn both_hinge_sides_occur() {
        let sides: alloc::vec::Vec<f64> = (0..20)
            .map(|s| match random_scene(Skill::HingeOpen, s).0.articulation("door").unwrap().joint {
                Joint::Revolute { axis, .. } => axis.z,
                Joint::Prismatic { .. } => 0.0,
            })
            .collect();
        assert!(sides.contains(&1.0) && sides.contains(&-1.0));
    }
}
