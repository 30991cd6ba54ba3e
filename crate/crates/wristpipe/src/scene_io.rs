//! Scene description files and per-step rollout logs.
//!
//! A scene file describes an initial scene (gripper open, nothing held) and
//! its task. Rigid transforms are written as `qw qx qy qz tx ty tz`.
//!
//! ```text
//! wristpipe-scene 1
//! seed 42
//! gripper <transform>
//! prismatic drawer axis 1 0 0 range 0 0.3 q 0 handle <transform>
//! revolute door axis 0 0 1 pivot 0.6 0.2 0.4 range 0 1.5 q 0 handle <transform>
//! body cup container pose <transform> grasp <transform|none> fill 0.8 radius 0.04 height 0.12 spout 0.04 0 0.12
//! task pour cup secondary=bowl open_fraction=0.9 ...
//! ```

use std::collections::BTreeMap;

use wristpipe_core::math::Vec3;
use wristpipe_core::se3::RigidTransform;
use wristpipe_core::sim::{
    Articulation, BodyKind, Container, Food, FreeBody, Joint, SimObject, SimScene, SuccessParams, TaskSpec,
};

use crate::records::{lines, FormatError, Line, Record};

pub const SCENE_VERSION: u32 = 1;
const SCENE_MAGIC: &str = "wristpipe-scene";

fn push_transform(r: &mut Record, t: &RigidTransform) {
    r.floats(&t.quaternion()).floats(&t.translation().to_array());
}

fn transform(line: &mut Line<'_>) -> Result<RigidTransform, FormatError> {
    let q: [f64; 4] = line.floats("quaternion")?;
    let t: [f64; 3] = line.floats("translation")?;
    RigidTransform::from_quaternion(q, Vec3::from_array(t)).map_err(|e| line.error(e))
}

fn vec3(line: &mut Line<'_>) -> Result<Vec3, FormatError> {
    Ok(Vec3::from_array(line.floats("vector")?))
}

fn expect(line: &mut Line<'_>, word: &str) -> Result<(), FormatError> {
    let w = line.word(word)?;
    if w == word {
        Ok(())
    } else {
        Err(line.error(format_args!("expected {word:?}, found {w:?}")))
    }
}

pub fn write_scene(scene: &SimScene, task: &TaskSpec) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    r.push(SCENE_MAGIC).push(SCENE_VERSION).line(&mut out);
    r.push("seed").push(scene.rng_seed).line(&mut out);
    r.push("gripper");
    push_transform(&mut r, &scene.gripper.pose);
    r.line(&mut out);
    for (id, obj) in &scene.objects {
        match obj {
            SimObject::Articulated(a) => {
                match a.joint {
                    Joint::Prismatic { axis } => r.push("prismatic").push(id).push("axis").floats(&axis.to_array()),
                    Joint::Revolute { axis, pivot } => r
                        .push("revolute")
                        .push(id)
                        .push("axis")
                        .floats(&axis.to_array())
                        .push("pivot")
                        .floats(&pivot.to_array()),
                };
                r.push("range").push(a.q_min).push(a.q_max).push("q").push(a.q).push("handle");
                push_transform(&mut r, &a.handle_rest);
            }
            SimObject::Body(b) => {
                let kind = match b.kind {
                    BodyKind::Item => "item",
                    BodyKind::Container(_) => "container",
                    BodyKind::Knife => "knife",
                    BodyKind::Stirrer => "stirrer",
                    BodyKind::Food(_) => "food",
                };
                r.push("body").push(id).push(kind).push("pose");
                push_transform(&mut r, &b.pose);
                r.push("grasp");
                match &b.grasp {
                    Some(g) => push_transform(&mut r, g),
                    None => {
                        r.push("none");
                    }
                }
                match b.kind {
                    BodyKind::Container(c) => {
                        r.push("fill").push(c.fill).push("radius").push(c.radius).push("height").push(c.height);
                        r.push("spout").floats(&c.spout.to_array());
                    }
                    BodyKind::Food(f) => {
                        r.push("radius").push(f.radius).push("height").push(f.height).push("cut").push(u8::from(f.cut));
                    }
                    _ => {}
                }
            }
        }
        r.line(&mut out);
    }
    let p = &task.params;
    r.push("task")
        .push(task.skill)
        .push(&task.target)
        .keyed("secondary", p.secondary.as_deref().unwrap_or("-"))
        .keyed("open_fraction", p.open_fraction)
        .keyed("close_fraction", p.close_fraction)
        .keyed("lift_height", p.lift_height)
        .keyed("place_x", p.place_target.x)
        .keyed("place_y", p.place_target.y)
        .keyed("place_z", p.place_target.z)
        .keyed("place_tolerance", p.place_tolerance)
        .keyed("pour_fraction", p.pour_fraction)
        .keyed("receiver_start_fill", p.receiver_start_fill)
        .keyed("stir_angle", p.stir_angle)
        .keyed("stir_excursion", p.stir_excursion)
        .line(&mut out);
    out
}

pub fn parse_scene(path: &str, text: &str) -> Result<(SimScene, TaskSpec), FormatError> {
    let mut it = lines(path, text);
    let missing = |what: &str| FormatError::Parse { path: path.into(), line: 1, message: format!("missing {what}") };
    let mut header = it.next().ok_or_else(|| missing("scene header"))?;
    if header.word("magic")? != SCENE_MAGIC {
        return Err(header.error("not a scene file"));
    }
    let version: u32 = header.parse("version")?;
    if version != SCENE_VERSION {
        return Err(FormatError::FormatVersionMismatch { path: path.into(), what: "scene", found: version, expected: SCENE_VERSION });
    }
    let mut seed = None;
    let mut gripper = None;
    let mut task = None;
    let mut objects = BTreeMap::new();
    for mut line in it {
        match line.word("record kind")? {
            "seed" => seed = Some(line.parse::<u64>("seed")?),
            "gripper" => gripper = Some(transform(&mut line)?),
            "prismatic" | "revolute" => {
                let revolute = line.text.starts_with("revolute");
                let id = line.word("id")?.to_string();
                expect(&mut line, "axis")?;
                let axis = vec3(&mut line)?;
                let joint = if revolute {
                    expect(&mut line, "pivot")?;
                    Joint::Revolute { axis, pivot: vec3(&mut line)? }
                } else {
                    Joint::Prismatic { axis }
                };
                expect(&mut line, "range")?;
                let [q_min, q_max] = line.floats("range")?;
                expect(&mut line, "q")?;
                let q = line.parse("q")?;
                expect(&mut line, "handle")?;
                let handle_rest = transform(&mut line)?;
                objects.insert(id, SimObject::Articulated(Articulation { joint, q_min, q_max, q, handle_rest }));
            }
            "body" => {
                let id = line.word("id")?.to_string();
                let kind = line.word("kind")?;
                expect(&mut line, "pose")?;
                let pose = transform(&mut line)?;
                expect(&mut line, "grasp")?;
                let grasp = if line.text.split_whitespace().nth(12) == Some("none") {
                    line.word("grasp")?;
                    None
                } else {
                    Some(transform(&mut line)?)
                };
                let kind = match kind {
                    "item" => BodyKind::Item,
                    "knife" => BodyKind::Knife,
                    "stirrer" => BodyKind::Stirrer,
                    "container" => {
                        expect(&mut line, "fill")?;
                        let fill = line.parse("fill")?;
                        expect(&mut line, "radius")?;
                        let radius = line.parse("radius")?;
                        expect(&mut line, "height")?;
                        let height = line.parse("height")?;
                        expect(&mut line, "spout")?;
                        BodyKind::Container(Container { fill, radius, height, spout: vec3(&mut line)? })
                    }
                    "food" => {
                        expect(&mut line, "radius")?;
                        let radius = line.parse("radius")?;
                        expect(&mut line, "height")?;
                        let height = line.parse("height")?;
                        expect(&mut line, "cut")?;
                        let cut: u8 = line.parse("cut")?;
                        BodyKind::Food(Food { radius, height, cut: cut == 1 })
                    }
                    other => return Err(line.error(format_args!("unknown body kind {other:?}"))),
                };
                objects.insert(id, SimObject::Body(FreeBody::new(pose, grasp, kind)));
            }
            "task" => {
                let skill: String = line.parse("skill")?;
                let skill = skill.parse().map_err(|e| line.error(e))?;
                let target = line.word("target")?.to_string();
                let secondary: String = line.keyed("secondary")?;
                let params = SuccessParams {
                    secondary: (secondary != "-").then_some(secondary),
                    open_fraction: line.keyed("open_fraction")?,
                    close_fraction: line.keyed("close_fraction")?,
                    lift_height: line.keyed("lift_height")?,
                    place_target: Vec3::new(line.keyed("place_x")?, line.keyed("place_y")?, line.keyed("place_z")?),
                    place_tolerance: line.keyed("place_tolerance")?,
                    pour_fraction: line.keyed("pour_fraction")?,
                    receiver_start_fill: line.keyed("receiver_start_fill")?,
                    stir_angle: line.keyed("stir_angle")?,
                    stir_excursion: line.keyed("stir_excursion")?,
                };
                task = Some(TaskSpec { skill, target, params });
            }
            other => return Err(line.error(format_args!("unknown record {other:?}"))),
        }
        line.finish_ref()?;
    }
    let scene = SimScene::new(objects, gripper.ok_or_else(|| missing("gripper record"))?, seed.ok_or_else(|| missing("seed record"))?);
    let task = task.ok_or_else(|| missing("task record"))?;
    task.validate(&scene).map_err(|e| FormatError::Parse { path: path.into(), line: 1, message: e.to_string() })?;
    Ok((scene, task))
}

/// One line per scene state: gripper pose, grip, joint values, fills and success.
pub fn write_rollout_log(states: &[SimScene], task: &TaskSpec) -> String {
    let mut out = String::new();
    let mut r = Record::new();
    for s in states {
        r.keyed("step", s.steps).push("gripper").floats(&s.gripper.pose.to_pose().to_array());
        r.keyed("closed", u8::from(s.gripper.closed)).keyed("attached", s.attached_id().unwrap_or("-"));
        for (id, obj) in &s.objects {
            match obj {
                SimObject::Articulated(a) => {
                    r.keyed(&format!("q:{id}"), a.q);
                }
                SimObject::Body(b) => {
                    r.push(format_args!("pose:{id}")).floats(&b.pose.to_pose().to_array());
                    if let Some(c) = b.container() {
                        r.keyed(&format!("fill:{id}"), c.fill);
                    }
                }
            }
        }
        r.keyed("success", u8::from(s.success(task))).line(&mut out);
    }
    out
}
