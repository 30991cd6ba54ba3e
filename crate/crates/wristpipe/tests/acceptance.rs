//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest harness
//! so the lines always reach the output; any failure makes the target fail.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wristpipe::formats::{parse_trials, ByClip};
use wristpipe::pipeline::{self, compare_trajectories, synth, translation_rmse};
use wristpipe_core::codec::{decode_chunk, encode_chunk, ActionChunk, ActionMode, Encoding};
use wristpipe_core::dataset::Skill;
use wristpipe_core::egolift::{reexpress_window, WristTrajectory};
use wristpipe_core::executor::{run_episode, Calibration, EpisodeConfig, GraspPhase};
use wristpipe_core::grasp::{select_grasp, AffordancePoint, GraspCandidate, GraspError, SelectionMode};
use wristpipe_core::math::Vec3;
use wristpipe_core::policy::{Policy, PolicyError, PolicyQuery, RetrievalIndex};
use wristpipe_core::se3::{euler_to_matrix, EulerZyx, Pose6D, RigidTransform};
use wristpipe_core::sim::{
    eval_camera, goal_feature, grasp_proposals, random_scene, replay, scripted_demo, DetectionNoise,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

const SLIDES: [Skill; 2] = [Skill::SlideOpen, Skill::SlideClose];

fn zero_noise_clips() -> pipeline::SynthOutput {
    // 25 demos of each articulation skill: 100 clips, head camera sways, hand moves.
    synth(&Skill::ARTICULATION, 25, DetectionNoise::NONE, 11).expect("scripted demos render")
}

fn lifting_round_trip() -> Outcome {
    let start = Instant::now();
    let s = zero_noise_clips();
    let (trajs, summary) = pipeline::extract(&s.detections, &s.cameras, 0.5, 5).map_err(|e| e.to_string())?;
    let (dt, dr, n) = compare_trajectories(&trajs, &s.truth)?;
    let elapsed = start.elapsed();
    let detail = format!("{} clips, {n} poses, max error {dt:.2e} m / {dr:.2e} rad, {elapsed:.2?}", summary.clips);
    check(summary.clips == 100 && dt < 1e-9 && dr < 1e-9 && elapsed < Duration::from_secs(10), detail.clone(), detail)
}

fn reexpression_identity() -> Outcome {
    let s = zero_noise_clips();
    let (trajs, _) = pipeline::extract(&s.detections, &s.cameras, 0.5, 5).map_err(|e| e.to_string())?;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for (clip, ts) in &trajs {
        let dets = &s.detections[clip];
        let cams = &s.cameras[clip];
        for t in ts {
            for (i, (frame, _)) in t.poses.iter().enumerate() {
                if i + 10 >= t.poses.len() {
                    break;
                }
                let Some(det) = dets.iter().find(|d| d.frame_id == *frame) else { continue };
                let w = reexpress_window(t, cams, i, 10).map_err(|e| e.to_string())?;
                let (a, b) = w[0].error_to(&det.wrist_pose_cam);
                worst = worst.max(a).max(b);
                checked += 1;
            }
        }
    }
    let detail = format!("{checked} windows over {} clips, max error {worst:.2e}", trajs.len());
    check(checked > 0 && worst < 1e-9, detail.clone(), detail)
}

fn random_transform(rng: &mut ChaCha8Rng, reach: f64) -> RigidTransform {
    let t = Vec3::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach), rng.random_range(-reach..reach));
    let e = EulerZyx::new(rng.random_range(-3.1..3.1), rng.random_range(-1.5..1.5), rng.random_range(-3.1..3.1));
    RigidTransform::from_euler(t, e)
}

fn random_window(rng: &mut ChaCha8Rng, n: usize) -> Vec<Pose6D> {
    let mut cur = random_transform(rng, 1.0);
    let mut out = vec![cur.to_pose()];
    for _ in 0..n {
        let step = RigidTransform::from_euler(
            Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
            EulerZyx::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
        );
        cur = cur.compose(&step);
        out.push(cur.to_pose());
    }
    out
}

fn codec_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut gauge_worst) = (0.0f64, 0.0f64);
    let mut abs_t_changed = 0usize;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let w = random_window(&mut rng, n);
        for mode in ActionMode::ALL {
            let chunk = encode_chunk(&w, n, mode).map_err(|e| e.to_string())?;
            for (a, b) in decode_chunk(&chunk).iter().zip(&w[1..]) {
                let (dt, dr) = a.error_to(b);
                worst = worst.max(dt).max(dr);
            }
        }
        let g = random_transform(&mut rng, 2.0);
        let moved: Vec<Pose6D> = w.iter().map(|p| g.compose(&p.to_transform()).to_pose()).collect();
        let rel = |c: &ActionChunk| -> Vec<(f64, f64)> {
            c.actions
                .iter()
                .map(|x| {
                    let angle = euler_to_matrix(EulerZyx::new(x[3], x[4], x[5])).rotation_angle();
                    (Vec3::new(x[0], x[1], x[2]).norm(), angle)
                })
                .collect()
        };
        let a = encode_chunk(&w, n, ActionMode::REL_T_REL_O).map_err(|e| e.to_string())?;
        let b = encode_chunk(&moved, n, ActionMode::REL_T_REL_O).map_err(|e| e.to_string())?;
        for (x, y) in rel(&a).iter().zip(&rel(&b)) {
            gauge_worst = gauge_worst.max((x.0 - y.0).abs()).max((x.1 - y.1).abs());
        }
        let abs = ActionMode::new(Encoding::Absolute, Encoding::Relative);
        let a = encode_chunk(&w, n, abs).map_err(|e| e.to_string())?;
        let b = encode_chunk(&moved, n, abs).map_err(|e| e.to_string())?;
        let moved_far = a.actions.iter().zip(&b.actions).any(|(x, y)| (0..3).any(|k| (x[k] - y[k]).abs() > 1e-6));
        abs_t_changed += usize::from(moved_far);
    }
    let detail = format!(
        "1000 windows x 4 modes, max round-trip error {worst:.2e}; relT+relO gauge drift {gauge_worst:.2e}; absT changed in {abs_t_changed}/1000"
    );
    check(worst < 1e-9 && gauge_worst < 1e-9 && abs_t_changed == 1000, detail.clone(), detail)
}

/// Exhaustive scan: smallest (distance, -score, index) for the fused mode, smallest (-score, index) otherwise.
fn scan(aff: &AffordancePoint, cands: &[GraspCandidate], mode: SelectionMode, threshold: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if c.score < threshold {
            continue;
        }
        let better = match best {
            None => true,
            Some(j) => {
                let b = &cands[j];
                match mode {
                    SelectionMode::AffordanceFused => {
                        let dc = (c.pose_cam.translation() - aff.point3d_cam).norm();
                        let db = (b.pose_cam.translation() - aff.point3d_cam).norm();
                        dc < db || (dc == db && c.score > b.score)
                    }
                    _ => c.score > b.score,
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn grasp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let coarse = |rng: &mut ChaCha8Rng| rng.random_range(-2i32..=2) as f64 * 0.05;
    let (mut sets, mut empty) = (0, 0);
    for _ in 0..1000 {
        let aff = AffordancePoint {
            pixel: (320.0, 240.0),
            depth: 1.0,
            point3d_cam: Vec3::new(coarse(&mut rng), coarse(&mut rng), 1.0 + coarse(&mut rng)),
            task_text: "task".into(),
        };
        let len = rng.random_range(0..10);
        let cands: Vec<GraspCandidate> = (0..len)
            .map(|_| GraspCandidate {
                pose_cam: Pose6D::new(
                    Vec3::new(coarse(&mut rng), coarse(&mut rng), 1.0 + coarse(&mut rng)),
                    EulerZyx::new(rng.random_range(-1.0..1.0), 0.0, 0.0),
                ),
                score: rng.random_range(0i32..=4) as f64 * 0.25,
                width: 0.05,
            })
            .collect();
        let threshold = rng.random_range(0i32..=4) as f64 * 0.25;
        for mode in [SelectionMode::AffordanceFused, SelectionMode::BestScoreOnly] {
            let got = select_grasp(&aff, &cands, mode, threshold, EulerZyx::new(0.0, 0.0, 0.0));
            match scan(&aff, &cands, mode, threshold) {
                Some(i) if got.as_ref() == Ok(&cands[i].pose_cam) => {}
                None if got == Err(GraspError::NoViableGrasp) => empty += 1,
                want => return Err(format!("{mode}: expected {want:?}, got {got:?}")),
            }
        }
        let direct = select_grasp(&aff, &cands, SelectionMode::ContactPointDirect, threshold, EulerZyx::new(0.1, 0.2, 0.3))
            .map_err(|e| e.to_string())?;
        if direct.translation() != aff.point3d_cam {
            return Err("contact_point_direct moved off the affordance point".into());
        }
        sets += 1;
    }
    Ok(format!("{sets} candidate sets, exact match in every mode; {empty} empty feasible sets raised NoViableGrasp"))
}

/// Retrieval policy wrapper counting queries.
struct Counting<'a> {
    inner: &'a RetrievalIndex,
    calls: std::cell::Cell<usize>,
}

impl Policy for Counting<'_> {
    fn predict(&self, q: &PolicyQuery) -> Result<ActionChunk, PolicyError> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(q)
    }
}

fn small_index(skill: Skill, demos: usize) -> Result<RetrievalIndex, String> {
    let s = synth(&[skill], demos, DetectionNoise::NONE, 21).map_err(|e| e.to_string())?;
    let (trajs, _) = pipeline::extract(&s.detections, &s.cameras, 0.5, 5).map_err(|e| e.to_string())?;
    let sets = pipeline::build(
        &trajs,
        &s.cameras,
        &s.features,
        &s.annotations,
        &Default::default(),
        10,
        ActionMode::REL_T_REL_O,
        1,
    )
    .map_err(|e| e.to_string())?;
    pipeline::fit(&sets[&skill], Default::default(), 0.1).map_err(|e| e.to_string())
}

fn chunk_loop_contract() -> Outcome {
    let mut episodes = 0;
    for (k, skill) in Skill::ARTICULATION.into_iter().enumerate() {
        let index = small_index(skill, 5)?;
        for i in 0..25u64 {
            let n = 10;
            let seed = 500 + 25 * k as u64 + i;
            let (scene, task) = random_scene(skill, seed);
            let cam = eval_camera(&scene, &task, seed);
            let calib = Calibration::from_extrinsic(&cam.extrinsic_world_to_cam);
            let goal = goal_feature(&scene, &task, &cam.extrinsic_world_to_cam).map_err(|e| e.to_string())?;
            let phase = GraspPhase::new(grasp_proposals(&scene, &task, &cam, seed).map_err(|e| e.to_string())?, SelectionMode::AffordanceFused);
            let policy = Counting { inner: &index, calls: Default::default() };
            // Short budgets on odd episodes force runs that end on the budget.
            let budget = if i % 2 == 1 { 10 * (1 + i as usize % 4) } else { 200 };
            let cfg = EpisodeConfig { budget, chunk_size: n, record_states: false };
            let r = run_episode(&policy, scene, &task, &calib, &goal, &cfg, Some(&phase)).map_err(|e| e.to_string())?;
            let env_steps = r.final_scene.steps as usize - r.grasp_steps;
            let calls = policy.calls.get();
            let spacing_ok = r.query_steps.windows(2).all(|p| p[1] - p[0] == n) && r.query_steps.first().is_none_or(|s| *s == 0);
            let count_ok = if r.success {
                env_steps <= calls * n && env_steps + n > calls * n
            } else {
                env_steps == calls * n && env_steps == budget
            };
            if !(spacing_ok && count_ok && env_steps == r.steps && calls == r.inference_calls && r.steps <= budget) {
                return Err(format!(
                    "{skill} seed {seed}: {env_steps} env steps, {calls} queries, success {} (query steps {:?})",
                    r.success, r.query_steps
                ));
            }
            episodes += 1;
        }
    }
    Ok(format!("{episodes} episodes, n = 10 environment steps between every pair of queries"))
}

fn scripted_closed_loop() -> Outcome {
    let start = Instant::now();
    let mut ok = 0;
    for skill in Skill::ARTICULATION {
        for seed in 0..20 {
            let (scene, task) = random_scene(skill, 9000 + seed);
            let demo = scripted_demo(&task, &scene).map_err(|e| e.to_string())?;
            let states = replay(&scene, &demo);
            ok += usize::from(states.last().is_some_and(|s| s.success(&task)));
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{ok}/80 scripted demos succeed, {elapsed:.2?}");
    check(ok == 80 && elapsed < Duration::from_secs(30), detail.clone(), detail)
}

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_wristpipe"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("wristpipe {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// synth, extract, build, fit and eval through the command line. Returns the
/// work directory and the index arguments.
fn end_to_end_setup(dir: &Path) -> Result<Vec<String>, String> {
    cli(dir, &["--seed", "2024", "--set", "demos=50", "--set", "noise_translation=0.005", "--set", "dropout=0.1", "synth", "--skills", "articulation"])?;
    cli(dir, &["extract", "--detections", &p(dir, "detections.txt"), "--cameras", &p(dir, "cameras.txt")])?;
    cli(
        dir,
        &[
            "build",
            "--trajectories",
            &p(dir, "trajectories.txt"),
            "--cameras",
            &p(dir, "cameras.txt"),
            "--features",
            &p(dir, "features.txt"),
            "--annotations",
            &p(dir, "annotations.txt"),
        ],
    )?;
    let mut fit = vec!["fit".to_string()];
    let mut index = Vec::new();
    for skill in Skill::ARTICULATION {
        fit.extend(["--dataset".into(), p(dir, &format!("{skill}.dataset"))]);
        index.extend(["--index".into(), p(dir, &format!("{skill}.index"))]);
    }
    cli(dir, &fit.iter().map(String::as_str).collect::<Vec<_>>())?;
    Ok(index)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let index = end_to_end_setup(dir)?;
    let mut args = vec!["--seed", "2024", "eval", "--trials", "20"];
    args.extend(index.iter().map(String::as_str));
    cli(dir, &args)?;
    let trials = parse_trials("trials.txt", &std::fs::read_to_string(dir.join("trials.txt")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut pass = elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for s in pipeline::summarize(&trials) {
        let target = if SLIDES.contains(&s.skill) { 0.8 } else { 0.7 };
        pass &= s.trials == 20 && s.rate() >= target;
        parts.push(format!("{} {}/{} (target {})", s.skill, s.successes, s.trials, pipeline::percent(target)));
    }
    pass &= parts.len() == 4;
    let detail = format!("{}, {elapsed:.2?}", parts.join(", "));
    check(pass, detail.clone(), detail)
}

fn noise_recovery() -> Outcome {
    let noise = DetectionNoise { translation_std: 0.005, rotation_std: 0.0, dropout: 0.0 };
    let s = synth(&Skill::ARTICULATION, 25, noise, 13).map_err(|e| e.to_string())?;
    let (trajs, summary): (ByClip<WristTrajectory>, _) =
        pipeline::extract(&s.detections, &s.cameras, 0.5, 5).map_err(|e| e.to_string())?;
    let rmse = translation_rmse(&trajs, &s.truth);
    let detail = format!("{} clips, per-coordinate translation RMSE {:.3} mm", summary.clips, rmse * 1e3);
    check(summary.clips == 100 && (0.003..=0.008).contains(&rmse), detail.clone(), detail)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let index = end_to_end_setup(dir)?;
    let mut outputs = Vec::new();
    for (run, threads) in ["1", "1", "4", "7"].iter().enumerate() {
        let sub = dir.join(format!("run{run}"));
        let mut args = vec!["--seed", "77", "eval", "--trials", "6", "--threads", threads];
        args.extend(index.iter().map(String::as_str));
        cli(&sub, &args)?;
        outputs.push(std::fs::read(sub.join("trials.txt")).map_err(|e| e.to_string())?);
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    let detail = format!("trial records of 4 runs (threads 1, 1, 4, 7), {} bytes each, identical: {same}", outputs[0].len());
    check(same && !outputs[0].is_empty(), detail.clone(), detail)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("lifting round trip", lifting_round_trip),
        ("re-expression identity", reexpression_identity),
        ("action codec round trip and gauge", codec_round_trip),
        ("grasp selection oracle", grasp_oracle),
        ("chunk loop contract", chunk_loop_contract),
        ("scripted demo closed loop", scripted_closed_loop),
        ("end-to-end from synthetic video", end_to_end),
        ("noise recovery", noise_recovery),
        ("evaluation determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
