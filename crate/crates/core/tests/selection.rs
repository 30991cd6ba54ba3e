use proptest::prelude::*;
use wristpipe_core::codec::{decode_chunk, encode_chunk, ActionMode, Encoding};
use wristpipe_core::dataset::TrainingSample;
use wristpipe_core::grasp::{plan_linear_approach, select_grasp, AffordancePoint, GraspCandidate, GraspError, SelectionMode};
use wristpipe_core::math::Vec3;
use wristpipe_core::policy::{Policy, PolicyQuery, RetrievalIndex, RetrievalWeights};
use wristpipe_core::se3::{EulerZyx, Pose6D, RigidTransform};

const D: usize = 4;

/// Coarse values so exact score ties are common.
fn coarse() -> impl Strategy<Value = f64> {
    (-2i32..=2).prop_map(|v| v as f64 * 0.5)
}

fn coarse_pose() -> impl Strategy<Value = Pose6D> {
    (coarse(), coarse(), coarse(), -2i32..=2).prop_map(|(x, y, z, yaw)| {
        Pose6D::new(Vec3::new(x, y, z + 2.0), EulerZyx::new(yaw as f64 * 0.3, 0.0, 0.0))
    })
}

fn sample(obs: Vec<f64>, goal: Vec<f64>, pose: Pose6D, mode: ActionMode) -> TrainingSample {
    let step = RigidTransform::from_rotvec(Vec3::new(0.01, -0.02, 0.005), Vec3::new(0.0, 0.02, 0.05));
    let mut cur = pose.to_transform();
    let mut window = vec![pose];
    for _ in 0..5 {
        cur = cur.compose(&step);
        window.push(cur.to_pose());
    }
    let chunk = encode_chunk(&window, 5, mode).unwrap();
    TrainingSample { clip_id: "c".into(), frame_id: 0, obs_feature: obs, goal_feature: goal, current_pose: pose, chunk }
}

fn feature() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(coarse(), D)
}

fn dataset(mode: ActionMode) -> impl Strategy<Value = Vec<TrainingSample>> {
    prop::collection::vec((feature(), feature(), coarse_pose()), 1..40)
        .prop_map(move |v| v.into_iter().map(|(o, g, p)| sample(o, g, p, mode)).collect())
}

fn query() -> impl Strategy<Value = PolicyQuery> {
    (feature(), feature(), coarse_pose())
        .prop_map(|(obs_feature, goal_feature, current_pose)| PolicyQuery { obs_feature, goal_feature, current_pose })
}

fn weights() -> impl Strategy<Value = RetrievalWeights> {
    (0i32..3, 0i32..3, 0i32..3).prop_map(|(o, g, p)| RetrievalWeights { obs: o as f64, goal: g as f64, pose: p as f64 })
}

/// Independent scoring: the pose term uses the rotation angle of `R_a^T R_b` via the trace.
fn brute_force(samples: &[TrainingSample], q: &PolicyQuery, w: RetrievalWeights, pose_scale: f64) -> usize {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let scores: Vec<f64> = samples
        .iter()
        .map(|s| {
            let dt = (q.current_pose.translation() - s.current_pose.translation()).norm();
            let rel = q.current_pose.rotation_matrix().transpose().mul_mat(&s.current_pose.rotation_matrix());
            let dr = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            w.obs * sq(&q.obs_feature, &s.obs_feature)
                + w.goal * sq(&q.goal_feature, &s.goal_feature)
                + w.pose * (dt * dt + (pose_scale * dr).powi(2))
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    scores.iter().position(|s| *s == best).unwrap()
}

fn candidate() -> impl Strategy<Value = GraspCandidate> {
    (coarse(), coarse(), 0i32..=10).prop_map(|(x, y, s)| GraspCandidate {
        pose_cam: Pose6D::new(Vec3::new(x, y, 1.0), EulerZyx::default()),
        score: s as f64 / 10.0,
        width: 0.04,
    })
}

fn affordance() -> impl Strategy<Value = AffordancePoint> {
    (coarse(), coarse()).prop_map(|(x, y)| AffordancePoint {
        pixel: (0.0, 0.0),
        depth: 1.0,
        point3d_cam: Vec3::new(x, y, 1.0),
        task_text: "open".into(),
    })
}

/// Sort-based oracle for the fused ordering: distance up, score down, index up.
fn fused_oracle(aff: &AffordancePoint, cands: &[GraspCandidate], threshold: f64) -> Option<usize> {
    let mut keyed: Vec<(f64, f64, usize)> = cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.score >= threshold)
        .map(|(i, c)| ((c.pose_cam.translation() - aff.point3d_cam).norm(), -c.score, i))
        .collect();
    keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keyed.first().map(|k| k.2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn retrieval_matches_brute_force(ds in dataset(ActionMode::REL_T_REL_O), q in query(), w in weights()) {
        prop_assume!(w.obs + w.goal + w.pose > 0.0);
        let index = RetrievalIndex::fit(ds.clone(), w, 0.1).unwrap();
        let expected = brute_force(&ds, &q, w, 0.1);
        prop_assert_eq!(index.nearest(&q).unwrap(), expected);
        let again = RetrievalIndex::fit(ds, w, 0.1).unwrap();
        prop_assert_eq!(index.predict(&q).unwrap(), again.predict(&q).unwrap());
        prop_assert_eq!(index.predict(&q).unwrap(), index.predict(&q).unwrap());
    }

    #[test]
    fn relative_prediction_starts_at_query(ds in dataset(ActionMode::REL_T_REL_O), q in query()) {
        let index = RetrievalIndex::fit(ds, RetrievalWeights::default(), 0.1).unwrap();
        let chunk = index.predict(&q).unwrap();
        prop_assert_eq!(chunk.base_pose, q.current_pose);
        let stored = &index.samples()[index.nearest(&q).unwrap()].chunk;
        prop_assert_eq!(&chunk.actions, &stored.actions);
    }

    #[test]
    fn rebased_prediction_follows_component_rules(m in prop::sample::select(ActionMode::ALL.to_vec()),
                                                   ds in dataset(ActionMode::ABS_T_ABS_O), q in query()) {
        // Absolute translations move rigidly with the base; relative ones keep their camera-frame
        // displacement. Orientation ends up rigidly moved either way.
        let ds: Vec<TrainingSample> = ds.into_iter()
            .map(|s| { let mut w = vec![s.current_pose]; w.extend(decode_chunk(&s.chunk));
                       TrainingSample { chunk: encode_chunk(&w, 5, m).unwrap(), ..s } })
            .collect();
        let index = RetrievalIndex::fit(ds, RetrievalWeights::default(), 0.1).unwrap();
        let stored = &index.samples()[index.nearest(&q).unwrap()];
        let shift = q.current_pose.to_transform().compose(&stored.current_pose.to_transform().invert());
        for (got, orig) in decode_chunk(&index.predict(&q).unwrap()).iter().zip(decode_chunk(&stored.chunk)) {
            let t = match m.translation {
                Encoding::Absolute => shift.transform_point(orig.translation()),
                Encoding::Relative => q.current_pose.translation() + (orig.translation() - stored.current_pose.translation()),
            };
            let r = shift.rotation().mul_mat(&orig.rotation_matrix());
            prop_assert!((got.translation() - t).norm() < 1e-9);
            prop_assert!(got.rotation_matrix().max_abs_diff(&r) < 1e-9);
        }
    }

    #[test]
    fn fused_selection_matches_oracle(aff in affordance(), cands in prop::collection::vec(candidate(), 0..12),
                                      threshold in 0i32..=10) {
        let threshold = threshold as f64 / 10.0;
        let got = select_grasp(&aff, &cands, SelectionMode::AffordanceFused, threshold, EulerZyx::default());
        match fused_oracle(&aff, &cands, threshold) {
            Some(i) => prop_assert_eq!(got.unwrap(), cands[i].pose_cam),
            None => prop_assert_eq!(got.unwrap_err(), GraspError::NoViableGrasp),
        }
    }

    #[test]
    fn best_score_selection_matches_oracle(aff in affordance(), cands in prop::collection::vec(candidate(), 0..12)) {
        let got = select_grasp(&aff, &cands, SelectionMode::BestScoreOnly, 0.2, EulerZyx::default());
        let best = cands.iter().enumerate().filter(|(_, c)| c.score >= 0.2)
            .fold(None::<(usize, f64)>, |acc, (i, c)| match acc { Some((_, s)) if s >= c.score => acc, _ => Some((i, c.score)) });
        match best {
            Some((i, _)) => prop_assert_eq!(got.unwrap(), cands[i].pose_cam),
            None => prop_assert_eq!(got.unwrap_err(), GraspError::NoViableGrasp),
        }
    }

    #[test]
    fn selection_ignores_order_without_ties(aff in affordance(),
                                            cands in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64), 1..12),
                                            seed in any::<u64>()) {
        let cands: Vec<GraspCandidate> = cands.into_iter()
            .map(|(x, y, s)| GraspCandidate { pose_cam: Pose6D::new(Vec3::new(x, y, 1.0), EulerZyx::default()), score: s, width: 0.04 })
            .collect();
        let mut shuffled = cands.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        for mode in [SelectionMode::AffordanceFused, SelectionMode::BestScoreOnly] {
            let a = select_grasp(&aff, &cands, mode, 0.2, EulerZyx::default());
            let b = select_grasp(&aff, &shuffled, mode, 0.2, EulerZyx::default());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn approach_is_collinear_and_monotone(t in (-1.0..1.0f64, -1.0..1.0f64, 0.2..2.0f64),
                                          e in (-3.0..3.0f64, -1.5..1.5f64, -3.0..3.0f64),
                                          standoff in 0.01..0.3f64, step in 0.002..0.05f64) {
        let grasp = Pose6D::new(Vec3::new(t.0, t.1, t.2), EulerZyx::new(e.0, e.1, e.2));
        let w = plan_linear_approach(&grasp, standoff, step).unwrap();
        let axis = grasp.rotation_matrix().col(2);
        prop_assert_eq!(w.last().unwrap(), &grasp);
        let mut last_retreat = f64::INFINITY;
        for p in &w {
            let off = grasp.translation() - p.translation();
            let retreat = off.dot(axis);
            prop_assert!((off - axis * retreat).norm() < 1e-9);
            prop_assert!(retreat < last_retreat);
            prop_assert!(retreat <= standoff + 1e-9);
            last_retreat = retreat;
        }
        prop_assert!((w[0].translation() - grasp.translation()).norm() - standoff < 1e-9);
        for pair in w.windows(2) {
            prop_assert!((pair[1].translation() - pair[0].translation()).norm() <= step + 1e-9);
        }
    }
}
