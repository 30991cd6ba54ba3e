use proptest::prelude::*;

use wristpipe::formats::*;
use wristpipe_core::codec::{encode_chunk, ActionMode};
use wristpipe_core::dataset::{Skill, TrainingSample};
use wristpipe_core::egolift::{HandDetection, WristTrajectory};
use wristpipe_core::math::Vec3;
use wristpipe_core::se3::{EulerZyx, Pose6D};

fn pose() -> impl Strategy<Value = Pose6D> {
    (prop::array::uniform3(-5.0..5.0f64), -3.0..3.0f64, -1.5..1.5f64, -3.0..3.0f64)
        .prop_map(|(t, a, b, g)| Pose6D::new(Vec3::new(t[0], t[1], t[2]), EulerZyx::new(a, b, g)))
}

/// One trajectory: frame steps and interpolation flags; gaps are the maximal flagged runs.
fn trajectory(clip: String) -> impl Strategy<Value = WristTrajectory> {
    prop::collection::vec((1u64..4, any::<bool>(), pose()), 1..30).prop_map(move |steps| {
        let mut frame = 0;
        let mut poses = Vec::new();
        let mut gaps: Vec<(u64, u64)> = Vec::new();
        let mut prev_interp = false;
        for (i, (df, interp, p)) in steps.into_iter().enumerate() {
            frame += df;
            // Ends are always observed.
            let interp = interp && i > 0;
            if interp {
                match gaps.last_mut() {
                    Some(g) if prev_interp => g.1 = frame,
                    _ => gaps.push((frame, frame)),
                }
            }
            prev_interp = interp;
            poses.push((frame, p));
        }
        WristTrajectory { clip_id: clip.clone(), poses, source_gaps: gaps }
    })
}

fn by_clip() -> impl Strategy<Value = ByClip<WristTrajectory>> {
    prop::collection::btree_map("[a-z]{1,6}", 1..4usize, 1..4).prop_flat_map(|m| {
        m.into_iter()
            .map(|(clip, segs)| prop::collection::vec(trajectory(clip.clone()), segs).prop_map(move |v| (clip.clone(), v)))
            .collect::<Vec<_>>()
            .prop_map(|v| v.into_iter().collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trajectories_round_trip(t in by_clip()) {
        let text = write_trajectories(&t);
        prop_assert_eq!(parse_trajectories("t", &text).unwrap(), t);
    }

    #[test]
    fn detections_round_trip(dets in prop::collection::vec((pose(), 0.0..=1.0f64), 1..20)) {
        let mut m = ByClip::new();
        m.insert("clip".to_string(), dets.into_iter().enumerate()
            .map(|(i, (p, c))| HandDetection { frame_id: i as u64 * 2, wrist_pose_cam: p, confidence: c })
            .collect::<Vec<_>>());
        prop_assert_eq!(parse_detections("d", &write_detections(&m)).unwrap(), m);
    }

    #[test]
    fn datasets_round_trip(windows in prop::collection::vec(prop::collection::vec(pose(), 4), 1..6),
                           feats in prop::collection::vec(-1.0..1.0f64, 3),
                           mode in prop::sample::select(ActionMode::ALL.to_vec())) {
        let samples: Vec<TrainingSample> = windows.iter().enumerate().map(|(i, w)| TrainingSample {
            clip_id: format!("c{i}"),
            frame_id: i as u64,
            obs_feature: feats.clone(),
            goal_feature: feats.iter().map(|x| -x).collect(),
            current_pose: w[0],
            chunk: encode_chunk(w, 3, mode).unwrap(),
        }).collect();
        let ds = Dataset { feature_dim: 3, chunk_size: 3, mode, samples };
        prop_assert_eq!(parse_dataset("ds", &write_dataset(&ds)).unwrap(), ds);
    }

    #[test]
    fn trials_round_trip(rows in prop::collection::vec((0usize..9, any::<u64>(), any::<bool>(), 0usize..300, any::<bool>()), 0..20)) {
        let recs: Vec<TrialRecord> = rows.into_iter().enumerate().map(|(i, (k, seed, success, steps, grasped))| TrialRecord {
            skill: Skill::ALL[k], trial: i, seed, success, steps, inference_calls: steps / 10, grasp_steps: 12, grasped,
        }).collect();
        prop_assert_eq!(parse_trials("t", &write_trials(&recs)).unwrap(), recs);
    }
}

#[test]
fn dataset_version_is_checked() {
    let ds = Dataset { feature_dim: 1, chunk_size: 1, mode: ActionMode::REL_T_REL_O, samples: Vec::new() };
    let text = write_dataset(&ds).replacen(&format!(" {DATASET_VERSION} "), " 99 ", 1);
    let err = parse_dataset("ds", &text).unwrap_err();
    assert!(matches!(err, wristpipe::records::FormatError::FormatVersionMismatch { found: 99, .. }), "{err}");
}
