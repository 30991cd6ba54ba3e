use proptest::prelude::*;
use wristpipe_core::egolift::{lift_clip, reexpress_window, HandDetection};
use wristpipe_core::math::Vec3;
use wristpipe_core::se3::{CameraFrame, Intrinsics, Pose6D, RigidTransform};

#[derive(Debug)]
struct Clip {
    hand_world: Vec<RigidTransform>,
    cams: Vec<CameraFrame>,
    dets: Vec<HandDetection>,
}

fn k() -> Intrinsics {
    Intrinsics::new(600.0, 600.0, 320.0, 240.0).unwrap()
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn walk(len: usize, step_t: f64, step_r: f64) -> impl Strategy<Value = Vec<RigidTransform>> {
    (vec3(1.0), vec3(3.0), prop::collection::vec((vec3(step_t), vec3(step_r)), len - 1)).prop_map(|(t0, w0, steps)| {
        let mut cur = RigidTransform::from_rotvec(t0, w0);
        let mut out = vec![cur];
        for (dt, dw) in steps {
            cur = cur.compose(&RigidTransform::from_rotvec(dt, dw));
            out.push(cur);
        }
        out
    })
}

/// Moving camera and moving hand, frame ids starting at `first`.
fn clip(len: usize) -> impl Strategy<Value = Clip> {
    (walk(len, 0.02, 0.05), walk(len, 0.03, 0.1), 0u64..1000).prop_map(|(cam_pose, hand_world, first)| {
        let cams: Vec<CameraFrame> = cam_pose
            .iter()
            .enumerate()
            .map(|(i, c)| CameraFrame::new(first + i as u64, k(), c.invert()))
            .collect();
        let dets = cams
            .iter()
            .zip(&hand_world)
            .map(|(c, h)| HandDetection {
                frame_id: c.frame_id,
                wrist_pose_cam: c.extrinsic_world_to_cam.compose(h).to_pose(),
                confidence: 0.9,
            })
            .collect();
        Clip { hand_world, cams, dets }
    })
}

fn close(a: &Pose6D, b: &Pose6D) -> bool {
    let (dt, dr) = a.error_to(b);
    dt < 1e-9 && dr < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn zero_noise_lift_recovers_world_path(c in clip(40)) {
        let trajs = lift_clip("c", &c.dets, &c.cams, 0.5, 5).unwrap();
        prop_assert_eq!(trajs.len(), 1);
        for ((_, got), want) in trajs[0].poses.iter().zip(&c.hand_world) {
            prop_assert!(close(got, &want.to_pose()));
        }
    }

    #[test]
    fn reexpression_at_t_returns_the_detection(c in clip(30), t in 0usize..20) {
        let traj = &lift_clip("c", &c.dets, &c.cams, 0.5, 5).unwrap()[0];
        let window = reexpress_window(traj, &c.cams, t, 10).unwrap();
        prop_assert_eq!(window.len(), 11);
        prop_assert!(close(&window[0], &c.dets[t].wrist_pose_cam));
    }

    #[test]
    fn frame_id_shift_only_shifts_ids(c in clip(25), shift in 1u64..10_000, drop in prop::collection::vec(any::<bool>(), 25)) {
        let kept: Vec<HandDetection> = c.dets.iter().zip(&drop).filter(|(_, d)| !**d).map(|(x, _)| *x).collect();
        prop_assume!(!kept.is_empty());
        let shifted_dets: Vec<HandDetection> = kept.iter().map(|d| HandDetection { frame_id: d.frame_id + shift, ..*d }).collect();
        let shifted_cams: Vec<CameraFrame> = c.cams.iter().map(|cam| CameraFrame { frame_id: cam.frame_id + shift, ..*cam }).collect();
        let a = lift_clip("c", &kept, &c.cams, 0.5, 3).unwrap();
        let b = lift_clip("c", &shifted_dets, &shifted_cams, 0.5, 3).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.poses.len(), y.poses.len());
            for ((fx, px), (fy, py)) in x.poses.iter().zip(&y.poses) {
                prop_assert_eq!(fx + shift, *fy);
                prop_assert_eq!(px, py);
            }
            let gaps: Vec<(u64, u64)> = x.source_gaps.iter().map(|(s, e)| (s + shift, e + shift)).collect();
            prop_assert_eq!(&gaps, &y.source_gaps);
        }
    }

    #[test]
    fn world_gauge_moves_every_pose(c in clip(20), gt in vec3(2.0), gw in vec3(3.0)) {
        let g = RigidTransform::from_rotvec(gt, gw);
        let moved: Vec<CameraFrame> = c.cams.iter()
            .map(|cam| CameraFrame { extrinsic_world_to_cam: cam.extrinsic_world_to_cam.compose(&g.invert()), ..*cam })
            .collect();
        let a = &lift_clip("c", &c.dets, &c.cams, 0.5, 5).unwrap()[0];
        let b = &lift_clip("c", &c.dets, &moved, 0.5, 5).unwrap()[0];
        for ((_, pa), (_, pb)) in a.poses.iter().zip(&b.poses) {
            prop_assert!(close(&g.compose(&pa.to_transform()).to_pose(), pb));
        }
    }
}
