//! Task-relevant grasp choice from an affordance point and scored grasp proposals.
//!
//! Grasp poses are gripper-center poses in the camera frame. The gripper
//! approaches along its local `+z` axis.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::math::Vec3;
use crate::se3::{lift_pixel, EulerZyx, Intrinsics, Pose6D, Se3Error};

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.2;
pub const DEFAULT_STANDOFF: f64 = 0.10;
pub const DEFAULT_STEP: f64 = 0.01;
/// Side length of the square depth patch used at the affordance pixel.
pub const DEPTH_PATCH: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraspError {
    #[error("no grasp candidate passes the score threshold")]
    NoViableGrasp,
    #[error("no valid depth around pixel ({u}, {v})")]
    NoDepth { u: f64, v: f64 },
    #[error("depth map holds {got} values, expected {width}x{height}")]
    DepthMapSize { width: usize, height: usize, got: usize },
    #[error("standoff and step must be positive")]
    InvalidApproach,
    #[error("unknown selection mode {0:?}")]
    UnknownMode(String),
    #[error(transparent)]
    Geometry(#[from] Se3Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffordancePoint {
    pub pixel: (f64, f64),
    pub depth: f64,
    /// `lift_pixel(pixel, depth)` in the camera frame.
    pub point3d_cam: Vec3,
    pub task_text: String,
}

impl AffordancePoint {
    pub fn new(pixel: (f64, f64), depth: f64, k: &Intrinsics, task_text: &str) -> Result<Self, GraspError> {
        let point3d_cam = lift_pixel(pixel, depth, k)?;
        Ok(Self { pixel, depth, point3d_cam, task_text: task_text.into() })
    }

    /// Same as [`AffordancePoint::new`] with the depth taken from a patch median of `depth_map`.
    pub fn from_depth_map(pixel: (f64, f64), depth_map: &DepthMap, k: &Intrinsics, task_text: &str) -> Result<Self, GraspError> {
        let depth = depth_map.patch_median(pixel, DEPTH_PATCH)?;
        Self::new(pixel, depth, k, task_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCandidate {
    pub pose_cam: Pose6D,
    pub score: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionMode {
    /// Closest feasible candidate to the affordance point.
    AffordanceFused,
    /// Highest-scoring feasible candidate, affordance ignored.
    BestScoreOnly,
    /// Gripper sent straight to the lifted affordance point.
    ContactPointDirect,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 3] =
        [SelectionMode::AffordanceFused, SelectionMode::BestScoreOnly, SelectionMode::ContactPointDirect];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::AffordanceFused => "affordance_fused",
            SelectionMode::BestScoreOnly => "best_score_only",
            SelectionMode::ContactPointDirect => "contact_point_direct",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMode {
    type Err = GraspError;
    fn from_str(s: &str) -> Result<Self, GraspError> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| GraspError::UnknownMode(s.into()))
    }
}

/// Row-major depth image in meters. Non-finite or non-positive entries are holes.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GraspError> {
        if data.len() != width * height {
            return Err(GraspError::DepthMapSize { width, height, got: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        (x < self.width && y < self.height).then(|| self.data[y * self.width + x])
    }

    /// Median of the valid depths in a `size`x`size` patch centred on `pixel`.
    ///
    /// The patch is clipped at the image border. With an even number of
    /// valid samples the two middle values are averaged.
    pub fn patch_median(&self, pixel: (f64, f64), size: usize) -> Result<f64, GraspError> {
        let none = GraspError::NoDepth { u: pixel.0, v: pixel.1 };
        if !(pixel.0.is_finite() && pixel.1.is_finite()) {
            return Err(none);
        }
        let (cu, cv) = (libm::round(pixel.0) as i64, libm::round(pixel.1) as i64);
        let half = (size / 2) as i64;
        let mut vals: Vec<f64> = Vec::with_capacity(size * size);
        for y in cv - half..=cv + half {
            for x in cu - half..=cu + half {
                if x < 0 || y < 0 {
                    continue;
                }
                if let Some(d) = self.get(x as usize, y as usize) {
                    if d.is_finite() && d > 0.0 {
                        vals.push(d);
                    }
                }
            }
        }
        if vals.is_empty() {
            return Err(none);
        }
        vals.sort_by(f64::total_cmp);
        let m = vals.len() / 2;
        Ok(if vals.len() % 2 == 1 { vals[m] } else { 0.5 * (vals[m - 1] + vals[m]) })
    }
}

/// Choose a grasp pose according to `mode`.
pub fn select_grasp(
    aff: &AffordancePoint,
    candidates: &[GraspCandidate],
    mode: SelectionMode,
    score_threshold: f64,
    initial_gripper_orientation: EulerZyx,
) -> Result<Pose6D, GraspError> {
    let feasible = || candidates.iter().enumerate().filter(|(_, c)| c.score >= score_threshold);
    match mode {
        SelectionMode::AffordanceFused => feasible()
            .min_by(|(ia, a), (ib, b)| {
                let da = (a.pose_cam.translation() - aff.point3d_cam).norm();
                let db = (b.pose_cam.translation() - aff.point3d_cam).norm();
                da.total_cmp(&db).then_with(|| b.score.total_cmp(&a.score)).then_with(|| ia.cmp(ib))
            })
            .map(|(_, c)| c.pose_cam)
            .ok_or(GraspError::NoViableGrasp),
        SelectionMode::BestScoreOnly => feasible()
            .min_by(|(ia, a), (ib, b)| match b.score.total_cmp(&a.score) {
                Ordering::Equal => ia.cmp(ib),
                o => o,
            })
            .map(|(_, c)| c.pose_cam)
            .ok_or(GraspError::NoViableGrasp),
        SelectionMode::ContactPointDirect => Ok(Pose6D::new(aff.point3d_cam, initial_gripper_orientation)),
    }
}

/// Straight-line approach from `standoff` behind the grasp (along local `-z`) to the grasp itself.
///
/// Waypoints are evenly spaced, no more than `step` apart, and all share the
/// grasp orientation. The last waypoint is `grasp_pose` itself.
pub fn plan_linear_approach(grasp_pose: &Pose6D, standoff: f64, step: f64) -> Result<Vec<Pose6D>, GraspError> {
    if !(standoff > 0.0 && step > 0.0 && standoff.is_finite() && step.is_finite()) {
        return Err(GraspError::InvalidApproach);
    }
    let approach = grasp_pose.rotation_matrix().col(2);
    // Tolerate ratios like 0.1 / 0.05 landing a hair above an integer.
    let segments = libm::ceil(standoff / step - 1e-9).max(1.0) as usize;
    let mut waypoints: Vec<Pose6D> = (0..segments)
        .map(|i| {
            let retreat = standoff * (1.0 - i as f64 / segments as f64);
            Pose6D::new(grasp_pose.translation() - approach * retreat, grasp_pose.orientation())
        })
        .collect();
    waypoints.push(*grasp_pose);
    Ok(waypoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn aff_at(p: Vec3) -> AffordancePoint {
        AffordancePoint { pixel: (0.0, 0.0), depth: p.z, point3d_cam: p, task_text: "open drawer".into() }
    }

    fn cand(x: f64, score: f64) -> GraspCandidate {
        GraspCandidate { pose_cam: Pose6D::new(Vec3::new(x, 0.0, 1.0), EulerZyx::default()), score, width: 0.04 }
    }

    #[test]
    fn single_candidate() {
        let aff = aff_at(Vec3::new(0.0, 0.0, 1.0));
        let c = [cand(0.3, 0.9)];
        assert_eq!(select_grasp(&aff, &c, SelectionMode::AffordanceFused, 0.2, EulerZyx::default()).unwrap(), c[0].pose_cam);
    }

    #[test]
    fn nearest_wins_over_score() {
        let aff = aff_at(Vec3::new(0.0, 0.0, 1.0));
        let c = [cand(0.20, 0.95), cand(0.05, 0.3)];
        let fused = select_grasp(&aff, &c, SelectionMode::AffordanceFused, 0.2, EulerZyx::default()).unwrap();
        assert_eq!(fused, c[1].pose_cam);
        let best = select_grasp(&aff, &c, SelectionMode::BestScoreOnly, 0.2, EulerZyx::default()).unwrap();
        assert_eq!(best, c[0].pose_cam);
    }

    #[test]
    fn tie_breaks() {
        let aff = aff_at(Vec3::new(0.0, 0.0, 1.0));
        // Same distance: higher score, then lower index.
        let c = [cand(0.1, 0.5), cand(-0.1, 0.7), cand(0.1, 0.7)];
        assert_eq!(select_grasp(&aff, &c, SelectionMode::AffordanceFused, 0.2, EulerZyx::default()).unwrap(), c[1].pose_cam);
        assert_eq!(select_grasp(&aff, &c, SelectionMode::BestScoreOnly, 0.2, EulerZyx::default()).unwrap(), c[1].pose_cam);
    }

    #[test]
    fn below_threshold_is_not_viable() {
        let aff = aff_at(Vec3::new(0.0, 0.0, 1.0));
        let c = [cand(0.0, 0.1), cand(0.1, 0.19)];
        for mode in [SelectionMode::AffordanceFused, SelectionMode::BestScoreOnly] {
            assert_eq!(select_grasp(&aff, &c, mode, 0.2, EulerZyx::default()), Err(GraspError::NoViableGrasp));
            assert_eq!(select_grasp(&aff, &[], mode, 0.2, EulerZyx::default()), Err(GraspError::NoViableGrasp));
        }
    }

    #[test]
    fn contact_point_direct_uses_initial_orientation() {
        let aff = aff_at(Vec3::new(0.1, 0.2, 0.8));
        let o = EulerZyx::new(0.3, -0.2, 1.0);
        let p = select_grasp(&aff, &[], SelectionMode::ContactPointDirect, 0.2, o).unwrap();
        assert_eq!(p, Pose6D::new(Vec3::new(0.1, 0.2, 0.8), o));
    }

    #[test]
    fn approach_three_waypoints() {
        let g = Pose6D::new(Vec3::new(0.0, 0.0, 1.0), EulerZyx::default());
        let w = plan_linear_approach(&g, 0.10, 0.05).unwrap();
        assert_eq!(w.len(), 3);
        let retreats: Vec<f64> = w.iter().map(|p| 1.0 - p.translation().z).collect();
        for (r, e) in retreats.iter().zip([0.10, 0.05, 0.0]) {
            assert!((r - e).abs() < 1e-12, "{retreats:?}");
        }
        assert_eq!(*w.last().unwrap(), g);
    }

    #[test]
    fn approach_spacing() {
        let g = Pose6D::new(Vec3::new(0.3, -0.1, 0.7), EulerZyx::new(0.4, 0.9, -1.2));
        let w = plan_linear_approach(&g, 0.10, 0.03).unwrap();
        assert_eq!(w.len(), 5);
        for pair in w.windows(2) {
            assert!((pair[1].translation() - pair[0].translation()).norm() <= 0.03 + 1e-12);
        }
        let start = (w[0].translation() - g.translation()).norm();
        assert!((start - 0.10).abs() < 1e-12);
        assert!(w.iter().all(|p| p.orientation() == g.orientation()));
        assert_eq!(plan_linear_approach(&g, 0.0, 0.01), Err(GraspError::InvalidApproach));
        assert_eq!(plan_linear_approach(&g, 0.1, -0.01), Err(GraspError::InvalidApproach));
    }

    #[test]
    fn depth_median_ignores_holes() {
        let mut data = vec![1.0; 100];
        data[5 * 10 + 5] = 9.0;
        data[4 * 10 + 4] = f64::NAN;
        data[6 * 10 + 6] = 0.0;
        let dm = DepthMap::new(10, 10, data).unwrap();
        assert_eq!(dm.patch_median((5.0, 5.0), 5).unwrap(), 1.0);
        // Corner patch is clipped to 3x3.
        assert_eq!(dm.patch_median((0.0, 0.0), 5).unwrap(), 1.0);
        let holes = DepthMap::new(2, 2, vec![f64::NAN; 4]).unwrap();
        assert!(matches!(holes.patch_median((0.0, 0.0), 5), Err(GraspError::NoDepth { .. })));
        assert!(DepthMap::new(3, 3, vec![1.0; 8]).is_err());
    }

    #[test]
    fn even_count_median_averages() {
        let dm = DepthMap::new(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(dm.patch_median((0.0, 0.0), 5).unwrap(), 1.5);
    }
}
