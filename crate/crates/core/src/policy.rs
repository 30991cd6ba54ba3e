//! Goal-conditioned post-grasp policies.
//!
//! [`RetrievalIndex`] is an exact nearest-neighbour policy over stored
//! training samples. It answers the same query as a learned chunking policy:
//! current observation, goal observation and current wrist pose in, one
//! action chunk out.

use alloc::vec::Vec;

use crate::codec::{ActionChunk, Encoding};
use crate::dataset::TrainingSample;
use crate::math::Vec3;
use crate::se3::{Pose6D, RigidTransform};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("cannot fit an index on an empty dataset")]
    EmptyDataset,
    #[error("sample {index} disagrees with sample 0 on {what}")]
    MixedDimensions { index: usize, what: &'static str },
    #[error("query {what} has dimension {got}, index expects {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("retrieval weights must be finite, nonnegative and not all zero")]
    InvalidWeights,
    #[error("policy has no action for this query")]
    NoAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyQuery {
    pub obs_feature: Vec<f64>,
    pub goal_feature: Vec<f64>,
    /// Current wrist/gripper pose in the observing camera's frame.
    pub current_pose: Pose6D,
}

/// Anything that maps a query to the next action chunk.
pub trait Policy {
    fn predict(&self, query: &PolicyQuery) -> Result<ActionChunk, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn predict(&self, query: &PolicyQuery) -> Result<ActionChunk, PolicyError> {
        (**self).predict(query)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalWeights {
    pub obs: f64,
    pub goal: f64,
    pub pose: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        Self { obs: 1.0, goal: 1.0, pose: 1.0 }
    }
}

pub const DEFAULT_POSE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    samples: Vec<TrainingSample>,
    weights: RetrievalWeights,
    /// Meters per radian when mixing translation and rotation distance.
    pose_scale: f64,
    feature_dim: usize,
    chunk_len: usize,
}

impl RetrievalIndex {
    pub fn fit(dataset: Vec<TrainingSample>, weights: RetrievalWeights, pose_scale: f64) -> Result<Self, PolicyError> {
        let w = [weights.obs, weights.goal, weights.pose];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
            return Err(PolicyError::InvalidWeights);
        }
        if !pose_scale.is_finite() || pose_scale < 0.0 {
            return Err(PolicyError::InvalidWeights);
        }
        let first = dataset.first().ok_or(PolicyError::EmptyDataset)?;
        let (d, n, mode) = (first.obs_feature.len(), first.chunk.n(), first.chunk.mode);
        for (index, s) in dataset.iter().enumerate() {
            if s.obs_feature.len() != d {
                return Err(PolicyError::MixedDimensions { index, what: "observation dimension" });
            }
            if s.goal_feature.len() != d {
                return Err(PolicyError::MixedDimensions { index, what: "goal dimension" });
            }
            if s.chunk.n() != n {
                return Err(PolicyError::MixedDimensions { index, what: "chunk size" });
            }
            if s.chunk.mode != mode {
                return Err(PolicyError::MixedDimensions { index, what: "action mode" });
            }
        }
        Ok(Self { samples: dataset, weights, pose_scale, feature_dim: d, chunk_len: n })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn weights(&self) -> RetrievalWeights {
        self.weights
    }

    pub fn pose_scale(&self) -> f64 {
        self.pose_scale
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    /// Weighted squared distance between the query and stored sample `i`.
    pub fn score(&self, q: &PolicyQuery, i: usize) -> f64 {
        let s = &self.samples[i];
        let w = self.weights;
        let (dt, dr) = q.current_pose.error_to(&s.current_pose);
        let pose_sq = dt * dt + (self.pose_scale * dr) * (self.pose_scale * dr);
        w.obs * squared_distance(&q.obs_feature, &s.obs_feature)
            + w.goal * squared_distance(&q.goal_feature, &s.goal_feature)
            + w.pose * pose_sq
    }

    /// Index of the best stored sample; ties go to the lowest index.
    pub fn nearest(&self, q: &PolicyQuery) -> Result<usize, PolicyError> {
        self.check_query(q)?;
        let mut best = 0;
        let mut best_score = self.score(q, 0);
        for i in 1..self.samples.len() {
            let s = self.score(q, i);
            if s < best_score {
                best = i;
                best_score = s;
            }
        }
        Ok(best)
    }

    fn check_query(&self, q: &PolicyQuery) -> Result<(), PolicyError> {
        if q.obs_feature.len() != self.feature_dim {
            return Err(PolicyError::DimensionMismatch {
                what: "observation",
                expected: self.feature_dim,
                got: q.obs_feature.len(),
            });
        }
        if q.goal_feature.len() != self.feature_dim {
            return Err(PolicyError::DimensionMismatch { what: "goal", expected: self.feature_dim, got: q.goal_feature.len() });
        }
        Ok(())
    }
}

impl Policy for RetrievalIndex {
    fn predict(&self, q: &PolicyQuery) -> Result<ActionChunk, PolicyError> {
        let best = self.nearest(q)?;
        Ok(rebase_chunk(&self.samples[best].chunk, &q.current_pose))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Re-anchor a chunk on `new_base`.
///
/// Relative components are kept verbatim. Absolute components are moved by
/// the rigid transform `new_base ∘ invert(old_base)`, which carries the old
/// base pose onto the new one.
pub fn rebase_chunk(chunk: &ActionChunk, new_base: &Pose6D) -> ActionChunk {
    let shift: RigidTransform = new_base.to_transform().compose(&chunk.base_pose.to_transform().invert());
    let actions = chunk
        .actions
        .iter()
        .map(|a| {
            let mut out = *a;
            if chunk.mode.translation == Encoding::Absolute {
                let t = shift.transform_point(Vec3::new(a[0], a[1], a[2]));
                out[..3].copy_from_slice(&t.to_array());
            }
            if chunk.mode.orientation == Encoding::Absolute {
                let r = shift.rotation().mul_mat(&crate::se3::euler_to_matrix(crate::se3::EulerZyx::new(a[3], a[4], a[5])));
                out[3..].copy_from_slice(&crate::se3::matrix_to_euler_unchecked(&r).to_array());
            }
            out
        })
        .collect();
    ActionChunk { mode: chunk.mode, base_pose: *new_base, actions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_transforms, encode_chunk, ActionMode};
    use crate::se3::EulerZyx;
    use alloc::vec;

    fn sample(obs: f64, x: f64) -> TrainingSample {
        let window: Vec<Pose6D> =
            (0..=3).map(|i| Pose6D::new(Vec3::new(x + 0.01 * i as f64, 0.0, 0.5), EulerZyx::default())).collect();
        let chunk = encode_chunk(&window, 3, ActionMode::REL_T_REL_O).unwrap();
        TrainingSample {
            clip_id: "c".into(),
            frame_id: 0,
            obs_feature: vec![obs, 0.0],
            goal_feature: vec![1.0, 1.0],
            current_pose: chunk.base_pose,
            chunk,
        }
    }

    fn query(s: &TrainingSample) -> PolicyQuery {
        PolicyQuery { obs_feature: s.obs_feature.clone(), goal_feature: s.goal_feature.clone(), current_pose: s.current_pose }
    }

    #[test]
    fn fit_sizes_and_errors() {
        let idx = RetrievalIndex::fit(vec![sample(0.0, 0.0)], RetrievalWeights::default(), 0.1).unwrap();
        assert_eq!(idx.len(), 1);
        let idx = RetrievalIndex::fit(vec![sample(0.0, 0.0); 3], RetrievalWeights::default(), 0.1).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(RetrievalIndex::fit(vec![], RetrievalWeights::default(), 0.1), Err(PolicyError::EmptyDataset));
        let mut bad = sample(0.0, 0.0);
        bad.obs_feature.push(0.0);
        assert!(matches!(
            RetrievalIndex::fit(vec![sample(0.0, 0.0), bad], RetrievalWeights::default(), 0.1),
            Err(PolicyError::MixedDimensions { index: 1, .. })
        ));
        let zero = RetrievalWeights { obs: 0.0, goal: 0.0, pose: 0.0 };
        assert_eq!(RetrievalIndex::fit(vec![sample(0.0, 0.0)], zero, 0.1), Err(PolicyError::InvalidWeights));
    }

    #[test]
    fn exact_match_returns_own_chunk() {
        let data = vec![sample(0.0, 0.0), sample(1.0, 0.3), sample(2.0, 0.6)];
        let idx = RetrievalIndex::fit(data.clone(), RetrievalWeights::default(), 0.1).unwrap();
        for s in &data {
            let c = idx.predict(&query(s)).unwrap();
            assert_eq!(c, s.chunk);
        }
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let idx = RetrievalIndex::fit(vec![sample(1.0, 0.0), sample(-1.0, 0.0)], RetrievalWeights::default(), 0.1).unwrap();
        let mut q = query(&sample(0.0, 0.0));
        q.obs_feature = vec![0.0, 0.0];
        assert_eq!(idx.nearest(&q).unwrap(), 0);
    }

    #[test]
    fn dimension_mismatch() {
        let idx = RetrievalIndex::fit(vec![sample(1.0, 0.0)], RetrievalWeights::default(), 0.1).unwrap();
        let mut q = query(&sample(0.0, 0.0));
        q.goal_feature.pop();
        assert!(matches!(idx.predict(&q), Err(PolicyError::DimensionMismatch { what: "goal", .. })));
    }

    #[test]
    fn rebased_relative_chunk_starts_at_query() {
        let idx = RetrievalIndex::fit(vec![sample(0.0, 0.0)], RetrievalWeights::default(), 0.1).unwrap();
        let base = Pose6D::new(Vec3::new(0.7, -0.2, 1.1), EulerZyx::new(1.0, 0.2, -0.4));
        let mut q = query(&sample(0.0, 0.0));
        q.current_pose = base;
        let c = idx.predict(&q).unwrap();
        assert_eq!(c.base_pose, base);
        let first = decode_transforms(&c)[0];
        let expected = base.translation() + Vec3::new(0.01, 0.0, 0.0);
        assert!(first.translation().max_abs_diff(expected) < 1e-12);
    }

    #[test]
    fn rebased_absolute_chunk_moves_rigidly() {
        let window: Vec<Pose6D> = (0..=3)
            .map(|i| Pose6D::new(Vec3::new(0.1 * i as f64, 0.0, 0.5), EulerZyx::new(0.1 * i as f64, 0.0, 0.0)))
            .collect();
        for mode in ActionMode::ALL {
            let chunk = encode_chunk(&window, 3, mode).unwrap();
            let new_base = Pose6D::new(Vec3::new(-0.3, 0.4, 0.9), EulerZyx::new(0.5, -0.2, 0.3));
            let moved = decode_transforms(&rebase_chunk(&chunk, &new_base));
            let orig = decode_transforms(&chunk);
            let shift = new_base.to_transform().compose(&chunk.base_pose.to_transform().invert());
            for (m, o) in moved.iter().zip(&orig) {
                if mode == ActionMode::ABS_T_ABS_O {
                    assert!(m.max_abs_diff(&shift.compose(o)) < 1e-12, "{mode}");
                }
                if mode.translation == Encoding::Absolute {
                    assert!(m.translation().max_abs_diff(shift.transform_point(o.translation())) < 1e-12);
                }
            }
        }
    }
}
