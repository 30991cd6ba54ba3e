//! Action chunks under absolute/relative translation and orientation encodings.
//!
//! A relative component stores the step from the *previous* pose in the
//! window, not from the chunk's base pose:
//!
//! - relative translation: `t_i - t_{i-1}` (camera-at-t coordinates)
//! - relative orientation: Euler triple of `R_{i-1}^T R_i`, wrapped
//!
//! Decoding chains these from `base_pose`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::math::Mat3;
use crate::se3::{matrix_to_euler_unchecked, EulerZyx, Pose6D, RigidTransform};

pub use crate::se3::wrap_angle;

pub const DEFAULT_CHUNK_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("window has {got} poses, expected n + 1 = {expected}")]
    BadWindowLength { got: usize, expected: usize },
    #[error("chunk holds {got} actions but declares n = {n}")]
    ChunkLengthMismatch { got: usize, n: usize },
    #[error("unknown action mode {0:?}")]
    UnknownMode(alloc::string::String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Encoding {
    Absolute,
    Relative,
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Absolute => "absolute",
            Encoding::Relative => "relative",
        }
    }
}

impl FromStr for Encoding {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, CodecError> {
        match s {
            "absolute" | "abs" => Ok(Encoding::Absolute),
            "relative" | "rel" => Ok(Encoding::Relative),
            other => Err(CodecError::UnknownMode(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionMode {
    pub translation: Encoding,
    pub orientation: Encoding,
}

impl ActionMode {
    pub const ABS_T_ABS_O: ActionMode = ActionMode::new(Encoding::Absolute, Encoding::Absolute);
    pub const ABS_T_REL_O: ActionMode = ActionMode::new(Encoding::Absolute, Encoding::Relative);
    pub const REL_T_ABS_O: ActionMode = ActionMode::new(Encoding::Relative, Encoding::Absolute);
    pub const REL_T_REL_O: ActionMode = ActionMode::new(Encoding::Relative, Encoding::Relative);
    pub const ALL: [ActionMode; 4] = [Self::ABS_T_ABS_O, Self::ABS_T_REL_O, Self::REL_T_ABS_O, Self::REL_T_REL_O];

    pub const fn new(translation: Encoding, orientation: Encoding) -> Self {
        Self { translation, orientation }
    }
}

impl Default for ActionMode {
    fn default() -> Self {
        Self::REL_T_REL_O
    }
}

impl fmt::Display for ActionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.translation {
            Encoding::Absolute => "absT",
            Encoding::Relative => "relT",
        };
        let o = match self.orientation {
            Encoding::Absolute => "absO",
            Encoding::Relative => "relO",
        };
        write!(f, "{t}+{o}")
    }
}

impl FromStr for ActionMode {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, CodecError> {
        ActionMode::ALL
            .into_iter()
            .find(|m| {
                let mut buf = alloc::string::String::new();
                let _ = fmt::write(&mut buf, format_args!("{m}"));
                buf.eq_ignore_ascii_case(s)
            })
            .ok_or_else(|| CodecError::UnknownMode(s.into()))
    }
}

/// `n` encoded actions anchored at `base_pose` (camera-at-t frame).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub mode: ActionMode,
    pub base_pose: Pose6D,
    pub actions: Vec<[f64; 6]>,
}

impl ActionChunk {
    pub fn n(&self) -> usize {
        self.actions.len()
    }
}

pub fn encode_chunk(window: &[Pose6D], n: usize, mode: ActionMode) -> Result<ActionChunk, CodecError> {
    if window.len() != n + 1 {
        return Err(CodecError::BadWindowLength { got: window.len(), expected: n + 1 });
    }
    let actions = window
        .windows(2)
        .map(|pair| {
            let (prev, cur) = (&pair[0], &pair[1]);
            let t = match mode.translation {
                Encoding::Absolute => cur.translation(),
                Encoding::Relative => cur.translation() - prev.translation(),
            };
            let o = match mode.orientation {
                Encoding::Absolute => cur.orientation(),
                Encoding::Relative => {
                    let delta = prev.rotation_matrix().transpose().mul_mat(&cur.rotation_matrix());
                    matrix_to_euler_unchecked(&delta)
                }
            };
            [t.x, t.y, t.z, o.alpha, o.beta, o.gamma]
        })
        .collect();
    Ok(ActionChunk { mode, base_pose: window[0], actions })
}

/// Decode a chunk into its `n` future poses.
pub fn decode_chunk(chunk: &ActionChunk) -> Vec<Pose6D> {
    decode_transforms(chunk).iter().map(RigidTransform::to_pose).collect()
}

/// Same as [`decode_chunk`] but without the final Euler round trip.
pub fn decode_transforms(chunk: &ActionChunk) -> Vec<RigidTransform> {
    let mut t = chunk.base_pose.translation();
    let mut r: Mat3 = chunk.base_pose.rotation_matrix();
    chunk
        .actions
        .iter()
        .map(|a| {
            let tv = crate::math::Vec3::new(a[0], a[1], a[2]);
            let e = EulerZyx::new(a[3], a[4], a[5]);
            t = match chunk.mode.translation {
                Encoding::Absolute => tv,
                Encoding::Relative => t + tv,
            };
            r = match chunk.mode.orientation {
                Encoding::Absolute => crate::se3::euler_to_matrix(e),
                Encoding::Relative => r.mul_mat(&crate::se3::euler_to_matrix(e)),
            };
            RigidTransform::from_parts(r, t)
        })
        .collect()
}
