//! Skill segmentation and goal-conditioned training samples.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::codec::{encode_chunk, ActionChunk, ActionMode, CodecError};
use crate::egolift::{reexpress_window, LiftError, WristTrajectory};
use crate::se3::{CameraFrame, Pose6D};

pub const DEFAULT_FEATURE_DIM: usize = 32;
pub const DEFAULT_STRIDE: usize = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("clip {clip_id} has {len} poses, need at least n + 1 = {needed}")]
    ClipTooShort { clip_id: String, len: usize, needed: usize },
    #[error("stride must be positive")]
    InvalidStride,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    FeatureDimension { expected: usize, got: usize },
    #[error("no feature vector for frame {0}")]
    MissingFeature(u64),
    #[error("keyword lexicon has no entry for skill {0}")]
    IncompleteLexicon(Skill),
    #[error("unknown skill {0:?}")]
    UnknownSkill(String),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// The nine manipulation skills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Skill {
    SlideOpen,
    SlideClose,
    HingeOpen,
    HingeClose,
    Pick,
    Place,
    Pour,
    Cut,
    Stir,
}

impl Skill {
    pub const ALL: [Skill; 9] = [
        Skill::SlideOpen,
        Skill::SlideClose,
        Skill::HingeOpen,
        Skill::HingeClose,
        Skill::Pick,
        Skill::Place,
        Skill::Pour,
        Skill::Cut,
        Skill::Stir,
    ];

    pub const ARTICULATION: [Skill; 4] = [Skill::SlideOpen, Skill::SlideClose, Skill::HingeOpen, Skill::HingeClose];

    pub fn name(self) -> &'static str {
        match self {
            Skill::SlideOpen => "slide-open",
            Skill::SlideClose => "slide-close",
            Skill::HingeOpen => "hinge-open",
            Skill::HingeClose => "hinge-close",
            Skill::Pick => "pick",
            Skill::Place => "place",
            Skill::Pour => "pour",
            Skill::Cut => "cut",
            Skill::Stir => "stir",
        }
    }

    pub fn is_articulation(self) -> bool {
        Self::ARTICULATION.contains(&self)
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Skill {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, DatasetError> {
        Skill::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.name().replace('-', "_").eq_ignore_ascii_case(s))
            .ok_or_else(|| DatasetError::UnknownSkill(s.into()))
    }
}

/// Free-text narration for a frame range of one clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub clip_id: String,
    pub text: String,
    pub start_frame: u64,
    pub end_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillSegment {
    pub clip_id: String,
    pub skill: Skill,
    pub start_frame: u64,
    pub end_frame: u64,
}

/// Keyword phrases per skill. Matching is case-insensitive on whole words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillLexicon {
    keywords: BTreeMap<Skill, Vec<Vec<String>>>,
}

impl SkillLexicon {
    /// Every skill must have at least one phrase.
    pub fn new<S: AsRef<str>>(map: &BTreeMap<Skill, Vec<S>>) -> Result<Self, DatasetError> {
        let mut keywords = BTreeMap::new();
        for skill in Skill::ALL {
            let phrases: Vec<Vec<String>> = map
                .get(&skill)
                .map(|v| v.iter().map(|p| words(p.as_ref())).filter(|w| !w.is_empty()).collect())
                .unwrap_or_default();
            if phrases.is_empty() {
                return Err(DatasetError::IncompleteLexicon(skill));
            }
            keywords.insert(skill, phrases);
        }
        Ok(Self { keywords })
    }

    /// Skills whose keywords occur in `text`.
    pub fn matches(&self, text: &str) -> Vec<Skill> {
        let tokens = words(text);
        self.keywords
            .iter()
            .filter(|(_, phrases)| phrases.iter().any(|p| contains_phrase(&tokens, p)))
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn phrases(&self, skill: Skill) -> impl Iterator<Item = String> + '_ {
        self.keywords.get(&skill).into_iter().flatten().map(|w| w.join(" "))
    }
}

impl Default for SkillLexicon {
    fn default() -> Self {
        let table: [(Skill, &[&str]); 9] = [
            (Skill::SlideOpen, &["open drawer", "open the drawer", "pull drawer", "pull out drawer", "pull the drawer"]),
            (Skill::SlideClose, &["close drawer", "close the drawer", "push drawer", "shut drawer", "push the drawer"]),
            (
                Skill::HingeOpen,
                &["open door", "open the door", "open cupboard", "open the cupboard", "open fridge", "open the fridge"],
            ),
            (
                Skill::HingeClose,
                &["close door", "close the door", "close cupboard", "close the cupboard", "close fridge", "close the fridge"],
            ),
            (Skill::Pick, &["pick up", "take", "grab"]),
            (Skill::Place, &["put down", "place", "put back"]),
            (Skill::Pour, &["pour"]),
            (Skill::Cut, &["cut", "slice", "chop"]),
            (Skill::Stir, &["stir", "mix"]),
        ];
        let map: BTreeMap<Skill, Vec<&str>> = table.iter().map(|(s, v)| (*s, v.to_vec())).collect();
        Self::new(&map).expect("default lexicon covers every skill")
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(|w| w.to_lowercase()).collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Assign each annotation to the single skill its text names; ambiguous or unmatched ones are dropped.
pub fn segment_by_skill(annotations: &[Annotation], lexicon: &SkillLexicon) -> Vec<SkillSegment> {
    annotations
        .iter()
        .filter_map(|a| match lexicon.matches(&a.text).as_slice() {
            [skill] => Some(SkillSegment {
                clip_id: a.clip_id.clone(),
                skill: *skill,
                start_frame: a.start_frame,
                end_frame: a.end_frame,
            }),
            _ => None,
        })
        .collect()
}

/// One skill demonstration: trajectory plus per-frame observation features.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillClip {
    pub clip_id: String,
    pub skill: Skill,
    pub annotation_text: String,
    pub trajectory: WristTrajectory,
    /// Aligned with `trajectory.poses`.
    pub frame_features: Vec<Vec<f64>>,
    /// Feature of the final trajectory frame.
    pub goal_feature: Vec<f64>,
}

impl SkillClip {
    /// Attach features (looked up by frame id) to a trajectory; the goal is the last frame's feature.
    pub fn new(
        skill: Skill,
        annotation_text: &str,
        trajectory: WristTrajectory,
        features: &BTreeMap<u64, Vec<f64>>,
    ) -> Result<Self, DatasetError> {
        let mut frame_features = Vec::with_capacity(trajectory.poses.len());
        let mut dim = None;
        for (frame_id, _) in &trajectory.poses {
            let f = features.get(frame_id).ok_or(DatasetError::MissingFeature(*frame_id))?;
            match dim {
                None => dim = Some(f.len()),
                Some(d) if d != f.len() => return Err(DatasetError::FeatureDimension { expected: d, got: f.len() }),
                _ => {}
            }
            frame_features.push(f.clone());
        }
        let goal_feature = frame_features.last().cloned().unwrap_or_default();
        Ok(Self {
            clip_id: trajectory.clip_id.clone(),
            skill,
            annotation_text: annotation_text.to_string(),
            trajectory,
            frame_features,
            goal_feature,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.goal_feature.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub clip_id: String,
    /// Frame id of the window's first pose.
    pub frame_id: u64,
    pub obs_feature: Vec<f64>,
    pub goal_feature: Vec<f64>,
    /// Equal to `chunk.base_pose`.
    pub current_pose: Pose6D,
    pub chunk: ActionChunk,
}

/// One sample per start index `0, stride, 2*stride, ...` whose window fits in the clip.
pub fn build_samples(
    clip: &SkillClip,
    cams: &[CameraFrame],
    n: usize,
    mode: ActionMode,
    stride: usize,
) -> Result<Vec<TrainingSample>, DatasetError> {
    if stride == 0 {
        return Err(DatasetError::InvalidStride);
    }
    let len = clip.trajectory.poses.len();
    if len < n + 1 {
        return Err(DatasetError::ClipTooShort { clip_id: clip.clip_id.clone(), len, needed: n + 1 });
    }
    (0..len - n)
        .step_by(stride)
        .map(|t| {
            let window = reexpress_window(&clip.trajectory, cams, t, n)?;
            let chunk = encode_chunk(&window, n, mode)?;
            Ok(TrainingSample {
                clip_id: clip.clip_id.clone(),
                frame_id: clip.trajectory.poses[t].0,
                obs_feature: clip.frame_features[t].clone(),
                goal_feature: clip.goal_feature.clone(),
                current_pose: chunk.base_pose,
                chunk,
            })
        })
        .collect()
}
