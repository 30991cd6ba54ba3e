//! Run parameters: built-in defaults, overridden by a `key=value` file,
//! overridden again by command-line flags.

use std::path::Path;

use wristpipe_core::codec::ActionMode;
use wristpipe_core::grasp::SelectionMode;
use wristpipe_core::policy::RetrievalWeights;
use wristpipe_core::sim::DetectionNoise;

use crate::records::{lines, read_text, FormatError};

/// How an evaluation episode starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPhase {
    /// Grasp selection, approach and close, then the learned post-grasp loop.
    Full,
    /// Start from the scripted grasp and run only the post-grasp loop.
    PostGrasp,
}

impl std::str::FromStr for EvalPhase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(EvalPhase::Full),
            "post_grasp" | "post-grasp" => Ok(EvalPhase::PostGrasp),
            other => Err(format!("unknown eval phase {other:?} (full, post_grasp)")),
        }
    }
}

impl std::fmt::Display for EvalPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalPhase::Full => "full",
            EvalPhase::PostGrasp => "post_grasp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub chunk_size: usize,
    pub mode: ActionMode,
    pub stride: usize,
    pub min_confidence: f64,
    pub max_gap: u64,
    pub weights: RetrievalWeights,
    pub pose_scale: f64,
    pub score_threshold: f64,
    pub standoff: f64,
    pub approach_step: f64,
    pub budget: usize,
    pub trials: usize,
    pub demos: usize,
    pub noise: DetectionNoise,
    pub grasp_mode: SelectionMode,
    pub eval_phase: EvalPhase,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chunk_size: wristpipe_core::codec::DEFAULT_CHUNK_SIZE,
            mode: ActionMode::REL_T_REL_O,
            stride: wristpipe_core::dataset::DEFAULT_STRIDE,
            min_confidence: wristpipe_core::egolift::DEFAULT_MIN_CONFIDENCE,
            max_gap: wristpipe_core::egolift::DEFAULT_MAX_GAP,
            weights: RetrievalWeights::default(),
            pose_scale: wristpipe_core::policy::DEFAULT_POSE_SCALE,
            score_threshold: wristpipe_core::grasp::DEFAULT_SCORE_THRESHOLD,
            standoff: wristpipe_core::grasp::DEFAULT_STANDOFF,
            approach_step: wristpipe_core::grasp::DEFAULT_STEP,
            budget: wristpipe_core::executor::DEFAULT_BUDGET,
            trials: 20,
            demos: 50,
            noise: DetectionNoise { translation_std: 0.005, rotation_std: 0.0, dropout: 0.1 },
            grasp_mode: SelectionMode::AffordanceFused,
            eval_phase: EvalPhase::Full,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "chunk_size",
    "mode",
    "stride",
    "min_confidence",
    "max_gap",
    "weight_obs",
    "weight_goal",
    "weight_pose",
    "pose_scale",
    "score_threshold",
    "standoff",
    "approach_step",
    "budget",
    "trials",
    "demos",
    "noise_translation",
    "noise_rotation",
    "dropout",
    "grasp_mode",
    "eval_phase",
];

impl RunConfig {
    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value for {key}: {v:?}"))
        }
        fn unit(key: &str, v: &str) -> Result<f64, String> {
            let x: f64 = num(key, v)?;
            if (0.0..=1.0).contains(&x) {
                Ok(x)
            } else {
                Err(format!("{key} must lie in [0, 1], got {x}"))
            }
        }
        fn nonneg(key: &str, v: &str) -> Result<f64, String> {
            let x: f64 = num(key, v)?;
            if x >= 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(format!("{key} must be a finite non-negative number, got {x}"))
            }
        }
        fn positive(key: &str, v: &str) -> Result<f64, String> {
            let x = nonneg(key, v)?;
            if x > 0.0 {
                Ok(x)
            } else {
                Err(format!("{key} must be positive"))
            }
        }
        fn count(key: &str, v: &str) -> Result<usize, String> {
            let x: usize = num(key, v)?;
            if x > 0 {
                Ok(x)
            } else {
                Err(format!("{key} must be at least 1"))
            }
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "chunk_size" => self.chunk_size = count(key, value)?,
            "mode" => self.mode = value.parse().map_err(|e| format!("{e}"))?,
            "stride" => self.stride = count(key, value)?,
            "min_confidence" => self.min_confidence = unit(key, value)?,
            "max_gap" => self.max_gap = num(key, value)?,
            "weight_obs" => self.weights.obs = nonneg(key, value)?,
            "weight_goal" => self.weights.goal = nonneg(key, value)?,
            "weight_pose" => self.weights.pose = nonneg(key, value)?,
            "pose_scale" => self.pose_scale = nonneg(key, value)?,
            "score_threshold" => self.score_threshold = num(key, value)?,
            "standoff" => self.standoff = positive(key, value)?,
            "approach_step" => self.approach_step = positive(key, value)?,
            "budget" => self.budget = num(key, value)?,
            "trials" => self.trials = count(key, value)?,
            "demos" => self.demos = count(key, value)?,
            "noise_translation" => self.noise.translation_std = nonneg(key, value)?,
            "noise_rotation" => self.noise.rotation_std = nonneg(key, value)?,
            "dropout" => self.noise.dropout = unit(key, value)?,
            "grasp_mode" => self.grasp_mode = value.parse().map_err(|e| format!("{e}"))?,
            "eval_phase" => self.eval_phase = value.parse()?,
            other => return Err(format!("unknown config key {other:?}; known keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Apply every `key=value` line of a config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), FormatError> {
        let text = read_text(path)?;
        let name = path.display().to_string();
        for line in lines(&name, &text) {
            let (k, v) = line.text.split_once('=').ok_or_else(|| line.error("expected key=value"))?;
            self.set(k.trim(), v.trim()).map_err(|e| line.error(e))?;
        }
        Ok(())
    }
}
