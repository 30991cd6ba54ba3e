//! Skill distillation from egocentric video: lift hand detections into
//! world trajectories, cut them into action chunks, retrieve chunks at
//! deployment time, and execute them in a kinematic kitchen simulator.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod codec;
pub mod dataset;
pub mod egolift;
pub mod executor;
pub mod grasp;
pub mod math;
pub mod policy;
pub mod se3;
pub mod sim;
