//! Core of the collaborative assembly workbench.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`depth`] synthesizes or ingests depth frames and denoises them in
//!    disparity space (spatial, temporal and hole-filling filters).
//! 2. [`localization`] estimates the dominant table surface from a depth
//!    histogram, segments everything standing above it and extracts
//!    validated object centroids with median depths.
//! 3. [`geometry`] lifts pixel detections through the camera and
//!    end-effector transforms into the robot base frame.
//! 4. [`classification`] binds operator statements ("small gear: top-left")
//!    to localized candidates.
//! 5. [`planner`] turns an instruction plus the bindings into an ordered
//!    assembly plan, either deterministically or through a chat-completions
//!    backend, and [`executor`] runs that plan on a simulated workcell.
//!
//! [`pipeline`] wires the stages together and [`natb1`] models the task
//! board used for the benchmark scenes.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod board;
pub mod camera;
pub mod classification;
pub mod depth;
pub mod eval;
pub mod executor;
pub mod frame;
pub mod geometry;
pub mod label;
pub mod localization;
pub mod natb1;
pub mod pipeline;
pub mod planner;
pub mod scene;

pub use board::{BoardConfig, Slot};
pub use camera::CameraIntrinsics;
pub use classification::{AssociationResult, ClassificationStatement, SpatialDescriptor};
pub use depth::{FilterParams, TemporalState};
pub use executor::{ExecutionEvent, WorkcellState};
pub use frame::{DepthFrame, DisparityFrame};
pub use geometry::{BasePoint, RigidTransform};
pub use label::{Category, ComponentLabel, Size};
pub use localization::{Candidate, LocalizationParams};
pub use planner::{AssemblyPlan, AssemblySubtask};
pub use scene::SceneSpec;
