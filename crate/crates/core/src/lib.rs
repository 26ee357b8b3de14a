//! Planar multi-panorama pose estimation toolkit.
//!
//! The crate covers the geometric and numerical machinery around estimating
//! the SE(2) poses of a small cluster of co-located 360° panoramas:
//!
//! - [`pose`]: exact planar rigid-motion arithmetic.
//! - [`scene`]: room layouts, cameras, clusters, synthetic scenes and the
//!   training-time sampling/augmentation procedures.
//! - [`cues`]: column-wise floor-boundary angle, angular correspondence and
//!   co-visibility synthesized by ray casting.
//! - [`graph`]: directed pose graphs with relative-pose observations.
//! - [`solvers`]: greedy spanning-tree composition and Levenberg–Marquardt
//!   pose-graph optimization.
//! - [`losses`]: node and edge training losses with analytic gradients.
//! - [`message_passing`]: the edge-update / message / mean-aggregation
//!   dataflow with pluggable update functions.
//! - [`evaluation`]: rigid 2D alignment, ATE/ARE and summary statistics.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::needless_range_loop
)]

pub mod cues;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod losses;
pub mod message_passing;
pub mod pose;
pub mod scene;
pub mod solvers;
mod sum;

pub use error::{Error, Result};
pub use pose::{wrap_angle, Angle, Pose2, Vec2};
