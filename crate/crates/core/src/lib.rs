//! Dense mapping from an event camera and a standard camera.
//!
//! An event stream is turned into a semi-dense edge depth map by ray-counting
//! multi-view stereo ([`emvs`]). The frame captured at the reference view is
//! segmented by region growing ([`segmentation`]) and every qualifying region
//! is filled by distance-weighted interpolation of the edge depths
//! ([`fusion`]). [`metrics`] scores the result, [`synth`] generates planar
//! ground-truth scenes and [`pipeline`] ties everything together for the CLI.
//!
//! Poses are camera-to-world: a point `p_c` in camera coordinates maps to
//! `R * p_c + t` in the world frame. Depths are z-depths along the optical
//! axis of the reference camera.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod emvs;
pub mod error;
pub mod export;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use dataset::{CameraModel, Event, Frame, Pose, Trajectory};
pub use error::{Error, Result};
