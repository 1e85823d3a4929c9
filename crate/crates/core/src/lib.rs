//! Depth and rectification from water drops stuck to a transparent plate.
//!
//! A drop on glass acts as a small fisheye lens. Given its footprint in the
//! image, [`solver`] recovers the drop surface, [`raytrace`] maps each drop
//! pixel back to a scene direction, and [`stereo`] triangulates between two
//! drops. [`rectify`] removes the drop distortion altogether.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod formats;
pub mod geom;
pub mod optics;
pub mod raytrace;
pub mod rectify;
pub mod scene;
pub mod solver;
pub mod stereo;
pub mod volume;

pub use config::{Boundary, OpticalConfig, PipelineConfig, SolverParams};
pub use error::{Error, Result};
pub use geom::{DropMask, HeightField, PixelSet, RasterGray, Vec3};
