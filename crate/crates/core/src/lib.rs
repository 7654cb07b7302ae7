//! Direct depth and pose refinement with patch-based photometric consistency
//! and superpixel plane regularization.
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub use error::{Error, Result};
pub mod keypoints;
pub mod losses;
pub mod pipeline;
pub mod planes;
pub mod solver;
pub mod superpixels;
pub mod synth;
