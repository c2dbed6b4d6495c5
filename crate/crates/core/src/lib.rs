//! Render-free simulator and training harness for multi-camera active
//! object tracking with pose-assisted collaboration.
//!
//! Fixed-position pan-tilt-zoom cameras track one walking target through
//! box occlusions. Each camera either follows the target itself (vision
//! proxy) or, when its switcher reports a loss, acts on the poses shared by
//! the cameras that still track it: by least-squares triangulation or by a
//! small policy network trained with advantage actor-critic.

pub mod controllers;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod learn;
pub mod shell;
pub mod world;

pub use error::{Error, Result};
