//! Close-up 3D reconstruction of a primary tree branch and its side branches
//! from binary masks and camera poses, plus the simulator used to exercise it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod eval;
pub mod export;
pub mod experiment;
pub mod geometry;
pub mod skeleton2d;
pub mod model3d;
pub mod simulator;
pub mod triangulate;

pub use error::{Error, Result};
