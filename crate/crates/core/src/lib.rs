//! Zero-shot part segmentation of triangle meshes.
//!
//! A mesh is rendered from a fixed spherical camera trajectory, a pluggable
//! 2D backend returns text-grounded boxes and masks per view, and the masks
//! are voted back onto mesh faces through the face-index map: masked faces
//! gain the view's confidence, other visible faces lose it. Scores from an
//! untextured and a textured rendering branch are averaged, smoothed over
//! neighboring faces and thresholded.

pub mod backend;
pub mod bitmap;
pub mod error;
pub mod eval;
pub mod mesh;
pub mod raster;
pub mod revote;
pub mod viewgen;

pub use error::{Error, Result};
