//! Geometry engine for turning single-view metric depth into gravity-aligned
//! point clouds, pseudo 3D box annotations and partial-view depth renders,
//! plus the rotated-IoU / AP / volume-ratio metrics used to score them.
//!
//! Frame conventions used throughout:
//! - camera frame is right-handed with +X right, +Y down and +Z along the optical axis;
//! - the world frame after rotation correction has +Z up (against gravity);
//! - pixel centers sit at integer `(u, v)` coordinates.

pub mod annotate;
pub mod camera;
pub mod cloud;
pub mod depth;
pub mod error;
pub mod eval;
pub mod io;
pub mod normals;
pub mod priors;
pub mod render;
pub mod rotation;
pub mod synth;

pub use annotate::{Box2D, Box3D};
pub use camera::{CameraModel, FovAxis, Projection};
pub use cloud::PointCloud;
pub use depth::DepthImage;
pub use error::{Error, Result};
pub use normals::{NormalConsensus, NormalMap};
pub use priors::SizePriorDB;
pub use rotation::RotationMatrix;
