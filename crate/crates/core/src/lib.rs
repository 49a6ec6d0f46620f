//! LiDAR lane-line toolkit.
//!
//! The crate reconstructs lane polylines from point clouds (BEV rasterization,
//! segmentation, anisotropic scaling, DBSCAN, RANSAC) and scores polyline
//! predictions with an interpolation-aware matching F1 alongside cell-wise
//! segmentation F1 and rasterized polyline F1. A seeded scene generator
//! provides exactly-known ground truth for testing all of it.

pub mod bev;
pub mod dataio;
pub mod error;
pub mod extract;
pub mod geometry;
pub mod metrics;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    canonicalize_polyline, interp_lateral, pearson_straightness, LaneClass, Point3, PointCloud,
    Polyline2D, Polyline3D, RigidTransform,
};
