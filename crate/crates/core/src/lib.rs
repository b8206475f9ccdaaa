//! Unsupervised tree instance segmentation for dense forest point clouds.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithmic
//! stage of the pipeline:
//!
//! - [`cloud`], [`voxel`], [`spatial`]: point storage, voxel-grid sampling and
//!   k-d tree queries shared by all stages.
//! - [`terrain`]: cloth simulation ground filter, IDW terrain raster and
//!   height normalization.
//! - [`circlefit`]: kernel-scored circle fitting (gradient and RANSAC) with
//!   candidate selection.
//! - [`stems`]: stem layer extraction, two-stage DBSCAN, cluster filtering and
//!   DBH estimation.
//! - [`crown`]: seed selection and adaptive-radius region growing.
//! - [`metrics`]: instance matching, detection and segmentation metrics.
//!
//! Enable the `parallel` feature to run per-node, per-cluster and per-tree
//! work on the ambient rayon thread pool. Results do not depend on the
//! number of worker threads.

#![no_std]
// libm-backed float methods are shadowed by inherent ones whenever std is linked
#![allow(unused_imports)]

extern crate alloc;
#[cfg(any(test, feature = "parallel"))]
extern crate std;

pub mod circlefit;
pub mod cloud;
pub mod crown;
mod error;
mod linalg;
pub mod metrics;
mod par;
pub mod spatial;
pub mod stems;
pub mod terrain;
pub mod voxel;

pub use cloud::{Channel, PointCloud};
pub use error::{Error, Result};
pub use spatial::KdTree;
pub use voxel::{upsample_labels, voxel_downsample, VoxelMap};

/// Instance id reserved for points that belong to no tree.
pub const NON_TREE: i64 = -1;
