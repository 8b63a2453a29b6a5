//! Semantic occupancy prediction from a persistent memory of 3D semantic
//! Gaussians.
//!
//! A scene is covered by a regular lattice of Gaussians. Each camera frame
//! selects the Gaussians inside its frustum, refines them in camera
//! coordinates in a few damped stages, and writes them back. Occupancy grids
//! are read out by splatting the Gaussians onto voxel centers.
//!
//! The refinement step is pluggable through [`refine::Refiner`]; the crate
//! ships a depth-oracle refiner driven by ray-cast ground truth, which is
//! what the synthetic dataset and the end-to-end runs use.

pub mod classes;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod snapshot;
pub mod splat;

pub use error::{Error, Result};
pub use gaussian::{GaussianConfig, GaussianMemory, SemanticGaussian};
pub use geometry::{Intrinsics, Pose, Quat, Vec3};
pub use grid::{GridGeometry, VoxelGrid, VoxelMask, VOXEL_SIZE};
pub use pipeline::{run_local, run_sequence, EmbodiedState, RunConfig};
pub use refine::{ConfidenceSchedule, Observation, OracleParams, OracleRefiner, Refiner};
