//! Adaptive splat surface modeling and spinning-LiDAR simulation.
//!
//! The crate turns outdoor point clouds into sets of oriented disks
//! ("splats"), optionally denoising and isotropically resampling the cloud on
//! the splat surface, and simulates rotating multi-beam LiDARs by casting
//! rays against the splats through a bounding-volume hierarchy.
//!
//! Stages, in pipeline order:
//!
//! * [`cloud`]: point clouds, splat sets, PLY / KITTI I/O, semantic groups
//! * [`spatial`]: exact k-d tree neighborhoods and the splat BVH
//! * [`features`]: PCA normals, scale statistics, eigenvalue descriptors
//! * [`splatgen`]: basic and adaptive splat growth
//! * [`resample`]: denoising, density-driven resampling, the full pipeline
//! * [`lidar`]: firing sequences, multi-depth returns, trajectories
//! * [`evaluate`]: cloud-to-cloud distance and density statistics
//! * [`synth`]: synthetic scenes used by tests and the CLI

pub mod cloud;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod lidar;
pub mod resample;
pub mod spatial;
pub mod splatgen;
pub mod synth;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use cloud::{GroupMapping, PointCloud, Splat, SplatSet, SurfaceGroup, Variant};
pub use error::{Error, Result};
pub use spatial::{Bvh, Hit, PointIndex, Ray};
