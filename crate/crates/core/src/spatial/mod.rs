//! Exact nearest-neighbor queries over points and ray casting over splats.

mod bvh;
mod kdtree;

pub use bvh::{
    brute_force_all_hits, brute_force_first_hit, intersect_disk, intersect_splat, Bvh, Hit, Ray,
    LEAF_SIZE, PARALLEL_EPS, SELF_INTERSECTION_EPS,
};
pub use kdtree::{Neighbor, PointIndex};
