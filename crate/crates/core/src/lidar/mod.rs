//! Spinning LiDAR simulation over splat scenes.

mod sensor;
mod sim;
mod trajectory;

pub use sensor::{generate_revolution_rays, ray_direction, sensor_preset, Pose, SensorModel, KITTI_RANGE_NOISE};
pub use sim::{
    depth_weight, simulate_scan, weighted_return, MultiDepth, Scan, ScanOptions, ScanReturn, SplatScene,
    WeightedReturn, DEFAULT_DEPTH, DEFAULT_DEPTH_GAP,
};
pub use trajectory::{
    format_trajectory, linear_trajectory, load_trajectory, offset_trajectory, parse_trajectory, simulate_trajectory,
    splat_dynamic_frames, TrajectoryOutput, DYNAMIC_SPLAT_RADIUS,
};
