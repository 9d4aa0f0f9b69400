use std::collections::BTreeMap;
use std::path::Path;

use super::sensor::{Pose, SensorModel};
use super::sim::{simulate_scan, Scan, ScanOptions, SplatScene};
use crate::cloud::{PointCloud, Splat, SplatSet, SurfaceGroup};
use crate::error::{Error, Result};
use crate::Vec3;

/// Radius of the per-point splats that model moving objects.
pub const DYNAMIC_SPLAT_RADIUS: f64 = 0.14;

/// Parses `frame x y z [pitch_deg]` lines; blank lines and `#` comments are
/// ignored.
pub fn parse_trajectory(text: &str) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("trajectory line {}: {what}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(bad("expected `frame x y z [pitch_deg]`"));
        }
        let frame = fields[0].parse::<u32>().map_err(|_| bad("frame must be a non-negative integer"))?;
        let mut nums = [0.0; 4];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().map_err(|_| bad("coordinates must be numbers"))?;
            if !slot.is_finite() {
                return Err(bad("coordinates must be finite"));
            }
        }
        poses.push(Pose {
            position: Vec3::new(nums[0], nums[1], nums[2]),
            pitch_deg: nums[3],
            frame,
        });
    }
    Ok(poses)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text)
}

pub fn format_trajectory(poses: &[Pose]) -> String {
    poses
        .iter()
        .map(|p| {
            format!(
                "{} {} {} {} {}\n",
                p.frame, p.position.x, p.position.y, p.position.z, p.pitch_deg
            )
        })
        .collect()
}

/// Shifts every pose by `delta`.
pub fn offset_trajectory(poses: &[Pose], delta: Vec3) -> Vec<Pose> {
    poses
        .iter()
        .map(|p| Pose {
            position: p.position + delta,
            ..*p
        })
        .collect()
}

/// `count` evenly spaced poses from `start` to `end` inclusive, numbered
/// from `first_frame`.
pub fn linear_trajectory(start: Vec3, end: Vec3, count: usize, first_frame: u32) -> Vec<Pose> {
    (0..count)
        .map(|i| {
            let s = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            Pose::at(start + (end - start) * s, first_frame + i as u32)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub scans: Vec<Scan>,
    pub accumulated: PointCloud,
}

/// One scan per pose. With dynamic splats in the scene each scan only sees
/// the dynamic splats of its own frame.
pub fn simulate_trajectory(
    scene: &SplatScene,
    model: &SensorModel,
    poses: &[Pose],
    opts: &ScanOptions,
) -> Result<TrajectoryOutput> {
    if poses.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let gated = scene.set.has_dynamic();
    let mut scans = Vec::with_capacity(poses.len());
    let mut accumulated = PointCloud::default();
    for pose in poses {
        let options = ScanOptions {
            frame_filter: if gated { Some(pose.frame) } else { opts.frame_filter },
            ..*opts
        };
        let scan = simulate_scan(scene, model, pose, &options)?;
        let cloud = scan.to_cloud();
        if accumulated.is_empty() {
            accumulated = cloud;
        } else if !cloud.is_empty() {
            if cloud.labels.is_none() {
                accumulated.labels = None;
            }
            let mut cloud = cloud;
            if accumulated.labels.is_none() {
                cloud.labels = None;
            }
            accumulated.append(&cloud)?;
        }
        log::debug!("frame {}: {} returns", pose.frame, scan.len());
        scans.push(scan);
    }
    Ok(TrajectoryOutput { scans, accumulated })
}

/// One fixed-radius splat per dynamic point, tagged with its frame. The
/// normal is the point's own, else a unit vector towards its sensor, else +z.
pub fn splat_dynamic_frames(frames: &BTreeMap<u32, PointCloud>) -> SplatSet {
    let mut splats = Vec::new();
    for (&frame, cloud) in frames {
        for i in 0..cloud.len() {
            let p = cloud.positions[i];
            let towards_sensor = cloud
                .sensor_positions
                .as_ref()
                .map(|s| s[i] - p)
                .filter(|d| d.norm() > 0.0)
                .map(|d| d.normalize());
            let normal = cloud.normal(i).or(towards_sensor).unwrap_or_else(Vec3::z);
            splats.push(Splat {
                center: p,
                normal,
                radius: DYNAMIC_SPLAT_RADIUS,
                group: cloud.group(i).unwrap_or(SurfaceGroup::NonSurface),
                label: cloud.label(i),
                frame_id: Some(frame),
            });
        }
    }
    let mut set = SplatSet::new(splats);
    set.set_meta("dynamic_radius", DYNAMIC_SPLAT_RADIUS);
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_text_round_trip() {
        let poses = parse_trajectory("# frame x y z\n0 1 2 3\n1 4 5 6 -2.5\n\n").unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(poses[1].pitch_deg, -2.5);
        assert_eq!(poses[0].pitch_deg, 0.0);
        assert_eq!(parse_trajectory(&format_trajectory(&poses)).unwrap(), poses);
        assert!(parse_trajectory("0 1 2").is_err());
        assert!(parse_trajectory("-1 1 2 3").is_err());
        assert!(parse_trajectory("0 1 2 nan").is_err());
    }

    #[test]
    fn offset_and_linear_helpers() {
        let poses = vec![Pose::at(Vec3::new(1.0, 2.0, 3.0), 0)];
        let shifted = offset_trajectory(&poses, Vec3::new(1.0, 1.0, -1.0));
        assert_eq!(shifted[0].position, Vec3::new(2.0, 3.0, 2.0));

        let line = linear_trajectory(Vec3::zeros(), Vec3::new(9.0, 0.0, 0.0), 4, 10);
        assert_eq!(line.len(), 4);
        assert_eq!(line[3].position, Vec3::new(9.0, 0.0, 0.0));
        assert_eq!(line[3].frame, 13);
        for w in line.windows(2) {
            assert!(((w[1].position - w[0].position).norm() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dynamic_splats() {
        let mut frames = BTreeMap::new();
        let mut c = PointCloud::from_positions(vec![Vec3::zeros(); 100]);
        c.sensor_positions = Some(vec![Vec3::new(0.0, 0.0, 5.0); 100]);
        frames.insert(3, c);
        frames.insert(4, PointCloud::default());
        let set = splat_dynamic_frames(&frames);
        assert_eq!(set.len(), 100);
        assert!(set.splats.iter().all(|s| s.radius == 0.14 && s.frame_id == Some(3)));
        assert_eq!(set.splats[0].normal, Vec3::z());
    }
}
