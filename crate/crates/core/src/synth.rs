//! Built-in synthetic scenes with known geometry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{GroupMapping, PointCloud, SurfaceGroup};
use crate::error::{Error, Result};
use crate::Vec3;

pub const GROUND_LABEL: u32 = 1;
pub const WALL_LABEL: u32 = 2;
pub const POLE_LABEL: u32 = 3;

/// Class→group table matching the labels used by these scenes.
pub fn default_mapping() -> GroupMapping {
    GroupMapping::parse("1 ground\n2 surface\n3 linear\n").expect("static mapping")
}

struct Builder {
    positions: Vec<Vec3>,
    labels: Vec<u32>,
    groups: Vec<SurfaceGroup>,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl Builder {
    fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter("noise sigma must be finite and non-negative".into()));
        }
        let noise = (sigma > 0.0).then(|| (Normal::new(0.0, sigma).expect("checked"), ChaCha8Rng::seed_from_u64(seed)));
        Ok(Builder {
            positions: Vec::new(),
            labels: Vec::new(),
            groups: Vec::new(),
            noise,
        })
    }

    /// Adds `p` displaced along `normal` by Gaussian noise.
    fn push(&mut self, p: Vec3, normal: Vec3, label: u32, group: SurfaceGroup) {
        let offset = match &mut self.noise {
            Some((dist, rng)) => dist.sample(rng),
            None => 0.0,
        };
        self.positions.push(p + normal * offset);
        self.labels.push(label);
        self.groups.push(group);
    }

    fn finish(self, sensor: Vec3) -> PointCloud {
        let n = self.positions.len();
        PointCloud {
            positions: self.positions,
            labels: Some(self.labels),
            groups: Some(self.groups),
            sensor_positions: Some(vec![sensor; n]),
            ..Default::default()
        }
    }
}

/// Square grid of `per_side`² points on z = 0 centered at the origin, with
/// Gaussian z-noise. Observed from `sensor`.
pub fn plane(side: f64, per_side: usize, sigma: f64, seed: u64, sensor: Vec3) -> Result<PointCloud> {
    if per_side < 2 || !(side > 0.0) {
        return Err(Error::InvalidParameter("plane needs side > 0 and at least 2 points per side".into()));
    }
    let mut b = Builder::new(sigma, seed)?;
    let step = side / (per_side - 1) as f64;
    for j in 0..per_side {
        for i in 0..per_side {
            let p = Vec3::new(-side / 2.0 + i as f64 * step, -side / 2.0 + j as f64 * step, 0.0);
            b.push(p, Vec3::z(), GROUND_LABEL, SurfaceGroup::Ground);
        }
    }
    Ok(b.finish(sensor))
}

/// Floor z = 0 (ground class) meeting a wall x = 0 (wall class) at a right
/// angle, each `size` × `size` with grid `spacing`.
pub fn dihedral(size: f64, spacing: f64, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(spacing > 0.0) || !(size > spacing) {
        return Err(Error::InvalidParameter("dihedral needs size > spacing > 0".into()));
    }
    let mut b = Builder::new(sigma, seed)?;
    let n = (size / spacing).round() as usize;
    for j in 0..=n {
        for i in 1..=n {
            let p = Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0);
            b.push(p, Vec3::z(), GROUND_LABEL, SurfaceGroup::Ground);
        }
    }
    for j in 0..=n {
        for k in 1..=n {
            let p = Vec3::new(0.0, j as f64 * spacing, k as f64 * spacing);
            b.push(p, Vec3::x(), WALL_LABEL, SurfaceGroup::Surface);
        }
    }
    Ok(b.finish(Vec3::new(size / 2.0, size / 2.0, size / 3.0)))
}

/// Layout of the pole scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleSpec {
    /// Ground square side, centered on the pole.
    pub ground_side: f64,
    pub ground_spacing: f64,
    pub pole_radius: f64,
    pub pole_height: f64,
    /// Vertical distance between rings of pole points.
    pub ring_spacing: f64,
    pub points_per_ring: usize,
    /// Angular span of each ring in degrees, centered on the sensor bearing.
    pub arc_deg: f64,
    pub sigma: f64,
    pub seed: u64,
    pub sensor: Vec3,
}

impl Default for PoleSpec {
    fn default() -> Self {
        PoleSpec {
            ground_side: 12.0,
            ground_spacing: 0.1,
            pole_radius: 0.03,
            pole_height: 4.0,
            ring_spacing: 0.01,
            points_per_ring: 5,
            arc_deg: 180.0,
            sigma: 0.0,
            seed: 0,
            sensor: Vec3::new(3.0, 0.0, 2.0),
        }
    }
}

/// Ground grid plus a thin vertical pole at the origin.
pub fn pole(spec: &PoleSpec) -> Result<PointCloud> {
    if !(spec.ground_spacing > 0.0) || !(spec.ring_spacing > 0.0) || spec.points_per_ring < 3 {
        return Err(Error::InvalidParameter("pole scene needs positive spacings and ≥ 3 points per ring".into()));
    }
    let mut b = Builder::new(spec.sigma, spec.seed)?;
    let n = (spec.ground_side / spec.ground_spacing).round() as usize;
    let half = spec.ground_side / 2.0;
    for j in 0..=n {
        for i in 0..=n {
            let p = Vec3::new(-half + i as f64 * spec.ground_spacing, -half + j as f64 * spec.ground_spacing, 0.0);
            if p.xy().norm() <= spec.pole_radius {
                continue;
            }
            b.push(p, Vec3::z(), GROUND_LABEL, SurfaceGroup::Ground);
        }
    }
    if !(spec.arc_deg > 0.0 && spec.arc_deg <= 360.0) {
        return Err(Error::InvalidParameter("pole arc must lie in (0, 360] degrees".into()));
    }
    let bearing = spec.sensor.y.atan2(spec.sensor.x);
    let span = spec.arc_deg.to_radians();
    let full = spec.arc_deg >= 360.0;
    let steps = if full { spec.points_per_ring } else { spec.points_per_ring - 1 };
    let rings = (spec.pole_height / spec.ring_spacing).round() as usize;
    for k in 1..=rings {
        let z = k as f64 * spec.ring_spacing;
        // alternate rings are rotated half a step so the surface is not ruled
        let phase = if k % 2 == 0 { 0.0 } else { 0.5 };
        for a in 0..spec.points_per_ring {
            let u = if full { (a as f64 + phase) / steps as f64 } else { (a as f64 + 0.5 * phase) / (steps as f64 + 0.5) };
            let theta = bearing - span / 2.0 + span * u;
            let radial = Vec3::new(theta.cos(), theta.sin(), 0.0);
            b.push(radial * spec.pole_radius + Vec3::new(0.0, 0.0, z), radial, POLE_LABEL, SurfaceGroup::Linear);
        }
    }
    Ok(b.finish(spec.sensor))
}

/// Layout of the anisotropic scan-line scene: parallel lines along x, densely
/// sampled along each line, with line gaps that widen away from the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanLineSpec {
    pub length: f64,
    pub lines: usize,
    /// Gap between the first two lines.
    pub first_gap: f64,
    /// Each gap is this factor times the previous one.
    pub gap_growth: f64,
    pub point_spacing: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ScanLineSpec {
    fn default() -> Self {
        ScanLineSpec {
            length: 8.0,
            lines: 40,
            first_gap: 0.04,
            gap_growth: 1.05,
            point_spacing: 0.02,
            sigma: 0.0,
            seed: 0,
        }
    }
}

pub fn scan_lines(spec: &ScanLineSpec) -> Result<PointCloud> {
    if spec.lines < 2 || !(spec.first_gap > 0.0) || !(spec.gap_growth > 0.0) || !(spec.point_spacing > 0.0) {
        return Err(Error::InvalidParameter("scan-line scene needs ≥ 2 lines and positive spacings".into()));
    }
    let mut b = Builder::new(spec.sigma, spec.seed)?;
    let per_line = (spec.length / spec.point_spacing).round() as usize + 1;
    let mut y = 0.0;
    let mut gap = spec.first_gap;
    for line in 0..spec.lines {
        if line > 0 {
            y += gap;
            gap *= spec.gap_growth;
        }
        for i in 0..per_line {
            let p = Vec3::new(i as f64 * spec.point_spacing, y, 0.0);
            b.push(p, Vec3::z(), GROUND_LABEL, SurfaceGroup::Ground);
        }
    }
    Ok(b.finish(Vec3::new(spec.length / 2.0, -2.0, 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_sizes_and_validity() {
        let p = plane(10.0, 11, 0.01, 1, Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p.len(), 121);
        p.validate().unwrap();
        let exact = plane(10.0, 11, 0.0, 1, Vec3::zeros()).unwrap();
        assert!(exact.positions.iter().all(|q| q.z == 0.0));

        let d = dihedral(2.0, 0.1, 0.0, 0).unwrap();
        d.validate().unwrap();
        assert_eq!(d.len(), 2 * 21 * 20);

        let pole_cloud = pole(&PoleSpec::default()).unwrap();
        pole_cloud.validate().unwrap();
        let on_pole = pole_cloud.labels.as_ref().unwrap().iter().filter(|&&l| l == POLE_LABEL).count();
        assert_eq!(on_pole, 400 * 5);
        let spec = PoleSpec::default();
        for i in (0..pole_cloud.len()).filter(|&i| pole_cloud.label(i) == Some(POLE_LABEL)) {
            let q = pole_cloud.positions[i];
            assert!((q.xy().norm() - spec.pole_radius).abs() < 1e-12);
            assert!(q.xy().dot(&spec.sensor.xy()) >= -1e-12, "arc faces the sensor");
        }
        let full = pole(&PoleSpec { arc_deg: 360.0, points_per_ring: 12, ..spec }).unwrap();
        assert_eq!(full.labels.as_ref().unwrap().iter().filter(|&&l| l == POLE_LABEL).count(), 400 * 12);
        assert!(pole(&PoleSpec { arc_deg: 0.0, ..spec }).is_err());

        let lines = scan_lines(&ScanLineSpec::default()).unwrap();
        lines.validate().unwrap();
        assert_eq!(lines.len(), 40 * 401);
    }

    #[test]
    fn same_seed_same_scene() {
        let a = plane(5.0, 20, 0.01, 9, Vec3::zeros()).unwrap();
        let b = plane(5.0, 20, 0.01, 9, Vec3::zeros()).unwrap();
        assert_eq!(a, b);
        let mapping = default_mapping();
        assert_eq!(mapping.group_of(POLE_LABEL), Some(SurfaceGroup::Linear));
    }
}
