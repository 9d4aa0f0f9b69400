use crate::error::{Error, Result};
use crate::spatial::Ray;
use crate::Vec3;

/// Range noise of the KITTI-style simulation, in meters.
pub const KITTI_RANGE_NOISE: f64 = 0.005;

/// Spinning multi-beam LiDAR geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub name: String,
    pub beams: usize,
    pub azimuth_step_deg: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub elevation_step_deg: f64,
    pub pulses_per_rev: usize,
    pub range_max: f64,
    pub noise_sigma: f64,
}

pub fn sensor_preset(name: &str) -> Result<SensorModel> {
    match name.to_ascii_lowercase().as_str() {
        "hdl32" | "hdl-32" => Ok(SensorModel {
            name: "hdl32".into(),
            beams: 32,
            azimuth_step_deg: 0.2,
            elevation_min_deg: -30.67,
            elevation_max_deg: 10.67,
            elevation_step_deg: 1.33,
            pulses_per_rev: 1800,
            range_max: 100.0,
            noise_sigma: 0.0,
        }),
        "hdl64" | "hdl-64" => Ok(SensorModel {
            name: "hdl64".into(),
            beams: 64,
            azimuth_step_deg: 0.16,
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            elevation_step_deg: 0.419,
            pulses_per_rev: 2250,
            range_max: 120.0,
            noise_sigma: 0.0,
        }),
        other => Err(Error::Config(format!("unknown sensor '{other}' (expected hdl32 or hdl64)"))),
    }
}

impl SensorModel {
    pub fn rays_per_revolution(&self) -> usize {
        self.beams * self.pulses_per_rev
    }

    pub fn vertical_fov_deg(&self) -> f64 {
        self.elevation_max_deg - self.elevation_min_deg
    }

    /// Beam `j` sits `j` steps above the lowest elevation.
    pub fn elevation_deg(&self, beam: usize) -> f64 {
        self.elevation_min_deg + beam as f64 * self.elevation_step_deg
    }

    pub fn azimuth_deg(&self, pulse: usize) -> f64 {
        pulse as f64 * self.azimuth_step_deg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("sensor {}: {msg}", self.name)));
        if self.beams == 0 || self.pulses_per_rev == 0 {
            return bad("beams and pulses_per_rev must be positive".into());
        }
        if !(self.azimuth_step_deg > 0.0) || !(self.elevation_step_deg >= 0.0) {
            return bad("angular steps must be positive".into());
        }
        if self.azimuth_deg(self.pulses_per_rev - 1) >= 360.0 {
            return bad(format!(
                "{} pulses of {}° exceed one revolution",
                self.pulses_per_rev, self.azimuth_step_deg
            ));
        }
        if !(self.range_max > 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("range_max must be positive and noise_sigma non-negative".into());
        }
        if !self.elevation_min_deg.is_finite() || !self.elevation_max_deg.is_finite() {
            return bad("elevation bounds must be finite".into());
        }
        Ok(())
    }

    /// Overrides one field by name, as read from a `key = value` config file.
    pub fn set_field(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("sensor field {key}: '{value}' is not a number")))
        };
        let int = || {
            value
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("sensor field {key}: '{value}' is not an integer")))
        };
        match key {
            "beams" => self.beams = int()?,
            "pulses_per_rev" => self.pulses_per_rev = int()?,
            "azimuth_step" | "azimuth_step_deg" => self.azimuth_step_deg = num()?,
            "elevation_min" | "elevation_min_deg" => self.elevation_min_deg = num()?,
            "elevation_max" | "elevation_max_deg" => self.elevation_max_deg = num()?,
            "elevation_step" | "elevation_step_deg" => self.elevation_step_deg = num()?,
            "range_max" => self.range_max = num()?,
            "noise_sigma" => self.noise_sigma = num()?,
            _ => return Err(Error::Config(format!("unknown sensor field '{key}'"))),
        }
        Ok(())
    }
}

/// Sensor pose for one revolution. Roll and yaw are zero; `pitch_deg` tilts
/// every beam up by that angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub pitch_deg: f64,
    pub frame: u32,
}

impl Pose {
    pub fn at(position: Vec3, frame: u32) -> Self {
        Pose {
            position,
            pitch_deg: 0.0,
            frame,
        }
    }
}

/// Forward axis +x rotated up by `elevation + pitch` about y, then by
/// `azimuth` about z (counter-clockwise seen from above).
pub fn ray_direction(azimuth_deg: f64, elevation_deg: f64, pitch_deg: f64) -> Vec3 {
    let (sa, ca) = azimuth_deg.to_radians().sin_cos();
    let (se, ce) = (elevation_deg + pitch_deg).to_radians().sin_cos();
    Vec3::new(ce * ca, ce * sa, se)
}

/// All rays of one revolution, ordered by azimuth index then beam index.
pub fn generate_revolution_rays(model: &SensorModel, pose: &Pose) -> Vec<Ray> {
    let elevations: Vec<f64> = (0..model.beams).map(|j| model.elevation_deg(j)).collect();
    let mut rays = Vec::with_capacity(model.rays_per_revolution());
    for i in 0..model.pulses_per_rev {
        let az = model.azimuth_deg(i);
        for &el in &elevations {
            rays.push(Ray {
                origin: pose.position,
                direction: ray_direction(az, el, pose.pitch_deg),
                max_range: model.range_max,
            });
        }
    }
    rays
}
