//! Cloud-to-cloud distances, density uniformity and splat coverage.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::cloud::{PointCloud, SplatSet};
use crate::error::{Error, Result};
use crate::spatial::PointIndex;
use crate::Vec3;

fn nn_distances(sim: &[Vec3], ori: &PointIndex) -> Vec<f64> {
    sim.par_iter()
        .map(|p| ori.nearest(p).map_or(f64::INFINITY, |n| n.dist()))
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean distance from each simulated point to its nearest original point.
/// Not symmetric.
pub fn c2c_distance(sim: &PointCloud, ori: &PointCloud) -> Result<f64> {
    if sim.is_empty() {
        return Err(Error::Empty("simulated cloud"));
    }
    let index = PointIndex::build(ori)?;
    Ok(mean(&nn_distances(&sim.positions, &index)))
}

/// Mean distance from each point to the plane `n·x + d = 0`.
pub fn c2c_to_plane(sim: &PointCloud, normal: Vec3, d: f64) -> Result<f64> {
    if sim.is_empty() {
        return Err(Error::Empty("simulated cloud"));
    }
    let len = normal.norm();
    if !(len > 0.0) {
        return Err(Error::InvalidParameter("plane normal must be non-zero".into()));
    }
    let dists: Vec<f64> = sim.positions.iter().map(|p| (normal.dot(p) + d).abs() / len).collect();
    Ok(mean(&dists))
}

/// C2C restricted to one class. `value` is `None` when the class is missing
/// from either cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassC2c {
    pub class: u32,
    pub value: Option<f64>,
    /// Simulated points of this class.
    pub count: usize,
}

/// Per-class C2C, measuring simulated points of class `c` against original
/// points of the same class.
pub fn c2c_per_class(sim: &PointCloud, ori: &PointCloud, classes: &[u32]) -> Result<Vec<ClassC2c>> {
    let sim_labels = sim.labels.as_ref().ok_or(Error::MissingAttribute("labels on simulated cloud"))?;
    let ori_labels = ori.labels.as_ref().ok_or(Error::MissingAttribute("labels on original cloud"))?;
    classes
        .iter()
        .map(|&class| {
            let pick = |cloud: &PointCloud, labels: &[u32]| -> Vec<Vec3> {
                labels
                    .iter()
                    .zip(&cloud.positions)
                    .filter(|(l, _)| **l == class)
                    .map(|(_, p)| *p)
                    .collect()
            };
            let s = pick(sim, sim_labels);
            let o = pick(ori, ori_labels);
            let value = if s.is_empty() || o.is_empty() {
                None
            } else {
                Some(mean(&nn_distances(&s, &PointIndex::new(&o))))
            };
            Ok(ClassC2c {
                class,
                value,
                count: s.len(),
            })
        })
        .collect()
}

/// Distribution of per-point neighbor counts within a fixed radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDensity {
    pub mean: f64,
    pub std: f64,
    /// std / mean; zero when the mean is zero.
    pub cv: f64,
}

/// Neighbor counts (the point itself excluded) within `radius` of every
/// point.
pub fn local_counts(cloud: &PointCloud, radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("density radius must be positive".into()));
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let index = PointIndex::build(cloud)?;
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|i| index.count_within(&cloud.positions[i], radius, Some(i)))
        .collect())
}

pub fn density_stats(cloud: &PointCloud, radius: f64) -> Result<LocalDensity> {
    let counts = local_counts(cloud, radius)?;
    if counts.is_empty() {
        return Err(Error::Empty("cloud"));
    }
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let m = mean(&values);
    let std = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    Ok(LocalDensity {
        mean: m,
        std,
        cv: if m > 0.0 { std / m } else { 0.0 },
    })
}

/// Fraction of points lying on some splat: within `tolerance` of its plane
/// and projecting inside its radius.
pub fn coverage_fraction(set: &SplatSet, cloud: &PointCloud, tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter("coverage tolerance must be positive".into()));
    }
    if cloud.is_empty() {
        return Err(Error::Empty("cloud"));
    }
    if set.is_empty() {
        return Ok(0.0);
    }
    let centers: Vec<Vec3> = set.splats.iter().map(|s| s.center).collect();
    let index = PointIndex::new(&centers);
    let reach = set.splats.iter().map(|s| s.radius).fold(0.0, f64::max) + tolerance;
    let covered = cloud
        .positions
        .par_iter()
        .filter(|p| {
            index.within(p, reach, None).iter().any(|nb| {
                let s = &set.splats[nb.index];
                let d = *p - s.center;
                let h = s.normal.dot(&d);
                h.abs() <= tolerance && (d - s.normal * h).norm() <= s.radius
            })
        })
        .count();
    Ok(covered as f64 / cloud.len() as f64)
}

/// Evaluation results in the shape of the report CSVs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub c2c_mean: f64,
    pub evaluated_points: usize,
    pub per_class: Vec<ClassC2c>,
    pub density: Option<LocalDensity>,
    pub coverage: Option<f64>,
    pub primitives: Option<usize>,
    pub timings: Vec<(String, f64)>,
    pub notes: Vec<(String, String)>,
}

impl EvalReport {
    /// Rows of `metric,class,value,count`. Absent per-class values are
    /// written as `absent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,class,value,count\n");
        let _ = writeln!(out, "c2c_mean,,{},{}", self.c2c_mean, self.evaluated_points);
        for c in &self.per_class {
            match c.value {
                Some(v) => {
                    let _ = writeln!(out, "c2c_class,{},{},{}", c.class, v, c.count);
                }
                None => {
                    let _ = writeln!(out, "c2c_class,{},absent,{}", c.class, c.count);
                }
            }
        }
        if let Some(d) = self.density {
            let _ = writeln!(out, "density_mean,,{},{}", d.mean, self.evaluated_points);
            let _ = writeln!(out, "density_std,,{},{}", d.std, self.evaluated_points);
            let _ = writeln!(out, "density_cv,,{},{}", d.cv, self.evaluated_points);
        }
        if let Some(c) = self.coverage {
            let _ = writeln!(out, "coverage,,{c},");
        }
        if let Some(n) = self.primitives {
            let _ = writeln!(out, "primitives,,{n},");
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("stage,seconds\n");
        for (stage, s) in &self.timings {
            let _ = writeln!(out, "{stage},{s}");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "C2C mean: {:.6} m over {} points", self.c2c_mean, self.evaluated_points);
        for c in &self.per_class {
            match c.value {
                Some(v) => {
                    let _ = writeln!(out, "  class {:>5}: {:.6} m ({} points)", c.class, v, c.count);
                }
                None => {
                    let _ = writeln!(out, "  class {:>5}: absent ({} points)", c.class, c.count);
                }
            }
        }
        if let Some(d) = self.density {
            let _ = writeln!(out, "local density: mean {:.3}, std {:.3}, cv {:.4}", d.mean, d.std, d.cv);
        }
        if let Some(c) = self.coverage {
            let _ = writeln!(out, "coverage: {:.2}%", 100.0 * c);
        }
        if let Some(n) = self.primitives {
            let _ = writeln!(out, "primitives: {n}");
        }
        for (k, v) in &self.notes {
            let _ = writeln!(out, "{k}: {v}");
        }
        out
    }
}
