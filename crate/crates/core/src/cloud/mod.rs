//! Point clouds, splats and their on-disk formats.

mod io;
pub mod kitti;
mod mapping;
pub mod ply;
mod splat_io;

use std::fmt;
use std::str::FromStr;

pub use io::{load_cloud, save_cloud, save_cloud_with, CloudFormat};
pub use mapping::{map_semantic_groups, GroupMapping, SemanticSplit};
pub use ply::{Encoding, ScalarType};
pub use splat_io::{load_splats, save_splats, SPLAT_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::Vec3;

/// Coarse class of local geometry that drives splat growth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SurfaceGroup {
    Ground,
    Surface,
    Linear,
    NonSurface,
    /// Merged planar group produced by descriptor classification.
    GroundSurface,
}

impl SurfaceGroup {
    pub const ALL: [SurfaceGroup; 5] = [
        SurfaceGroup::Ground,
        SurfaceGroup::Surface,
        SurfaceGroup::Linear,
        SurfaceGroup::NonSurface,
        SurfaceGroup::GroundSurface,
    ];

    pub fn code(self) -> u8 {
        match self {
            SurfaceGroup::Ground => 0,
            SurfaceGroup::Surface => 1,
            SurfaceGroup::Linear => 2,
            SurfaceGroup::NonSurface => 3,
            SurfaceGroup::GroundSurface => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SurfaceGroup::Ground => "ground",
            SurfaceGroup::Surface => "surface",
            SurfaceGroup::Linear => "linear",
            SurfaceGroup::NonSurface => "non_surface",
            SurfaceGroup::GroundSurface => "ground_surface",
        }
    }
}

impl fmt::Display for SurfaceGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurfaceGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "ground" => SurfaceGroup::Ground,
            "surface" => SurfaceGroup::Surface,
            "linear" => SurfaceGroup::Linear,
            "non_surface" | "nonsurface" => SurfaceGroup::NonSurface,
            "ground_surface" | "groundsurface" => SurfaceGroup::GroundSurface,
            _ => return Err(Error::Config(format!("unknown surface group '{s}'"))),
        })
    }
}

/// A vertex property the toolkit does not interpret, carried through I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraProperty {
    pub name: String,
    pub ty: ScalarType,
    pub values: Vec<f64>,
}

/// Point positions with optional per-point attributes.
///
/// Every attribute vector that is present has one entry per position. A
/// normal entry of `None` marks a point whose neighborhood was too degenerate
/// to estimate one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Option<Vec3>>>,
    pub labels: Option<Vec<u32>>,
    pub groups: Option<Vec<SurfaceGroup>>,
    pub sensor_positions: Option<Vec<Vec3>>,
    pub frame_ids: Option<Vec<u32>>,
    pub extras: Vec<ExtraProperty>,
}

const UNIT_TOLERANCE: f64 = 1e-6;

impl PointCloud {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        PointCloud {
            positions,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn normal(&self, i: usize) -> Option<Vec3> {
        self.normals.as_ref().and_then(|n| n[i])
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn group(&self, i: usize) -> Option<SurfaceGroup> {
        self.groups.as_ref().map(|g| g[i])
    }

    pub fn extra(&self, name: &str) -> Option<&ExtraProperty> {
        self.extras.iter().find(|e| e.name == name)
    }

    /// Checks the attribute-length, finiteness and unit-normal invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let check = |name: &str, len: Option<usize>| -> Result<()> {
            match len {
                Some(l) if l != n => Err(Error::Structural(format!(
                    "attribute '{name}' has {l} entries for {n} points"
                ))),
                _ => Ok(()),
            }
        };
        check("normals", self.normals.as_ref().map(Vec::len))?;
        check("labels", self.labels.as_ref().map(Vec::len))?;
        check("groups", self.groups.as_ref().map(Vec::len))?;
        check("sensor_positions", self.sensor_positions.as_ref().map(Vec::len))?;
        check("frame_ids", self.frame_ids.as_ref().map(Vec::len))?;
        for e in &self.extras {
            check(&e.name, Some(e.values.len()))?;
        }
        if let Some(i) = self.positions.iter().position(|p| !is_finite(p)) {
            return Err(Error::InvalidRecord {
                index: i,
                reason: "position is not finite".into(),
            });
        }
        if let Some(normals) = &self.normals {
            for (i, n) in normals.iter().enumerate() {
                if let Some(n) = n {
                    if (n.norm() - 1.0).abs() > UNIT_TOLERANCE {
                        return Err(Error::InvalidRecord {
                            index: i,
                            reason: format!("normal has norm {}", n.norm()),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds a cloud from the given point indices, carrying every attribute.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        fn pick<T: Clone>(src: &Option<Vec<T>>, idx: &[usize]) -> Option<Vec<T>> {
            src.as_ref().map(|v| idx.iter().map(|&i| v[i].clone()).collect())
        }
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: pick(&self.normals, indices),
            labels: pick(&self.labels, indices),
            groups: pick(&self.groups, indices),
            sensor_positions: pick(&self.sensor_positions, indices),
            frame_ids: pick(&self.frame_ids, indices),
            extras: self
                .extras
                .iter()
                .map(|e| ExtraProperty {
                    name: e.name.clone(),
                    ty: e.ty,
                    values: indices.iter().map(|&i| e.values[i]).collect(),
                })
                .collect(),
        }
    }

    /// Appends `other`, which must carry the same set of attributes.
    pub fn append(&mut self, other: &PointCloud) -> Result<()> {
        fn join<T: Clone>(a: &mut Option<Vec<T>>, b: &Option<Vec<T>>, name: &str) -> Result<()> {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => {
                    a.extend_from_slice(b);
                    Ok(())
                }
                (None, None) => Ok(()),
                _ => Err(Error::Structural(format!(
                    "cannot append clouds: attribute '{name}' present in only one"
                ))),
            }
        }
        if self.is_empty() && self.extras.is_empty() && !other.is_empty() {
            let layout_empty = self.normals.is_none()
                && self.labels.is_none()
                && self.groups.is_none()
                && self.sensor_positions.is_none()
                && self.frame_ids.is_none();
            if layout_empty {
                *self = other.clone();
                return Ok(());
            }
        }
        let names: Vec<_> = self.extras.iter().map(|e| e.name.as_str()).collect();
        let other_names: Vec<_> = other.extras.iter().map(|e| e.name.as_str()).collect();
        if names != other_names {
            return Err(Error::Structural(
                "cannot append clouds: extra properties differ".into(),
            ));
        }
        join(&mut self.normals, &other.normals, "normals")?;
        join(&mut self.labels, &other.labels, "labels")?;
        join(&mut self.groups, &other.groups, "groups")?;
        join(&mut self.sensor_positions, &other.sensor_positions, "sensor_positions")?;
        join(&mut self.frame_ids, &other.frame_ids, "frame_ids")?;
        for (a, b) in self.extras.iter_mut().zip(&other.extras) {
            a.values.extend_from_slice(&b.values);
        }
        self.positions.extend_from_slice(&other.positions);
        Ok(())
    }
}

pub(crate) fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Oriented disk approximating a local surface patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    pub center: Vec3,
    pub normal: Vec3,
    pub radius: f64,
    pub group: SurfaceGroup,
    pub label: Option<u32>,
    /// Set only for per-frame dynamic-object splats.
    pub frame_id: Option<u32>,
}

impl Splat {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(format!("radius {} is not positive", self.radius));
        }
        if !is_finite(&self.center) {
            return Err("center is not finite".into());
        }
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(format!("normal has norm {}", self.normal.norm()));
        }
        Ok(())
    }
}

/// Which growth rules and per-group parameters produced a splat set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Basic,
    AdaSemantic,
    AdaDescr,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::AdaSemantic => "ada_semantic",
            Variant::AdaDescr => "ada_descr",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "basic" => Variant::Basic,
            "ada_semantic" | "adasemantic" | "semantic" | "adasplats" => Variant::AdaSemantic,
            "ada_descr" | "adadescr" | "descr" | "descriptor" => Variant::AdaDescr,
            _ => return Err(Error::Config(format!("unknown variant '{s}'"))),
        })
    }
}

/// An indexed collection of splats with generation metadata.
///
/// `seeds`, when known, holds for each splat the index of the cloud point it
/// was grown from. It is not persisted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplatSet {
    pub splats: Vec<Splat>,
    pub metadata: Vec<(String, String)>,
    pub seeds: Option<Vec<usize>>,
}

impl SplatSet {
    pub fn new(splats: Vec<Splat>) -> Self {
        SplatSet {
            splats,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    /// Concatenates two sets; indices of `other` are shifted by `self.len()`.
    /// Seed provenance is dropped because it refers to different clouds.
    pub fn concat(&self, other: &SplatSet) -> SplatSet {
        let mut splats = self.splats.clone();
        splats.extend_from_slice(&other.splats);
        let mut metadata = self.metadata.clone();
        for (k, v) in &other.metadata {
            if !metadata.iter().any(|(mk, _)| mk == k) {
                metadata.push((k.clone(), v.clone()));
            }
        }
        SplatSet {
            splats,
            metadata,
            seeds: None,
        }
    }

    pub fn has_dynamic(&self) -> bool {
        self.splats.iter().any(|s| s.frame_id.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(n: usize) -> PointCloud {
        PointCloud {
            positions: (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
            labels: Some((0..n as u32).collect()),
            ..Default::default()
        }
    }

    #[test]
    fn validate_catches_length_mismatch() {
        let mut c = labeled(3);
        c.validate().unwrap();
        c.labels.as_mut().unwrap().pop();
        assert!(matches!(c.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn validate_catches_nan_and_bad_normals() {
        let mut c = labeled(2);
        c.positions[1].y = f64::NAN;
        assert!(matches!(c.validate(), Err(Error::InvalidRecord { index: 1, .. })));
        let mut c = labeled(2);
        c.normals = Some(vec![Some(Vec3::z()), Some(Vec3::new(0.0, 0.0, 2.0))]);
        assert!(matches!(c.validate(), Err(Error::InvalidRecord { index: 1, .. })));
    }

    #[test]
    fn select_and_append_keep_layout() {
        let c = labeled(5);
        let mut s = c.select(&[4, 1]);
        assert_eq!(s.labels, Some(vec![4, 1]));
        s.append(&c.select(&[0])).unwrap();
        assert_eq!(s.len(), 3);
        s.validate().unwrap();
        let bare = PointCloud::from_positions(vec![Vec3::zeros()]);
        assert!(s.append(&bare).is_err());
    }

    #[test]
    fn group_codes_round_trip() {
        for g in SurfaceGroup::ALL {
            assert_eq!(SurfaceGroup::from_code(g.code()), Some(g));
            assert_eq!(g.name().parse::<SurfaceGroup>().unwrap(), g);
        }
        assert_eq!(SurfaceGroup::from_code(9), None);
    }

    #[test]
    fn splat_validation() {
        let mut s = Splat {
            center: Vec3::zeros(),
            normal: Vec3::z(),
            radius: 1.0,
            group: SurfaceGroup::Surface,
            label: None,
            frame_id: None,
        };
        assert!(s.validate().is_ok());
        s.radius = 0.0;
        assert!(s.validate().is_err());
        s.radius = 1.0;
        s.normal = Vec3::new(0.0, 0.0, 1.1);
        assert!(s.validate().is_err());
    }
}
