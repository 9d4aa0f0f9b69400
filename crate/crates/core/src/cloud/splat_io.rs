//! Splat sets as binary PLY: `x y z nx ny nz radius` doubles plus optional
//! `label` (int, -1 = none), `group` (uchar) and `frame_id` (int, -1 = none).

use std::path::Path;

use super::ply::{self, Column, Encoding, ScalarType, VertexTable};
use super::{Splat, SplatSet, SurfaceGroup};
use crate::error::{Error, Result};
use crate::Vec3;

pub const SPLAT_FORMAT_VERSION: u32 = 1;
const VERSION_TAG: &str = "splatsim-splats";
const META_TAG: &str = "meta";

fn to_table(set: &SplatSet) -> VertexTable {
    let s = &set.splats;
    let col = |name: &str, ty: ScalarType, f: &dyn Fn(&Splat) -> f64| Column {
        name: name.into(),
        ty,
        values: s.iter().map(f).collect(),
    };
    let mut columns = vec![
        col("x", ScalarType::F64, &|s| s.center.x),
        col("y", ScalarType::F64, &|s| s.center.y),
        col("z", ScalarType::F64, &|s| s.center.z),
        col("nx", ScalarType::F64, &|s| s.normal.x),
        col("ny", ScalarType::F64, &|s| s.normal.y),
        col("nz", ScalarType::F64, &|s| s.normal.z),
        col("radius", ScalarType::F64, &|s| s.radius),
    ];
    if s.iter().any(|s| s.label.is_some()) {
        columns.push(col("label", ScalarType::I32, &|s| {
            s.label.map_or(-1.0, |l| l as f64)
        }));
    }
    columns.push(col("group", ScalarType::U8, &|s| s.group.code() as f64));
    if s.iter().any(|s| s.frame_id.is_some()) {
        columns.push(col("frame_id", ScalarType::I32, &|s| {
            s.frame_id.map_or(-1.0, |f| f as f64)
        }));
    }
    let mut comments = vec![format!("{VERSION_TAG} {SPLAT_FORMAT_VERSION}")];
    for (k, v) in &set.metadata {
        comments.push(format!("{META_TAG} {k}={v}"));
    }
    VertexTable {
        count: s.len(),
        comments,
        columns,
    }
}

pub fn save_splats(set: &SplatSet, path: &Path) -> Result<()> {
    for (i, s) in set.splats.iter().enumerate() {
        s.validate()
            .map_err(|reason| Error::InvalidRecord { index: i, reason })?;
        if s.label.is_some_and(|l| l > i32::MAX as u32) || s.frame_id.is_some_and(|f| f > i32::MAX as u32) {
            return Err(Error::InvalidRecord {
                index: i,
                reason: "label or frame id exceeds int range".into(),
            });
        }
    }
    ply::write_file(path, &to_table(set), Encoding::BinaryLittleEndian)
}

fn optional_id(v: f64, index: usize, what: &str) -> Result<Option<u32>> {
    if v == -1.0 {
        Ok(None)
    } else if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(Some(v as u32))
    } else {
        Err(Error::InvalidRecord {
            index,
            reason: format!("invalid {what} {v}"),
        })
    }
}

pub(crate) fn from_table(mut table: VertexTable) -> Result<SplatSet> {
    let mut metadata = Vec::new();
    for c in &table.comments {
        if let Some(rest) = c.strip_prefix(VERSION_TAG) {
            let version: u32 = rest
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("unreadable splat format version '{rest}'")))?;
            if version != SPLAT_FORMAT_VERSION {
                return Err(Error::Format(format!(
                    "splat format version {version}, expected {SPLAT_FORMAT_VERSION}"
                )));
            }
        } else if let Some(rest) = c.strip_prefix(META_TAG) {
            if let Some((k, v)) = rest.trim().split_once('=') {
                metadata.push((k.to_string(), v.to_string()));
            }
        }
    }
    let mut req = |name: &str| {
        table
            .take_column(&[name])
            .map(|c| c.values)
            .ok_or_else(|| Error::Format(format!("splat file lacks '{name}'")))
    };
    let [x, y, z, nx, ny, nz, r] = ["x", "y", "z", "nx", "ny", "nz", "radius"].map(&mut req);
    let (x, y, z, nx, ny, nz, r) = (x?, y?, z?, nx?, ny?, nz?, r?);
    let labels = table.take_column(&["label"]).map(|c| c.values);
    let groups = table.take_column(&["group"]).map(|c| c.values);
    let frames = table.take_column(&["frame_id"]).map(|c| c.values);

    let mut splats = Vec::with_capacity(table.count);
    for i in 0..table.count {
        let mut normal = Vec3::new(nx[i], ny[i], nz[i]);
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidRecord {
                index: i,
                reason: "zero or non-finite normal".into(),
            });
        }
        if (len - 1.0).abs() > 1e-12 {
            normal /= len;
        }
        let group = match &groups {
            Some(g) => SurfaceGroup::from_code(g[i] as u8).ok_or_else(|| Error::InvalidRecord {
                index: i,
                reason: format!("unknown group code {}", g[i]),
            })?,
            None => SurfaceGroup::Surface,
        };
        let splat = Splat {
            center: Vec3::new(x[i], y[i], z[i]),
            normal,
            radius: r[i],
            group,
            label: labels.as_ref().map(|l| optional_id(l[i], i, "label")).transpose()?.flatten(),
            frame_id: frames.as_ref().map(|f| optional_id(f[i], i, "frame id")).transpose()?.flatten(),
        };
        splat
            .validate()
            .map_err(|reason| Error::InvalidRecord { index: i, reason })?;
        splats.push(splat);
    }
    Ok(SplatSet {
        splats,
        metadata,
        seeds: None,
    })
}

pub fn load_splats(path: &Path) -> Result<SplatSet> {
    from_table(ply::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splat(r: f64) -> Splat {
        Splat {
            center: Vec3::new(1.0, 2.0, 3.0),
            normal: Vec3::z(),
            radius: r,
            group: SurfaceGroup::Ground,
            label: Some(3),
            frame_id: None,
        }
    }

    #[test]
    fn zero_radius_record_rejected() {
        let mut table = to_table(&SplatSet::new(vec![splat(1.0), splat(1.0)]));
        table.column("radius").unwrap();
        let radius = table.columns.iter_mut().find(|c| c.name == "radius").unwrap();
        radius.values[1] = 0.0;
        let bytes = ply::encode(&table, Encoding::BinaryLittleEndian).unwrap();
        assert!(matches!(
            from_table(ply::parse(&bytes).unwrap()),
            Err(Error::InvalidRecord { index: 1, .. })
        ));
    }

    #[test]
    fn frame_column_absent() {
        let table = to_table(&SplatSet::new(vec![splat(1.0)]));
        assert!(table.column("frame_id").is_none());
        let set = from_table(table).unwrap();
        assert_eq!(set.splats[0].frame_id, None);
        assert_eq!(set.splats[0].label, Some(3));
    }

    #[test]
    fn version_mismatch() {
        let mut table = to_table(&SplatSet::new(vec![splat(1.0)]));
        table.comments[0] = format!("{VERSION_TAG} 99");
        assert!(matches!(from_table(table), Err(Error::Format(_))));
    }

    #[test]
    fn metadata_survives() {
        let mut set = SplatSet::new(vec![splat(0.5)]);
        set.set_meta("variant", "basic");
        set.set_meta("alpha", 0.2);
        let back = from_table(to_table(&set)).unwrap();
        assert_eq!(back.meta("variant"), Some("basic"));
        assert_eq!(back.meta("alpha"), Some("0.2"));
    }
}
