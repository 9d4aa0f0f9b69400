use std::path::Path;

use super::ply::{self, Column, Encoding, ScalarType, VertexTable};
use super::{kitti, ExtraProperty, PointCloud, SurfaceGroup};
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    KittiBin,
}

impl CloudFormat {
    /// Guesses the format from a file extension (`.bin` means KITTI).
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("bin") => CloudFormat::KittiBin,
            _ => CloudFormat::Ply,
        }
    }
}

const LABEL_NAMES: &[&str] = &["label", "class", "semantic", "scalar_label"];
const FRAME_NAMES: &[&str] = &["frame_id", "frame"];

/// Loads a cloud. Attributes the file does not carry are left absent.
pub fn load_cloud(path: &Path, format: CloudFormat, labels_path: Option<&Path>) -> Result<PointCloud> {
    let mut cloud = match format {
        CloudFormat::Ply => cloud_from_table(ply::read_file(path)?)?,
        CloudFormat::KittiBin => {
            let scan = kitti::read_scan(path)?;
            PointCloud {
                positions: scan.positions,
                extras: vec![ExtraProperty {
                    name: "intensity".into(),
                    ty: ScalarType::F32,
                    values: scan.intensity.into_iter().map(f64::from).collect(),
                }],
                ..Default::default()
            }
        }
    };
    if let Some(lp) = labels_path {
        let labels = kitti::read_labels(lp)?;
        if labels.len() != cloud.len() {
            return Err(Error::Structural(format!(
                "label file has {} entries for {} points",
                labels.len(),
                cloud.len()
            )));
        }
        cloud.labels = Some(labels);
    }
    cloud.validate()?;
    Ok(cloud)
}

fn integral_column(col: Column, max: f64) -> Result<Vec<u32>> {
    col.values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.fract() == 0.0 && v >= 0.0 && v <= max {
                Ok(v as u32)
            } else {
                Err(Error::InvalidRecord {
                    index: i,
                    reason: format!("'{}' value {v} is not a valid id", col.name),
                })
            }
        })
        .collect()
}

fn vec_columns(table: &mut VertexTable, names: [&str; 3]) -> Result<Option<Vec<Vec3>>> {
    let present = names.iter().filter(|n| table.column(n).is_some()).count();
    match present {
        0 => Ok(None),
        3 => {
            let x = table.take_column(&[names[0]]).unwrap().values;
            let y = table.take_column(&[names[1]]).unwrap().values;
            let z = table.take_column(&[names[2]]).unwrap().values;
            Ok(Some(
                (0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect(),
            ))
        }
        _ => Err(Error::Format(format!(
            "incomplete vector properties {names:?}"
        ))),
    }
}

pub(crate) fn cloud_from_table(mut table: VertexTable) -> Result<PointCloud> {
    let positions = vec_columns(&mut table, ["x", "y", "z"])?
        .ok_or_else(|| Error::Format("vertex element lacks x, y, z".into()))?;
    let normals = vec_columns(&mut table, ["nx", "ny", "nz"])?.map(|ns| {
        ns.into_iter()
            .map(|n| {
                let len = n.norm();
                if len == 0.0 || !len.is_finite() {
                    None
                } else if (len - 1.0).abs() <= 1e-12 {
                    Some(n)
                } else {
                    Some(n / len)
                }
            })
            .collect()
    });
    let sensor_positions = vec_columns(&mut table, ["sensor_x", "sensor_y", "sensor_z"])?;
    let labels = table
        .take_column(LABEL_NAMES)
        .map(|c| integral_column(c, u32::MAX as f64))
        .transpose()?;
    let groups = table
        .take_column(&["group"])
        .map(|c| {
            integral_column(c, 255.0)?
                .into_iter()
                .enumerate()
                .map(|(i, g)| {
                    SurfaceGroup::from_code(g as u8).ok_or_else(|| Error::InvalidRecord {
                        index: i,
                        reason: format!("unknown group code {g}"),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let frame_ids = table
        .take_column(FRAME_NAMES)
        .map(|c| integral_column(c, u32::MAX as f64))
        .transpose()?;
    let extras = table
        .columns
        .into_iter()
        .map(|c| ExtraProperty {
            name: c.name,
            ty: c.ty,
            values: c.values,
        })
        .collect();
    Ok(PointCloud {
        positions,
        normals,
        labels,
        groups,
        sensor_positions,
        frame_ids,
        extras,
    })
}

fn push_vec(columns: &mut Vec<Column>, names: [&str; 3], values: &[Vec3]) {
    for (axis, name) in names.iter().enumerate() {
        columns.push(Column {
            name: name.to_string(),
            ty: ScalarType::F64,
            values: values.iter().map(|v| v[axis]).collect(),
        });
    }
}

pub(crate) fn cloud_to_table(cloud: &PointCloud) -> VertexTable {
    let mut columns = Vec::new();
    push_vec(&mut columns, ["x", "y", "z"], &cloud.positions);
    if let Some(normals) = &cloud.normals {
        let flat: Vec<Vec3> = normals.iter().map(|n| n.unwrap_or_else(Vec3::zeros)).collect();
        push_vec(&mut columns, ["nx", "ny", "nz"], &flat);
    }
    if let Some(labels) = &cloud.labels {
        columns.push(Column {
            name: "label".into(),
            ty: ScalarType::U32,
            values: labels.iter().map(|&l| l as f64).collect(),
        });
    }
    if let Some(groups) = &cloud.groups {
        columns.push(Column {
            name: "group".into(),
            ty: ScalarType::U8,
            values: groups.iter().map(|g| g.code() as f64).collect(),
        });
    }
    if let Some(sensors) = &cloud.sensor_positions {
        push_vec(&mut columns, ["sensor_x", "sensor_y", "sensor_z"], sensors);
    }
    if let Some(frames) = &cloud.frame_ids {
        columns.push(Column {
            name: "frame_id".into(),
            ty: ScalarType::U32,
            values: frames.iter().map(|&f| f as f64).collect(),
        });
    }
    for e in &cloud.extras {
        columns.push(Column {
            name: e.name.clone(),
            ty: e.ty,
            values: e.values.clone(),
        });
    }
    VertexTable {
        count: cloud.len(),
        comments: Vec::new(),
        columns,
    }
}

/// Writes a binary little-endian PLY.
pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    save_cloud_with(cloud, path, Encoding::BinaryLittleEndian)
}

pub fn save_cloud_with(cloud: &PointCloud, path: &Path, encoding: Encoding) -> Result<()> {
    cloud.validate()?;
    ply::write_file(path, &cloud_to_table(cloud), encoding)
}
