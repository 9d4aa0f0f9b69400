use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{PointCloud, SurfaceGroup};
use crate::error::{Error, Result};

/// Semantic class id to surface group table, plus the classes that are
/// dynamic objects and must be pulled out of the static scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupMapping {
    pub groups: BTreeMap<u32, SurfaceGroup>,
    pub dynamic: BTreeSet<u32>,
}

impl GroupMapping {
    /// Parses `class_id group [dynamic]` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut mapping = GroupMapping::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("mapping line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(bad("expected `class_id group [dynamic]`"));
            }
            let id: u32 = fields[0].parse().map_err(|_| bad("class id is not an integer"))?;
            let group: SurfaceGroup = fields[1].parse().map_err(|_| bad("unknown group"))?;
            if mapping.groups.insert(id, group).is_some() {
                return Err(bad("duplicate class id"));
            }
            match fields.get(2) {
                None => {}
                Some(&"dynamic") => {
                    mapping.dynamic.insert(id);
                }
                Some(_) => return Err(bad("third field must be `dynamic`")),
            }
        }
        Ok(mapping)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn group_of(&self, class: u32) -> Option<SurfaceGroup> {
        self.groups.get(&class).copied()
    }

    pub fn is_dynamic(&self, class: u32) -> bool {
        self.dynamic.contains(&class)
    }
}

/// Static scene plus dynamic-object points keyed by frame id.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSplit {
    pub static_cloud: PointCloud,
    pub dynamic: BTreeMap<u32, PointCloud>,
}

/// Assigns groups from labels and splits off dynamic classes. Points without
/// frame ids count as frame 0.
pub fn map_semantic_groups(cloud: &PointCloud, mapping: &GroupMapping) -> Result<SemanticSplit> {
    let labels = cloud
        .labels
        .as_ref()
        .ok_or(Error::MissingAttribute("labels"))?;
    let missing: BTreeSet<u32> = labels
        .iter()
        .copied()
        .filter(|l| !mapping.groups.contains_key(l))
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnmappedClasses(missing.into_iter().collect()));
    }

    let mut grouped = cloud.clone();
    grouped.groups = Some(labels.iter().map(|&l| mapping.groups[&l]).collect());

    let mut static_idx = Vec::new();
    let mut dynamic_idx: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if mapping.is_dynamic(l) {
            let frame = cloud.frame_ids.as_ref().map_or(0, |f| f[i]);
            dynamic_idx.entry(frame).or_default().push(i);
        } else {
            static_idx.push(i);
        }
    }
    Ok(SemanticSplit {
        static_cloud: grouped.select(&static_idx),
        dynamic: dynamic_idx
            .into_iter()
            .map(|(f, idx)| (f, grouped.select(&idx)))
            .collect(),
    })
}
