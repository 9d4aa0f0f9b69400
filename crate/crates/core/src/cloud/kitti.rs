//! SemanticKITTI-style binary scans and label files.
//!
//! Scans are little-endian `f32` quadruples `(x, y, z, intensity)`; label
//! files are little-endian `u32` per point with the semantic class in the
//! low 16 bits (the high bits carry an instance id).

use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

const RECORD: usize = 16;

pub struct KittiScan {
    pub positions: Vec<Vec3>,
    pub intensity: Vec<f32>,
}

pub fn parse_scan(bytes: &[u8]) -> Result<KittiScan> {
    if !bytes.len().is_multiple_of(RECORD) {
        let whole = bytes.len() / RECORD * RECORD;
        return Err(Error::parse(whole, "truncated point record"));
    }
    let n = bytes.len() / RECORD;
    let mut positions = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(RECORD) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        positions.push(Vec3::new(f(0) as f64, f(1) as f64, f(2) as f64));
        intensity.push(f(3));
    }
    Ok(KittiScan {
        positions,
        intensity,
    })
}

/// Decodes semantic class ids (low 16 bits) from a label file payload.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::parse(bytes.len() / 4 * 4, "truncated label record"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) & 0xFFFF)
        .collect())
}

pub fn read_scan(path: &Path) -> Result<KittiScan> {
    parse_scan(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    parse_labels(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let scan = parse_scan(&bytes).unwrap();
        assert_eq!(scan.positions, vec![Vec3::new(1.0, 2.0, 3.0)]);
        assert_eq!(scan.intensity, vec![0.5]);
    }

    #[test]
    fn truncated_record_names_offset() {
        let bytes = vec![0u8; 20];
        assert!(matches!(parse_scan(&bytes), Err(Error::Parse { offset: 16, .. })));
    }

    #[test]
    fn label_low_bits() {
        let raw: u32 = (7 << 16) | 40;
        assert_eq!(parse_labels(&raw.to_le_bytes()).unwrap(), vec![40]);
    }
}
