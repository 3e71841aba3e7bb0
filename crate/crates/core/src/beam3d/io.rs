//! `deformation.bin`: nodal positions `y` in little-endian binary.
//!
//! ```text
//! offset  type      field
//! 0       [u8; 4]   magic "RODY"
//! 4       u32       format version (1)
//! 8       u32       number of axial stations
//! 12      u32       number of section nodes
//! 16      f64       h
//! 24      f64       alpha
//! 32      f64       length L
//! 40      f64 × 3n  y₁, y₂, y₃ per node, station-major (node = station·n_section + j)
//! ```

use std::path::Path;

use super::{BeamMesh, DeformationField};
use crate::error::{Error, Result};

pub const DEFORMATION_MAGIC: [u8; 4] = *b"RODY";
pub const DEFORMATION_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

/// Encodes the positions `y = y⁰ + d`.
pub fn encode_deformation(mesh: &BeamMesh, field: &DeformationField) -> Vec<u8> {
    let y = field.positions(mesh);
    let mut out = Vec::with_capacity(HEADER_LEN + 24 * y.len());
    out.extend_from_slice(&DEFORMATION_MAGIC);
    out.extend_from_slice(&DEFORMATION_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.stations as u32).to_le_bytes());
    out.extend_from_slice(&(field.section_nodes as u32).to_le_bytes());
    for v in [field.h, field.alpha, field.length] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in y.iter().flatten() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Decodes a buffer written by [`encode_deformation`] for the given mesh.
pub fn decode_deformation(mesh: &BeamMesh, bytes: &[u8]) -> Result<DeformationField> {
    let bad = |m: &str| Error::Serialization(format!("deformation.bin: {m}"));
    if bytes.len() < HEADER_LEN || bytes[..4] != DEFORMATION_MAGIC {
        return Err(bad("missing RODY header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != DEFORMATION_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let (stations, section_nodes) = (u32_at(8) as usize, u32_at(12) as usize);
    if stations != mesh.station_count() || section_nodes != mesh.section_nodes() {
        return Err(bad(&format!(
            "node counts {stations}×{section_nodes} do not match the mesh ({}×{})",
            mesh.station_count(),
            mesh.section_nodes()
        )));
    }
    let (h, alpha, length) = (f64_at(16), f64_at(24), f64_at(32));
    if h != mesh.h || length != mesh.length {
        return Err(bad("h or length differ from the mesh"));
    }
    let n = stations * section_nodes;
    if bytes.len() != HEADER_LEN + 24 * n {
        return Err(bad(&format!("expected {} bytes, found {}", HEADER_LEN + 24 * n, bytes.len())));
    }
    let y: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let o = HEADER_LEN + 24 * i;
            [f64_at(o), f64_at(o + 8), f64_at(o + 16)]
        })
        .collect();
    DeformationField::from_positions(mesh, alpha, &y)
}

pub fn write_deformation(path: &Path, mesh: &BeamMesh, field: &DeformationField) -> Result<()> {
    std::fs::write(path, encode_deformation(mesh, field)).map_err(|e| Error::io(path, e))
}

pub fn read_deformation(path: &Path, mesh: &BeamMesh) -> Result<DeformationField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_deformation(mesh, &bytes)
}

#[cfg(test)]
mod tests {
    use super::super::tests::config;
    use super::super::{build_mesh, minimize};
    use super::*;

    #[test]
    fn round_trip_preserves_positions() {
        let c = config(0.2, 3.0, 3, 1.0);
        let (mesh, _) = build_mesh(&c).unwrap();
        let out = minimize(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deformation.bin");
        write_deformation(&path, &mesh, &out.field).unwrap();
        let back = read_deformation(&path, &mesh).unwrap();
        assert_eq!(back.positions(&mesh), out.field.positions(&mesh));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"RODY");
        assert_eq!(bytes.len(), 40 + 24 * mesh.node_count());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let c = config(0.2, 3.0, 2, 0.0);
        let (mesh, y0) = build_mesh(&c).unwrap();
        let mut bytes = encode_deformation(&mesh, &y0);
        assert!(decode_deformation(&mesh, &bytes[..bytes.len() - 1]).is_err());
        bytes[4] = 9;
        assert!(decode_deformation(&mesh, &bytes).is_err());
        assert!(decode_deformation(&mesh, b"NOPE").is_err());
    }
}
