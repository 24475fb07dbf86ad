use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

/// Fixed 16-entry label palette; label `i` maps to `PALETTE[i % 16]`.
pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [170, 255, 195],
    [0, 0, 128],
];

/// Color of unlabeled (negative id) faces.
pub const UNLABELED_COLOR: [u8; 3] = [128, 128, 128];

pub fn label_color(label: i32) -> [u8; 3] {
    if label < 0 {
        UNLABELED_COLOR
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

/// Writes an ascii PLY with one palette color per face.
pub fn export_labeled_mesh(mesh: &Mesh, labels: &[i32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != mesh.face_count() {
        return Err(Error::LengthMismatch {
            expected: mesh.face_count(),
            actual: labels.len(),
        });
    }
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\ncomment per-face part labels\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertices().len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(out, "element face {}", mesh.face_count());
    out.push_str("property list uchar int vertex_indices\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    out.push_str("end_header\n");
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for (f, &label) in mesh.faces().iter().zip(labels) {
        let [r, g, b] = label_color(label);
        let _ = writeln!(out, "3 {} {} {} {r} {g} {b}", f[0], f[1], f[2]);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
