//! Minimal Wavefront OBJ reader: `v`, `vt` and `f` records.

use std::path::Path;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

pub(super) fn load(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

struct Corner {
    vertex: u32,
    uv: Option<u32>,
}

fn resolve(token: &str, count: usize, line: usize, path: &Path, what: &str) -> Result<u32> {
    let raw: i64 = token.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad {what} index {token:?}"),
    })?;
    // 1-based; negative indices count back from the latest record
    let index = match raw {
        0 => None,
        r if r > 0 => Some(r - 1),
        r => Some(count as i64 + r),
    };
    match index {
        Some(i) if i >= 0 && (i as usize) < count => Ok(i as u32),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{what} index {raw} out of range (have {count})"),
        }),
    }
}

pub(super) fn parse(text: &str, path: &Path) -> Result<Mesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut faces = Vec::new();
    let mut face_uvs = Vec::new();
    let mut faces_without_uv = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let xyz: Vec<f64> = tokens
                    .take(3)
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(line_no, format!("bad vertex: {e}")))?;
                if xyz.len() != 3 {
                    return Err(parse_err(line_no, "vertex needs 3 coordinates".into()));
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            "vt" => {
                let uv: Vec<f64> = tokens
                    .take(2)
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(line_no, format!("bad texcoord: {e}")))?;
                match uv.as_slice() {
                    [u] => texcoords.push([*u, 0.0]),
                    [u, v] => texcoords.push([*u, *v]),
                    _ => return Err(parse_err(line_no, "empty texcoord".into())),
                }
            }
            "f" => {
                let corners = tokens
                    .map(|tok| {
                        let mut parts = tok.split('/');
                        let v = parts.next().unwrap_or("");
                        let vt = parts.next().filter(|s| !s.is_empty());
                        Ok(Corner {
                            vertex: resolve(v, vertices.len(), line_no, path, "vertex")?,
                            uv: vt
                                .map(|t| resolve(t, texcoords.len(), line_no, path, "texcoord"))
                                .transpose()?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if corners.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 corners".into()));
                }
                let has_uv = corners.iter().all(|c| c.uv.is_some());
                if !has_uv && corners.iter().any(|c| c.uv.is_some()) {
                    return Err(parse_err(
                        line_no,
                        "face mixes corners with and without texcoords".into(),
                    ));
                }
                // fan from the first corner
                for k in 1..corners.len() - 1 {
                    let tri = [&corners[0], &corners[k], &corners[k + 1]];
                    faces.push(tri.map(|c| c.vertex));
                    if has_uv {
                        face_uvs.push(tri.map(|c| texcoords[c.uv.unwrap() as usize]));
                    } else {
                        faces_without_uv += 1;
                    }
                }
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(Error::DegenerateGeometry(format!(
            "{} contains no faces",
            path.display()
        )));
    }
    if faces_without_uv == 0 {
        Mesh::with_uvs(vertices, faces, face_uvs)
    } else {
        if !face_uvs.is_empty() {
            log::warn!(
                "{}: only some faces carry texcoords; ignoring UVs",
                path.display()
            );
        }
        Mesh::new(vertices, faces)
    }
}
