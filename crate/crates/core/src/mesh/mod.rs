//! Triangle meshes: representation, loading, normalization and face adjacency.

mod adjacency;
mod export;
mod obj;
mod ply;
pub mod primitives;

use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};

pub use adjacency::{build_adjacency, FaceAdjacency};
pub use export::{export_labeled_mesh, label_color, PALETTE, UNLABELED_COLOR};
pub use ply::read_face_colors;

/// Face id type used throughout the crate.
pub type FaceId = u32;

/// Relative area below which a triangle is treated as degenerate.
const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh, optionally carrying per-corner UVs and a texture.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    uvs: Option<Vec<[[f64; 2]; 3]>>,
    texture: Option<Bitmap>,
}

impl Mesh {
    /// Builds a mesh, rejecting out-of-range indices and dropping degenerate faces.
    ///
    /// Fails with `DegenerateGeometry` if no face survives.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        Self::build(vertices, faces, None)
    }

    /// Same as [`Mesh::new`] but with one UV triple per face.
    pub fn with_uvs(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        uvs: Vec<[[f64; 2]; 3]>,
    ) -> Result<Self> {
        if uvs.len() != faces.len() {
            return Err(Error::LengthMismatch {
                expected: faces.len(),
                actual: uvs.len(),
            });
        }
        Self::build(vertices, faces, Some(uvs))
    }

    fn build(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        uvs: Option<Vec<[[f64; 2]; 3]>>,
    ) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no faces".into()));
        }
        if let Some(v) = vertices
            .iter()
            .find(|v| !v.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidInput(format!("non-finite vertex {v}")));
        }
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&ix| ix as usize >= n) {
                return Err(Error::InvalidInput(format!(
                    "face {i} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
        }

        let scale = bounding_radius(&vertices);
        let min_area = DEGENERATE_AREA * scale * scale;
        let keep: Vec<bool> = faces
            .iter()
            .map(|f| {
                f[0] != f[1]
                    && f[1] != f[2]
                    && f[0] != f[2]
                    && triangle_area(&vertices, f) > min_area
            })
            .collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        if dropped == faces.len() {
            return Err(Error::DegenerateGeometry("every face is degenerate".into()));
        }
        if dropped > 0 {
            log::warn!("dropping {dropped} degenerate faces");
        }
        let faces: Vec<[u32; 3]> = faces
            .into_iter()
            .zip(&keep)
            .filter_map(|(f, k)| k.then_some(f))
            .collect();
        let uvs = uvs.map(|uvs| {
            uvs.into_iter()
                .zip(&keep)
                .filter_map(|(uv, k)| k.then_some(uv))
                .collect()
        });
        Ok(Self {
            vertices,
            faces,
            uvs,
            texture: None,
        })
    }

    /// Attaches a texture bitmap. The mesh must carry UVs.
    pub fn set_texture(&mut self, texture: Bitmap) -> Result<()> {
        if self.uvs.is_none() {
            return Err(Error::MissingTexture);
        }
        if texture.channels() != 3 {
            return Err(Error::InvalidInput("texture must be RGB".into()));
        }
        self.texture = Some(texture);
        Ok(())
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn uvs(&self) -> Option<&[[[f64; 2]; 3]]> {
        self.uvs.as_deref()
    }

    pub fn texture(&self) -> Option<&Bitmap> {
        self.texture.as_ref()
    }

    pub fn is_textured(&self) -> bool {
        self.texture.is_some()
    }

    /// The three corner positions of face `f`.
    #[inline]
    pub fn triangle(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        triangle_area(&self.vertices, &self.faces[f])
    }

    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn centroid(&self, f: usize) -> Point3<f64> {
        let [a, b, c] = self.triangle(f);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    /// True when both meshes have the same face count and face-vertex indices.
    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.faces == other.faces && self.vertices.len() == other.vertices.len()
    }

    /// Returns a copy with the same topology and a new texture/UV set.
    pub fn textured(&self, uvs: Vec<[[f64; 2]; 3]>, texture: Bitmap) -> Result<Mesh> {
        if uvs.len() != self.faces.len() {
            return Err(Error::LengthMismatch {
                expected: self.faces.len(),
                actual: uvs.len(),
            });
        }
        let mut m = Mesh {
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
            uvs: Some(uvs),
            texture: None,
        };
        m.set_texture(texture)?;
        Ok(m)
    }

    /// Copy without texture or UVs.
    pub fn untextured(&self) -> Mesh {
        Mesh {
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
            uvs: None,
            texture: None,
        }
    }

    /// Centers the bounding box on the origin and scales the farthest vertex to radius 1.
    pub fn normalized(&self) -> Result<Mesh> {
        let (lo, hi) = aabb(&self.vertices);
        let center = Point3::from((lo.coords + hi.coords) / 2.0);
        let radius = self
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0_f64, f64::max);
        if !(radius > 0.0) {
            return Err(Error::DegenerateGeometry("all vertices coincide".into()));
        }
        let vertices = self
            .vertices
            .iter()
            .map(|v| Point3::from((v - center) / radius))
            .collect();
        Ok(Mesh {
            vertices,
            ..self.clone()
        })
    }

    /// Applies `transform` to every vertex.
    pub fn map_vertices(&self, transform: impl Fn(&Point3<f64>) -> Point3<f64>) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(transform).collect(),
            ..self.clone()
        }
    }
}

/// Normalization used throughout the pipeline; see [`Mesh::normalized`].
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh> {
    mesh.normalized()
}

/// Loads an OBJ or PLY mesh, optionally attaching a PNG texture.
pub fn load_mesh(path: impl AsRef<Path>, texture_path: Option<&Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let mut mesh = match ext.as_deref() {
        Some("obj") => obj::load(path)?,
        Some("ply") => ply::load(path)?,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{} (extension {:?})",
                path.display(),
                other.unwrap_or("")
            )))
        }
    };
    if let Some(tp) = texture_path {
        let tex = Bitmap::load_png(tp, 3)?;
        mesh.set_texture(tex)?;
    }
    Ok(mesh)
}

fn triangle_area(vertices: &[Point3<f64>], f: &[u32; 3]) -> f64 {
    let a = vertices[f[0] as usize];
    let b = vertices[f[1] as usize];
    let c = vertices[f[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn aabb(vertices: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in vertices {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    (lo, hi)
}

fn bounding_radius(vertices: &[Point3<f64>]) -> f64 {
    let (lo, hi) = aabb(vertices);
    let center = Point3::from((lo.coords + hi.coords) / 2.0);
    vertices
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max)
}
