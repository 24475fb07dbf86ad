//! Depth-buffered software rasterizer producing the shaded view, the
//! face-index map and the visible-face tally for one camera.
//!
//! Back-face culling is off; visibility comes from the depth test alone.
//! Pixel ownership on shared edges follows the top-left rule. Depth is
//! interpolated as `1/z`, so the winning face at each pixel center is the
//! nearest surface along that pixel's view ray.

mod fidx;

use std::collections::BTreeMap;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::backend::MaskImage;
use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::mesh::{FaceId, Mesh};
use crate::viewgen::{Viewpoint, NEAR_PLANE};

pub use fidx::{FaceIndexMap, BACKGROUND};

pub const ALBEDO: f64 = 0.7;
pub const AMBIENT: f64 = 0.15;
const BACKGROUND_COLOR: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shading {
    Untextured,
    Textured,
}

/// One rendered view: shaded image, face-index map and visible-face pixel counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: Bitmap,
    pub face_index: FaceIndexMap,
    /// Pixel count of every face owning at least one pixel.
    pub visible: BTreeMap<FaceId, u32>,
}

impl RenderOutput {
    pub fn dims(&self) -> (u32, u32) {
        self.face_index.dims()
    }

    pub fn is_visible(&self, face: FaceId) -> bool {
        self.visible.contains_key(&face)
    }

    /// Rebuilds a render from a stored face-index map and image.
    pub fn from_parts(image: Bitmap, face_index: FaceIndexMap) -> Result<Self> {
        if image.dims() != face_index.dims() {
            return Err(Error::DimensionMismatch {
                expected: face_index.dims(),
                actual: image.dims(),
            });
        }
        let visible = tally(&face_index);
        Ok(Self {
            image,
            face_index,
            visible,
        })
    }
}

fn tally(map: &FaceIndexMap) -> BTreeMap<FaceId, u32> {
    let mut counts = BTreeMap::new();
    for (_, _, id) in map.covered() {
        *counts.entry(id).or_insert(0) += 1;
    }
    counts
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    /// The same region as a half-open `[x0, x1) x [y0, y1)` box.
    pub fn half_open(&self) -> [f64; 4] {
        [
            self.x_min as f64,
            self.y_min as f64,
            self.x_max as f64 + 1.0,
            self.y_max as f64 + 1.0,
        ]
    }
}

/// Camera-space corner with its texture coordinate.
#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    pos: Point3<f64>,
    uv: [f64; 2],
}

impl ClipVertex {
    fn depth(&self) -> f64 {
        -self.pos.z
    }

    fn lerp(&self, other: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            pos: self.pos + (other.pos - self.pos) * t,
            uv: [
                self.uv[0] + (other.uv[0] - self.uv[0]) * t,
                self.uv[1] + (other.uv[1] - self.uv[1]) * t,
            ],
        }
    }
}

/// Sutherland-Hodgman clip of a polygon to the half-space in front of the near plane.
fn clip_near(poly: &[ClipVertex]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let (da, db) = (a.depth() - NEAR_PLANE, b.depth() - NEAR_PLANE);
        if da > 0.0 {
            out.push(*a);
        }
        if (da > 0.0) != (db > 0.0) {
            out.push(a.lerp(b, da / (da - db)));
        }
    }
    out
}

#[inline]
fn orient(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Top or left edge of a triangle with positive [`orient`] in y-down pixel space.
#[inline]
fn is_top_left(a: &Point2<f64>, b: &Point2<f64>) -> bool {
    (a.y == b.y && b.x > a.x) || b.y < a.y
}

#[inline]
fn covers(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

struct Target<'a> {
    size: u32,
    depth: Vec<f64>,
    face_index: FaceIndexMap,
    image: Bitmap,
    texture: Option<&'a Bitmap>,
}

impl Target<'_> {
    fn raster_triangle(
        &mut self,
        view: &Viewpoint,
        face: FaceId,
        corners: [ClipVertex; 3],
        light: f64,
        flat_color: [u8; 3],
    ) {
        let mut px = corners.map(|c| view.camera_to_pixel(&c.pos));
        let mut inv_depth = corners.map(|c| 1.0 / c.depth());
        let mut uv = corners.map(|c| c.uv);
        let mut area = orient(&px[0], &px[1], &px[2]);
        if !(area.abs() > 0.0) || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            px.swap(1, 2);
            inv_depth.swap(1, 2);
            uv.swap(1, 2);
            area = -area;
        }
        let edges = [(1, 2), (2, 0), (0, 1)];
        let top_left = edges.map(|(a, b)| is_top_left(&px[a], &px[b]));

        let size = self.size as f64;
        let lo_x = px.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi_x = px.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = px.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let hi_y = px.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > size || lo_y > size {
            return;
        }
        let x0 = (lo_x - 0.5).ceil().max(0.0) as u32;
        let y0 = (lo_y - 0.5).ceil().max(0.0) as u32;
        let x1 = ((hi_x - 0.5).floor().min(size - 1.0)).max(-1.0);
        let y1 = ((hi_y - 0.5).floor().min(size - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return;
        }
        let (x1, y1) = (x1 as u32, y1 as u32);

        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let w = edges.map(|(a, b)| orient(&px[a], &px[b], &p));
                if !(0..3).all(|i| covers(w[i], top_left[i])) {
                    continue;
                }
                let l = w.map(|wi| wi / area);
                let inv = l[0] * inv_depth[0] + l[1] * inv_depth[1] + l[2] * inv_depth[2];
                let depth = 1.0 / inv;
                let slot = (y * self.size + x) as usize;
                if !(depth < self.depth[slot]) {
                    continue;
                }
                self.depth[slot] = depth;
                self.face_index.set(x, y, face);
                let color = match self.texture {
                    None => flat_color,
                    Some(tex) => {
                        let persp = |k: usize| {
                            (0..3).map(|i| l[i] * uv[i][k] * inv_depth[i]).sum::<f64>() / inv
                        };
                        let texel = sample_nearest(tex, persp(0), persp(1));
                        texel.map(|c| (c as f64 * light).round().clamp(0.0, 255.0) as u8)
                    }
                };
                self.image.set_pixel(x, y, &color);
            }
        }
    }
}

fn sample_nearest(tex: &Bitmap, u: f64, v: f64) -> [u8; 3] {
    let (w, h) = (tex.width(), tex.height());
    let tx = ((u.clamp(0.0, 1.0) * w as f64).floor() as u32).min(w - 1);
    let ty = (((1.0 - v.clamp(0.0, 1.0)) * h as f64).floor() as u32).min(h - 1);
    let p = tex.pixel(tx, ty);
    [p[0], p[1], p[2]]
}

/// Renders `mesh` from `view`.
pub fn render(mesh: &Mesh, view: &Viewpoint, shading: Shading) -> Result<RenderOutput> {
    let texture = match shading {
        Shading::Untextured => None,
        Shading::Textured => Some(mesh.texture().ok_or(Error::MissingTexture)?),
    };
    let uvs = match shading {
        Shading::Untextured => None,
        Shading::Textured => mesh.uvs(),
    };
    let size = view.image_size;
    let n = size as usize * size as usize;
    let mut target = Target {
        size,
        depth: vec![f64::INFINITY; n],
        face_index: FaceIndexMap::new(size, size),
        image: Bitmap::from_raw(size, size, 3, BACKGROUND_COLOR.repeat(n))?,
        texture,
    };

    for f in 0..mesh.face_count() {
        let world = mesh.triangle(f);
        let face_uv = uvs.map_or([[0.0; 2]; 3], |u| u[f]);
        let corners: [ClipVertex; 3] = std::array::from_fn(|i| ClipVertex {
            pos: view.to_camera(&world[i]),
            uv: face_uv[i],
        });

        let centroid = Point3::from((world[0].coords + world[1].coords + world[2].coords) / 3.0);
        let to_face = (centroid - view.position).normalize();
        let cos = mesh.face_normal(f).dot(&to_face).abs();
        let light = (cos + AMBIENT).min(1.0);
        let gray = ((ALBEDO * cos + AMBIENT).min(1.0) * 255.0).round() as u8;
        let flat = [gray; 3];

        if corners.iter().all(|c| c.depth() > NEAR_PLANE) {
            target.raster_triangle(view, f as FaceId, corners, light, flat);
        } else {
            let poly = clip_near(&corners);
            for k in 1..poly.len().saturating_sub(1) {
                target.raster_triangle(
                    view,
                    f as FaceId,
                    [poly[0], poly[k], poly[k + 1]],
                    light,
                    flat,
                );
            }
        }
    }

    let visible = tally(&target.face_index);
    Ok(RenderOutput {
        image: target.image,
        face_index: target.face_index,
        visible,
    })
}

/// Visible and in-mask pixel counts for one face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskCoverage {
    pub visible: u32,
    pub inside: u32,
}

impl MaskCoverage {
    pub fn fraction(&self) -> f64 {
        self.inside as f64 / self.visible as f64
    }
}

/// For every visible face, how many of its pixels fall inside `mask`.
pub fn faces_in_mask(
    render: &RenderOutput,
    mask: &MaskImage,
) -> Result<BTreeMap<FaceId, MaskCoverage>> {
    if mask.dims() != render.dims() {
        return Err(Error::DimensionMismatch {
            expected: render.dims(),
            actual: mask.dims(),
        });
    }
    let mut out: BTreeMap<FaceId, MaskCoverage> = render
        .visible
        .iter()
        .map(|(&f, &count)| {
            (
                f,
                MaskCoverage {
                    visible: count,
                    inside: 0,
                },
            )
        })
        .collect();
    for (x, y, f) in render.face_index.covered() {
        if mask.get(x, y) {
            if let Some(c) = out.get_mut(&f) {
                c.inside += 1;
            }
        }
    }
    Ok(out)
}

/// Tight inclusive box around every covered pixel.
pub fn object_bbox(render: &RenderOutput) -> Result<PixelBox> {
    let mut bbox: Option<PixelBox> = None;
    for (x, y, _) in render.face_index.covered() {
        bbox = Some(match bbox {
            None => PixelBox {
                x_min: x,
                y_min: y,
                x_max: x,
                y_max: y,
            },
            Some(b) => PixelBox {
                x_min: b.x_min.min(x),
                y_min: b.y_min.min(y),
                x_max: b.x_max.max(x),
                y_max: b.y_max.max(y),
            },
        });
    }
    bbox.ok_or(Error::EmptyRender)
}
