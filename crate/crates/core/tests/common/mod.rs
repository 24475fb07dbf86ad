//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use meshseg_core::mesh::{FaceId, Mesh};
use meshseg_core::raster::BACKGROUND;
use meshseg_core::revote::ViewVote;
use meshseg_core::viewgen::{Viewpoint, FAR_PLANE, NEAR_PLANE};
use nalgebra::{Point2, Point3, Vector3};

/// Möller–Trumbore, two-sided. Returns the ray parameter of the hit.
pub fn ray_triangle(o: &Point3<f64>, d: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Face id per pixel by casting one ray through every pixel center.
pub fn ray_cast_ids(mesh: &Mesh, vp: &Viewpoint) -> Vec<FaceId> {
    let n = vp.image_size;
    let forward = vp.forward();
    let mut ids = vec![BACKGROUND; (n * n) as usize];
    for y in 0..n {
        for x in 0..n {
            let (o, d) = vp.ray(&Point2::new(x as f64 + 0.5, y as f64 + 0.5));
            let mut best = (f64::INFINITY, BACKGROUND);
            for f in 0..mesh.face_count() {
                if let Some(t) = ray_triangle(&o, &d, &mesh.triangle(f)) {
                    let depth = t * d.dot(&forward);
                    if depth > NEAR_PLANE && depth < FAR_PLANE && depth < best.0 {
                        best = (depth, f as FaceId);
                    }
                }
            }
            ids[(y * n + x) as usize] = best.1;
        }
    }
    ids
}

fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * t)).norm()
}

/// Distance in pixels from a pixel center to the nearest projected edge of
/// any of `faces`.
pub fn distance_to_edges(mesh: &Mesh, vp: &Viewpoint, x: u32, y: u32, faces: &[FaceId]) -> f64 {
    let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
    let mut best = f64::INFINITY;
    for &f in faces.iter().filter(|&&f| f != BACKGROUND) {
        let tri = mesh.triangle(f as usize);
        let px: Vec<Point2<f64>> = tri
            .iter()
            .map(|v| {
                vp.project(v)
                    .expect("test meshes sit in front of the camera")
                    .pixel
            })
            .collect();
        for i in 0..3 {
            best = best.min(point_segment_distance(p, px[i], px[(i + 1) % 3]));
        }
    }
    best
}

/// Per-face global confidence by the direct double loop over faces and views.
pub fn naive_accumulate(votes: &[ViewVote], faces: usize) -> Vec<f64> {
    let mut g = vec![0.0; faces];
    for (f, slot) in g.iter_mut().enumerate() {
        let f = f as FaceId;
        for v in votes {
            if v.masked.contains(&f) {
                *slot += v.confidence;
            } else if v.unmasked.contains(&f) {
                *slot -= v.confidence;
            }
        }
    }
    g
}

/// Fraction of faces whose predicted membership equals the truth.
pub fn face_accuracy(members: &[FaceId], truth: &[FaceId], faces: usize) -> f64 {
    let correct = (0..faces as FaceId)
        .filter(|f| members.contains(f) == truth.contains(f))
        .count();
    correct as f64 / faces as f64
}
