//! Procedural meshes for demos, fixtures and tests. All are centered at the
//! origin with maximal vertex radius 1.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mesh;
use crate::bitmap::Bitmap;

/// Axis-aligned cube with corners at ±1/√3 (12 triangles, outward winding).
pub fn cube() -> Mesh {
    let s = 1.0 / 3f64.sqrt();
    let vertices = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { -s } else { s },
                if i & 2 == 0 { -s } else { s },
                if i & 4 == 0 { -s } else { s },
            )
        })
        .collect();
    #[rustfmt::skip]
    let faces = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    Mesh::new(vertices, faces).expect("cube is valid")
}

/// Regular tetrahedron inscribed in the unit sphere.
pub fn tetrahedron() -> Mesh {
    let s = 1.0 / 3f64.sqrt();
    let vertices = vec![
        Point3::new(s, s, s),
        Point3::new(s, -s, -s),
        Point3::new(-s, s, -s),
        Point3::new(-s, -s, s),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Mesh::new(vertices, faces).expect("tetrahedron is valid")
}

/// Icosahedron refined `subdivisions` times with vertices pushed onto the
/// unit sphere; `20 * 4^subdivisions` faces.
pub fn icosphere(subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    #[rustfmt::skip]
    let mut vertices: Vec<Point3<f64>> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::from(Vector3::new(p[0], p[1], p[2]).normalize()))
    .collect();
    #[rustfmt::skip]
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Point3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize].coords + vertices[b as usize].coords).normalize();
                vertices.push(Point3::from(m));
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces).expect("icosphere is valid")
}

/// Latitude/longitude sphere with poles on ±y.
///
/// `2 * segments * (rings - 1)` faces. Face order: north pole fan, then the
/// quad bands from north to south (two triangles per quad), then the south
/// pole fan. Per-corner UVs follow the usual equirectangular layout.
pub fn uv_sphere(segments: u32, rings: u32) -> (Mesh, Vec<[[f64; 2]; 3]>) {
    assert!(segments >= 3 && rings >= 2, "sphere too coarse");
    let mut vertices = vec![Point3::new(0.0, 1.0, 0.0)];
    for i in 1..rings {
        let theta = PI * i as f64 / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            vertices.push(Point3::new(
                theta.sin() * phi.cos(),
                theta.cos(),
                -theta.sin() * phi.sin(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, -1.0, 0.0));
    let south = (vertices.len() - 1) as u32;

    let ring_vertex = |i: u32, j: u32| 1 + (i - 1) * segments + (j % segments);
    let uv = |i: u32, j: u32| [j as f64 / segments as f64, 1.0 - i as f64 / rings as f64];

    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..segments {
        faces.push([0, ring_vertex(1, j), ring_vertex(1, j + 1)]);
        uvs.push([
            [(j as f64 + 0.5) / segments as f64, 1.0],
            uv(1, j),
            uv(1, j + 1),
        ]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            let (a, b) = (ring_vertex(i, j), ring_vertex(i, j + 1));
            let (c, d) = (ring_vertex(i + 1, j), ring_vertex(i + 1, j + 1));
            faces.push([a, c, d]);
            uvs.push([uv(i, j), uv(i + 1, j), uv(i + 1, j + 1)]);
            faces.push([a, d, b]);
            uvs.push([uv(i, j), uv(i + 1, j + 1), uv(i, j + 1)]);
        }
    }
    for j in 0..segments {
        faces.push([
            south,
            ring_vertex(rings - 1, j + 1),
            ring_vertex(rings - 1, j),
        ]);
        uvs.push([
            [(j as f64 + 0.5) / segments as f64, 0.0],
            uv(rings - 1, j + 1),
            uv(rings - 1, j),
        ]);
    }
    (Mesh::new(vertices, faces).expect("uv sphere is valid"), uvs)
}

/// Rotation drawn uniformly from SO(3).
pub fn random_rotation(seed: u64) -> UnitQuaternion<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (t2, t3) = (2.0 * PI * u2, 2.0 * PI * u3);
    UnitQuaternion::from_quaternion(Quaternion::new(
        b * t3.cos(),
        a * t2.sin(),
        a * t2.cos(),
        b * t3.sin(),
    ))
}

/// Two-color checkerboard, handy as a stand-in texture.
pub fn checker_texture(size: u32, cells: u32) -> Bitmap {
    let mut tex = Bitmap::new(size, size, 3);
    let cell = (size / cells.max(1)).max(1);
    for y in 0..size {
        for x in 0..size {
            let c: [u8; 3] = if (x / cell + y / cell) % 2 == 0 {
                [200, 60, 40]
            } else {
                [40, 90, 200]
            };
            tex.set_pixel(x, y, &c);
        }
    }
    tex
}

/// Labeled test object: a randomly rotated UV sphere whose faces in the
/// first `cap_rings` latitude rings are labeled 1, the rest 0.
#[derive(Debug, Clone)]
pub struct PaintedSphere {
    pub mesh: Mesh,
    /// Same geometry with UVs and a checker texture.
    pub textured: Mesh,
    pub labels: Vec<i32>,
    pub rotation: UnitQuaternion<f64>,
}

///
/// The cap is centered on `rotation * +y`; see [`random_rotation`].
pub fn painted_sphere(
    segments: u32,
    rings: u32,
    cap_rings: u32,
    rotation: UnitQuaternion<f64>,
) -> PaintedSphere {
    assert!(
        cap_rings >= 1 && cap_rings < rings,
        "cap must leave part of the sphere"
    );
    let (sphere, uvs) = uv_sphere(segments, rings);
    let mesh = sphere.map_vertices(|p| rotation * p);
    let cap_faces = (segments + 2 * segments * (cap_rings - 1)) as usize;
    let labels = (0..mesh.face_count())
        .map(|f| i32::from(f < cap_faces))
        .collect();
    let textured = mesh
        .textured(uvs, checker_texture(64, 8))
        .expect("sphere uvs match its faces");
    PaintedSphere {
        mesh,
        textured,
        labels,
        rotation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_outward(mesh: &Mesh) {
        for f in 0..mesh.face_count() {
            let n = mesh.face_normal(f);
            assert!(
                n.dot(&mesh.centroid(f).coords) > 0.0,
                "face {f} winds inward"
            );
        }
    }

    #[test]
    fn counts_and_winding() {
        assert_eq!(cube().face_count(), 12);
        assert_eq!(tetrahedron().face_count(), 4);
        assert_eq!(icosphere(2).face_count(), 320);
        let (s, uvs) = uv_sphere(32, 21);
        assert_eq!(s.face_count(), 1280);
        assert_eq!(uvs.len(), 1280);
        for m in [cube(), tetrahedron(), icosphere(1), s] {
            assert_outward(&m);
            let r = m
                .vertices()
                .iter()
                .map(|v| v.coords.norm())
                .fold(0.0, f64::max);
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn painted_sphere_cap() {
        let a = painted_sphere(32, 21, 3, random_rotation(7));
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 160);
        assert!(a.textured.is_textured());
        assert_outward(&a.mesh);
        let b = painted_sphere(32, 21, 3, random_rotation(8));
        assert_ne!(a.mesh.vertices()[0], b.mesh.vertices()[0]);
        // cap faces all lie around the rotated pole
        let pole = a.rotation * Vector3::y();
        for f in 0..160 {
            assert!(a.mesh.centroid(f).coords.dot(&pole) > 0.8);
        }
    }
}
