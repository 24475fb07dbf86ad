//! Fixed spherical camera trajectory and per-view pinhole cameras.
//!
//! Cameras sit on a sphere of radius `r` around the origin, on one azimuth
//! ring per polar angle, all looking at the world origin. Camera space is
//! right-handed with the camera looking down `-z`; pixel `y` grows downward
//! and pixel centers sit at half-integer coordinates.

use nalgebra::{Isometry3, Matrix4, Perspective3, Point2, Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Near clipping distance along the camera's forward axis.
pub const NEAR_PLANE: f64 = 0.01;
/// Far clipping distance.
pub const FAR_PLANE: f64 = 100.0;

/// World axis used as the trajectory's polar axis and camera up vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarAxis {
    #[default]
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Total number of views K.
    pub views: usize,
    pub radius: f64,
    /// Polar angles in degrees, one azimuth ring each.
    pub polar_angles: Vec<f64>,
    pub image_size: u32,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub polar_axis: PolarAxis,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            views: 8,
            radius: 2.0,
            polar_angles: vec![75.0, 115.0],
            image_size: 512,
            fov_y: 60.0,
            polar_axis: PolarAxis::Y,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.views < 2 || self.views % 2 != 0 {
            return fail(format!(
                "view count must be even and >= 2, got {}",
                self.views
            ));
        }
        if self.polar_angles.is_empty() || self.views % self.polar_angles.len() != 0 {
            return fail(format!(
                "view count {} is not divisible by the {} polar angles",
                self.views,
                self.polar_angles.len()
            ));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", self.radius));
        }
        if let Some(t) = self
            .polar_angles
            .iter()
            .find(|t| !(**t > 0.0 && **t < 180.0))
        {
            return fail(format!("polar angle must lie in (0, 180), got {t}"));
        }
        if !(self.fov_y > 10.0 && self.fov_y < 120.0) {
            return fail(format!("fov_y must lie in (10, 120), got {}", self.fov_y));
        }
        if self.image_size == 0 {
            return fail("image size must be positive".into());
        }
        Ok(())
    }

    pub fn views_per_ring(&self) -> usize {
        self.views / self.polar_angles.len()
    }
}

/// Result of projecting a world point into a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Pixel coordinates, `y` downward.
    pub pixel: Point2<f64>,
    /// Distance along the camera's forward axis.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub index: usize,
    pub radius: f64,
    /// Polar angle in degrees.
    pub theta: f64,
    /// Azimuth in degrees.
    pub phi: f64,
    pub position: Point3<f64>,
    /// World to camera transform.
    pub view: Matrix4<f64>,
    /// Camera to clip-space perspective transform.
    pub projection: Matrix4<f64>,
    pub image_size: u32,
    pub fov_y: f64,
}

pub fn spherical_position(
    radius: f64,
    theta_deg: f64,
    phi_deg: f64,
    axis: PolarAxis,
) -> Point3<f64> {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    let (planar, polar) = (radius * t.sin(), radius * t.cos());
    match axis {
        PolarAxis::Y => Point3::new(planar * p.cos(), polar, planar * p.sin()),
        PolarAxis::Z => Point3::new(planar * p.cos(), planar * p.sin(), polar),
    }
}

impl Viewpoint {
    pub fn new(
        index: usize,
        radius: f64,
        theta: f64,
        phi: f64,
        axis: PolarAxis,
        image_size: u32,
        fov_y: f64,
    ) -> Self {
        let position = spherical_position(radius, theta, phi, axis);
        let mut up = match axis {
            PolarAxis::Y => Vector3::y(),
            PolarAxis::Z => Vector3::z(),
        };
        let forward = -position.coords.normalize();
        if forward.cross(&up).norm() < 1e-9 {
            up = Vector3::x();
        }
        let view = Isometry3::look_at_rh(&position, &Point3::origin(), &up).to_homogeneous();
        let projection =
            Perspective3::new(1.0, fov_y.to_radians(), NEAR_PLANE, FAR_PLANE).to_homogeneous();
        Self {
            index,
            radius,
            theta,
            phi,
            position,
            view,
            projection,
            image_size,
            fov_y,
        }
    }

    /// Unit vector the camera looks along, in world space.
    pub fn forward(&self) -> Vector3<f64> {
        -self.position.coords.normalize()
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        let h = self.view * p.to_homogeneous();
        Point3::new(h.x, h.y, h.z)
    }

    /// Pixel coordinates of a camera-space point with positive depth.
    #[inline]
    pub fn camera_to_pixel(&self, c: &Point3<f64>) -> Point2<f64> {
        let clip = self.projection * Vector4::new(c.x, c.y, c.z, 1.0);
        let size = self.image_size as f64;
        let (nx, ny) = (clip.x / clip.w, clip.y / clip.w);
        Point2::new((nx + 1.0) * 0.5 * size, (1.0 - ny) * 0.5 * size)
    }

    /// Projects a world point. Fails with `BehindCamera`-style error when the
    /// point is not in front of the near plane.
    pub fn project(&self, point: &Point3<f64>) -> Result<Projection, BehindCamera> {
        let c = self.to_camera(point);
        let depth = -c.z;
        if !(depth > NEAR_PLANE) {
            return Err(BehindCamera { depth });
        }
        Ok(Projection {
            pixel: self.camera_to_pixel(&c),
            depth,
        })
    }

    /// Camera-space point at `depth` along the ray through `pixel`.
    pub fn pixel_to_camera(&self, pixel: &Point2<f64>, depth: f64) -> Point3<f64> {
        let size = self.image_size as f64;
        let nx = 2.0 * pixel.x / size - 1.0;
        let ny = 1.0 - 2.0 * pixel.y / size;
        let (sx, sy) = (self.projection[(0, 0)], self.projection[(1, 1)]);
        Point3::new(nx * depth / sx, ny * depth / sy, -depth)
    }

    /// Inverse of [`Viewpoint::project`].
    pub fn unproject(&self, pixel: &Point2<f64>, depth: f64) -> Point3<f64> {
        let c = self.pixel_to_camera(pixel, depth);
        let inv = self
            .view
            .try_inverse()
            .expect("rigid view transform is invertible");
        let w = inv * c.to_homogeneous();
        Point3::new(w.x, w.y, w.z)
    }

    /// World-space ray through a pixel: camera position and unit direction.
    pub fn ray(&self, pixel: &Point2<f64>) -> (Point3<f64>, Vector3<f64>) {
        let target = self.unproject(pixel, 1.0);
        (self.position, (target - self.position).normalize())
    }
}

/// Returned by [`Viewpoint::project`] for points at or behind the near plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehindCamera {
    pub depth: f64,
}

impl std::fmt::Display for BehindCamera {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "point at depth {} is behind the camera", self.depth)
    }
}

impl std::error::Error for BehindCamera {}

/// Cameras for every ring and azimuth, ring by ring.
pub fn generate_trajectory(config: &TrajectoryConfig) -> Result<Vec<Viewpoint>> {
    config.validate()?;
    let per_ring = config.views_per_ring();
    let step = 360.0 / per_ring as f64;
    let mut views = Vec::with_capacity(config.views);
    for &theta in &config.polar_angles {
        for i in 0..per_ring {
            views.push(Viewpoint::new(
                views.len(),
                config.radius,
                theta,
                i as f64 * step,
                config.polar_axis,
                config.image_size,
                config.fov_y,
            ));
        }
    }
    Ok(views)
}
