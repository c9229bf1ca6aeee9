use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::diff::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Pinhole camera looking at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub up: Vec3,
    pub fov_y_degrees: f64,
    pub width: usize,
    pub height: usize,
}

/// Resolution and field of view shared by sampled cameras.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fov_y_degrees: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fov_y_degrees: 45.0,
            width: 224,
            height: 224,
        }
    }
}

pub const MIN_IMAGE_SIDE: usize = 8;

impl Camera {
    pub fn new(position: Vec3, intrinsics: Intrinsics) -> Result<Self, GeometryError> {
        if !position.is_finite() || position.norm() <= 1.0 {
            return Err(GeometryError::InvalidCamera(format!(
                "position {position:?} must lie outside the unit sphere"
            )));
        }
        if intrinsics.width < MIN_IMAGE_SIDE || intrinsics.height < MIN_IMAGE_SIDE {
            return Err(GeometryError::InvalidCamera(format!(
                "image {}x{} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}",
                intrinsics.width, intrinsics.height
            )));
        }
        if !(intrinsics.fov_y_degrees > 0.0 && intrinsics.fov_y_degrees < 180.0) {
            return Err(GeometryError::InvalidCamera("fov must be in (0, 180)".into()));
        }
        Ok(Self {
            position,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_y_degrees: intrinsics.fov_y_degrees,
            width: intrinsics.width,
            height: intrinsics.height,
        })
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fov_y_degrees: self.fov_y_degrees,
            width: self.width,
            height: self.height,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Orthonormal (right, up, forward) frame.
    fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (-self.position).normalize();
        let mut up = self.up.normalize();
        if forward.cross(up).norm() < 1e-9 {
            up = if forward.z.abs() < 0.9 {
                Vec3::new(0.0, 0.0, 1.0)
            } else {
                Vec3::new(1.0, 0.0, 0.0)
            };
        }
        let right = forward.cross(up).normalize();
        let true_up = right.cross(forward);
        (right, true_up, forward)
    }

    /// Ray through the center of pixel `(row, col)`; row 0 is the top.
    pub fn ray(&self, row: usize, col: usize) -> Ray {
        let (right, up, forward) = self.basis();
        let half = (self.fov_y_degrees.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let x = (2.0 * (col as f64 + 0.5) / self.width as f64 - 1.0) * half * aspect;
        let y = (1.0 - 2.0 * (row as f64 + 0.5) / self.height as f64) * half;
        Ray::new(self.position, forward + right * x + up * y)
    }

    /// All pixel rays in row-major order.
    pub fn rays(&self) -> Vec<Ray> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .map(|(r, c)| self.ray(r, c))
            .collect()
    }
}

/// Positions drawn around `anchor * radius`: Gaussian offsets of standard
/// deviation `sigma` on the unit sphere, re-projected to the radius.
pub fn sample_cameras<R: Rng + ?Sized>(
    anchor: Vec3,
    radius: f64,
    sigma: f64,
    n: usize,
    intrinsics: Intrinsics,
    rng: &mut R,
) -> Result<Vec<Camera>, GeometryError> {
    if radius <= 1.0 || sigma < 0.0 || !sigma.is_finite() {
        return Err(GeometryError::InvalidCamera(format!(
            "radius {radius} must exceed 1 and sigma {sigma} be non-negative"
        )));
    }
    let anchor = anchor.normalize();
    (0..n)
        .map(|_| {
            let noise = Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            let p = anchor + noise * sigma;
            let dir = if p.norm() < 1e-12 { anchor } else { p.normalize() };
            Camera::new(dir * radius, intrinsics)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_gives_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cams = sample_cameras(Vec3::new(0., 0., 1.), 2.0, 0.0, 5, Intrinsics::default(), &mut rng).unwrap();
        for c in cams {
            assert_eq!(c.position, Vec3::new(0., 0., 2.0));
        }
    }

    #[test]
    fn sampled_positions_on_radius_sphere_and_deterministic() {
        let sample = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_cameras(Vec3::new(0.3, 0.2, 1.0), 2.5, 0.3, 64, Intrinsics::default(), &mut rng).unwrap()
        };
        let a = sample(7);
        for c in &a {
            assert!((c.position.norm() - 2.5).abs() < 1e-9);
        }
        assert_eq!(a, sample(7));
        assert_ne!(a, sample(8));
    }

    #[test]
    fn center_ray_points_at_origin() {
        let cam = Camera::new(Vec3::new(0., 0., 3.), Intrinsics { fov_y_degrees: 45.0, width: 9, height: 9 }).unwrap();
        let r = cam.ray(4, 4);
        assert!((r.direction - Vec3::new(0., 0., -1.)).norm() < 1e-12);
        // Row 0 looks up, column 0 looks left.
        assert!(cam.ray(0, 4).direction.y > 0.0);
        assert!(cam.ray(4, 0).direction.x < 0.0);
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(Camera::new(Vec3::new(0., 0., 0.5), Intrinsics::default()).is_err());
        let tiny = Intrinsics { width: 4, ..Intrinsics::default() };
        assert!(Camera::new(Vec3::new(0., 0., 2.), tiny).is_err());
    }
}
