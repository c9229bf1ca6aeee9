//! Mesh ingestion, ray casting and camera sampling. Geometry is never trained.

mod bvh;
mod camera;
mod mesh;
pub mod primitives;

use thiserror::Error;

pub use bvh::{intersect_triangle, Bvh, RAY_EPSILON};
pub use camera::{sample_cameras, Camera, Intrinsics, Ray, MIN_IMAGE_SIDE};
pub use mesh::{load_mesh, normalize_mesh, LoadedMesh, TriangleMesh};

use crate::diff::Vec3;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("mesh has no usable faces")]
    EmptyMesh,
    #[error("face index {index} out of range for {vertices} vertices")]
    InvalidIndex { index: usize, vertices: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// First intersection along a camera ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub point: Vec3,
    pub face: usize,
    /// Face normal flipped to face the ray origin.
    pub normal: Vec3,
    pub distance: f64,
}

/// A mesh with its acceleration structure; immutable once built.
#[derive(Clone, Debug)]
pub struct Scene {
    mesh: TriangleMesh,
    bvh: Bvh,
}

impl Scene {
    pub fn new(mesh: TriangleMesh) -> Self {
        let bvh = Bvh::build(&mesh);
        Self { mesh, bvh }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn cast_ray(&self, ray: &Ray) -> Option<RayHit> {
        let (face, t) = self.bvh.closest_hit(&self.mesh, ray)?;
        let n = self.mesh.face_normal(face);
        let normal = if n.dot(ray.direction) > 0.0 { -n } else { n };
        Some(RayHit {
            point: ray.at(t),
            face,
            normal,
            distance: t,
        })
    }
}

pub fn cast_ray(scene: &Scene, ray: &Ray) -> Option<RayHit> {
    scene.cast_ray(ray)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> TriangleMesh {
        let v: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -0.5 } else { 0.5 },
                    if i & 2 == 0 { -0.5 } else { 0.5 },
                    if i & 4 == 0 { -0.5 } else { 0.5 },
                )
            })
            .collect();
        let f = vec![
            [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6], [0, 1, 4], [1, 5, 4],
            [2, 6, 3], [3, 6, 7], [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
        ];
        TriangleMesh::from_soup(v, f).unwrap().mesh
    }

    #[test]
    fn ray_hits_cube_top() {
        let scene = Scene::new(unit_cube());
        let hit = scene
            .cast_ray(&Ray::new(Vec3::new(0.1, 0.2, 3.0), Vec3::new(0., 0., -1.)))
            .unwrap();
        assert!((hit.point.z - 0.5).abs() < 1e-12);
        assert!((hit.distance - 2.5).abs() < 1e-12);
        assert_eq!(hit.normal, Vec3::new(0., 0., 1.));
    }

    #[test]
    fn ray_pointing_away_misses() {
        let scene = Scene::new(unit_cube());
        assert!(scene
            .cast_ray(&Ray::new(Vec3::new(0., 0., 3.0), Vec3::new(0., 0., 1.)))
            .is_none());
    }

    #[test]
    fn hit_normals_face_the_ray() {
        let scene = Scene::new(unit_cube());
        // From inside, the far wall is hit and its normal flipped inward.
        let ray = Ray::new(Vec3::new(0., 0., 0.), Vec3::new(0.2, 0.1, 1.0));
        let hit = scene.cast_ray(&ray).unwrap();
        assert!(hit.normal.dot(ray.direction) < 0.0);
    }
}
