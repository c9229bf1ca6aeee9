//! Procedural meshes used by tests, demos and the recovery experiments.

use std::collections::HashMap;

use super::mesh::TriangleMesh;
use crate::diff::Vec3;

/// Icosahedron refined `subdivisions` times and projected to the unit
/// sphere; `icosphere(0)` has 20 faces, each level multiplies by 4.
pub fn icosphere(subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&p| Vec3::from(p).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
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
    TriangleMesh::from_soup(vertices, faces)
        .expect("icosphere is well formed")
        .mesh
}

/// Latitude/longitude sphere with `2 * stacks * slices - 2 * slices` faces,
/// optionally displaced radially by `bump(direction)`.
pub fn uv_sphere(stacks: usize, slices: usize, bump: impl Fn(Vec3) -> f64) -> TriangleMesh {
    let stacks = stacks.max(2);
    let slices = slices.max(3);
    let mut vertices = Vec::new();
    let dir = |i: usize, j: usize| {
        let phi = std::f64::consts::PI * i as f64 / stacks as f64;
        let theta = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
        Vec3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin())
    };
    let top = Vec3::new(0.0, 1.0, 0.0);
    vertices.push(top * (1.0 + bump(top)));
    for i in 1..stacks {
        for j in 0..slices {
            let d = dir(i, j);
            vertices.push(d * (1.0 + bump(d)));
        }
    }
    let bottom = Vec3::new(0.0, -1.0, 0.0);
    vertices.push(bottom * (1.0 + bump(bottom)));
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let last = (vertices.len() - 1) as u32;
    let mut faces = Vec::new();
    for j in 0..slices {
        faces.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            faces.push([ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)]);
            faces.push([ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)]);
        }
    }
    for j in 0..slices {
        faces.push([last, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
    }
    TriangleMesh::from_soup(vertices, faces)
        .expect("uv sphere is well formed")
        .mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_face_counts() {
        assert_eq!(icosphere(0).face_count(), 20);
        assert_eq!(icosphere(2).face_count(), 320);
        let m = icosphere(1);
        for v in m.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        for f in 0..m.face_count() {
            assert!(m.face_normal(f).dot(m.triangle(f)[0]) > 0.0);
        }
    }

    #[test]
    fn uv_sphere_counts_and_outward_normals() {
        let m = uv_sphere(10, 16, |_| 0.0);
        assert_eq!(m.face_count(), 2 * 10 * 16 - 2 * 16);
        for f in 0..m.face_count() {
            let [a, b, c] = m.triangle(f);
            let center = (a + b + c) * (1.0 / 3.0);
            assert!(m.face_normal(f).dot(center) > 0.0);
        }
    }
}
