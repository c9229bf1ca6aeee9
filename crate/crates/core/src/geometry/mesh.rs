use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

use super::GeometryError;
use crate::diff::Vec3;

/// Fixed input geometry: positions, triangles and per-face unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
}

/// Outcome of building a mesh from a triangle soup.
#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    /// Faces removed because they had zero area or repeated vertices.
    pub dropped_faces: usize,
}

impl TriangleMesh {
    /// Validates indices and drops degenerate faces.
    pub fn from_soup(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<LoadedMesh, GeometryError> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Parse("non-finite vertex position".into()));
        }
        let n = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for f in faces {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(GeometryError::InvalidIndex {
                    index: *f.iter().max().unwrap() as usize,
                    vertices: n,
                });
            }
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(c - a);
            let len = cross.norm();
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || len == 0.0 || !len.is_finite() {
                dropped += 1;
                continue;
            }
            kept.push(f);
            normals.push(cross * (1.0 / len));
        }
        if kept.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate face(s)");
        }
        Ok(LoadedMesh {
            mesh: TriangleMesh {
                vertices,
                faces: kept,
                normals,
            },
            dropped_faces: dropped,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.normals[face]
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self
            .vertices
            .iter()
            .fold(Vec3::ZERO, |acc, &v| acc + v);
        sum * (1.0 / self.vertices.len() as f64)
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Moves the vertex centroid to the origin and scales into the unit sphere.
    pub fn normalized(&self) -> TriangleMesh {
        let c = self.centroid();
        let centered: Vec<Vec3> = self.vertices.iter().map(|&v| v - c).collect();
        let r = centered.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let s = if r > 0.0 { 1.0 / r } else { 1.0 };
        TriangleMesh {
            vertices: centered.into_iter().map(|v| v * s).collect(),
            faces: self.faces.clone(),
            normals: self.normals.clone(),
        }
    }
}

pub fn normalize_mesh(mesh: &TriangleMesh) -> TriangleMesh {
    mesh.normalized()
}

/// Loads an OBJ or PLY file, fan-triangulating polygons.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<LoadedMesh, GeometryError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (vertices, faces) = match ext.as_deref() {
        Some("obj") => read_obj(path)?,
        Some("ply") => read_ply(path)?,
        _ => {
            return Err(GeometryError::Parse(format!(
                "unsupported mesh format: {}",
                path.display()
            )))
        }
    };
    TriangleMesh::from_soup(vertices, faces)
}

fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), GeometryError> {
    let opts = tobj::LoadOptions {
        triangulate: true,
        single_index: false,
        ignore_points: true,
        ignore_lines: true,
    };
    let (models, _) = tobj::load_obj(path, &opts).map_err(|e| match e {
        tobj::LoadError::OpenFileFailed | tobj::LoadError::ReadError => {
            GeometryError::Io(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
        }
        other => GeometryError::Parse(other.to_string()),
    })?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for model in models {
        let base = vertices.len() as u32;
        let p = &model.mesh.positions;
        vertices.extend(
            p.chunks_exact(3)
                .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)),
        );
        faces.extend(
            model
                .mesh
                .indices
                .chunks_exact(3)
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }
    Ok((vertices, faces))
}

fn read_ply(path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), GeometryError> {
    let mut reader = BufReader::new(File::open(path)?);
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut reader)
        .map_err(|e| GeometryError::Parse(format!("ply: {e}")))?;
    let scalar = |e: &DefaultElement, key: &str| -> Result<f64, GeometryError> {
        match e.get(key) {
            Some(Property::Float(v)) => Ok(*v as f64),
            Some(Property::Double(v)) => Ok(*v),
            Some(Property::Int(v)) => Ok(*v as f64),
            Some(Property::UInt(v)) => Ok(*v as f64),
            Some(Property::Short(v)) => Ok(*v as f64),
            Some(Property::UShort(v)) => Ok(*v as f64),
            Some(Property::Char(v)) => Ok(*v as f64),
            Some(Property::UChar(v)) => Ok(*v as f64),
            _ => Err(GeometryError::Parse(format!("ply: vertex property `{key}` missing"))),
        }
    };
    let vertices = ply
        .payload
        .get("vertex")
        .ok_or_else(|| GeometryError::Parse("ply: no vertex element".into()))?
        .iter()
        .map(|e| Ok(Vec3::new(scalar(e, "x")?, scalar(e, "y")?, scalar(e, "z")?)))
        .collect::<Result<Vec<_>, GeometryError>>()?;
    let mut faces = Vec::new();
    for e in ply.payload.get("face").map(Vec::as_slice).unwrap_or(&[]) {
        let list = e
            .get("vertex_indices")
            .or_else(|| e.get("vertex_index"))
            .ok_or_else(|| GeometryError::Parse("ply: face without vertex indices".into()))?;
        let idx: Vec<i64> = match list {
            Property::ListInt(v) => v.iter().map(|&i| i as i64).collect(),
            Property::ListUInt(v) => v.iter().map(|&i| i as i64).collect(),
            Property::ListShort(v) => v.iter().map(|&i| i as i64).collect(),
            Property::ListUShort(v) => v.iter().map(|&i| i as i64).collect(),
            Property::ListChar(v) => v.iter().map(|&i| i as i64).collect(),
            Property::ListUChar(v) => v.iter().map(|&i| i as i64).collect(),
            _ => return Err(GeometryError::Parse("ply: face indices are not an integer list".into())),
        };
        if idx.iter().any(|&i| i < 0 || i > u32::MAX as i64) {
            return Err(GeometryError::Parse("ply: face index out of range".into()));
        }
        for k in 1..idx.len().saturating_sub(1) {
            faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
        }
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const CUBE_OBJ: &str = "\
v 0 0 0\nv 2 0 0\nv 2 2 0\nv 0 2 0\nv 0 0 2\nv 2 0 2\nv 2 2 2\nv 0 2 2\n\
f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n\
f 2 3 7\nf 2 7 6\nf 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8\n";

    fn write_temp(ext: &str, body: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body).unwrap();
        f
    }

    #[test]
    fn cube_obj_counts() {
        let f = write_temp(".obj", CUBE_OBJ.as_bytes());
        let loaded = load_mesh(f.path()).unwrap();
        assert_eq!(loaded.mesh.vertex_count(), 8);
        assert_eq!(loaded.mesh.face_count(), 12);
        assert_eq!(loaded.dropped_faces, 0);
    }

    #[test]
    fn zero_area_face_dropped() {
        let body = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
        let f = write_temp(".obj", body.as_bytes());
        let loaded = load_mesh(f.path()).unwrap();
        assert_eq!(loaded.mesh.face_count(), 1);
        assert_eq!(loaded.dropped_faces, 1);
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let quads = "\
v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n";
        let f = write_temp(".obj", quads.as_bytes());
        let loaded = load_mesh(f.path()).unwrap();
        assert_eq!(loaded.mesh.face_count(), 12);
        // Reference fan: (v0, vk, vk+1) for each polygon.
        let p = |x, y, z| Vec3::new(x, y, z);
        assert_eq!(loaded.mesh.triangle(0), [p(0., 0., 0.), p(0., 1., 0.), p(1., 1., 0.)]);
        assert_eq!(loaded.mesh.triangle(1), [p(0., 0., 0.), p(1., 1., 0.), p(1., 0., 0.)]);
    }

    #[test]
    fn ply_ascii_and_binary() {
        let ascii = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n\
property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let f = write_temp(".ply", ascii.as_bytes());
        let m = load_mesh(f.path()).unwrap().mesh;
        assert_eq!(m.face_count(), 2);

        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty double x\n\
property double y\nproperty double z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_vec();
        for v in [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]] {
            for c in v {
                bin.extend_from_slice(&c.to_le_bytes());
            }
        }
        bin.push(3);
        for i in [0u32, 1, 2] {
            bin.extend_from_slice(&i.to_le_bytes());
        }
        let f = write_temp(".ply", &bin);
        let m = load_mesh(f.path()).unwrap().mesh;
        assert_eq!(m.face_count(), 1);
        assert!((m.face_normal(0).y.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let f = write_temp(".obj", b"v 0 0 0\n");
        assert!(matches!(load_mesh(f.path()), Err(GeometryError::EmptyMesh)));
        let f = write_temp(".stl", b"solid");
        assert!(matches!(load_mesh(f.path()), Err(GeometryError::Parse(_))));
        assert!(matches!(
            TriangleMesh::from_soup(vec![Vec3::ZERO], vec![[0, 1, 2]]),
            Err(GeometryError::InvalidIndex { .. })
        ));
    }

    #[test]
    fn normalize_cube() {
        let f = write_temp(".obj", CUBE_OBJ.as_bytes());
        let m = load_mesh(f.path()).unwrap().mesh.normalized();
        assert!(m.centroid().norm() < 1e-12);
        assert!((m.max_vertex_norm() - 1.0).abs() < 1e-12);
        let again = m.normalized();
        for (a, b) in m.vertices().iter().zip(again.vertices()) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }
}
