//! Binned-SAH bounding volume hierarchy over a [`TriangleMesh`].

use super::camera::Ray;
use super::mesh::TriangleMesh;
use crate::diff::Vec3;

/// Hits closer than this along the ray are ignored.
pub const RAY_EPSILON: f64 = 1e-6;

const LEAF_SIZE: usize = 4;
const BINS: usize = 12;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    fn grow(self, p: Vec3) -> Aabb {
        Aabb {
            min: self.min.min_elem(p),
            max: self.max.max_elem(p),
        }
    }

    fn union(self, o: Aabb) -> Aabb {
        Aabb {
            min: self.min.min_elem(o.min),
            max: self.max.max_elem(o.max),
        }
    }

    fn area(self) -> f64 {
        let d = self.max - self.min;
        if d.x < 0.0 {
            return 0.0;
        }
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    /// Entry distance of the slab test, or `None` when the box is missed
    /// within `[0, t_max]`.
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let o = origin.axis(a);
            let inv = inv_dir.axis(a);
            let mut near = (self.min.axis(a) - o) * inv;
            let mut far = (self.max.axis(a) - o) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf keeps the current interval.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            // Robust traversal slack (Ize 2013).
            if t0 > t1 * (1.0 + 4.0 * f64::EPSILON) {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// First primitive for leaves, first child for interior nodes.
    start: u32,
    /// Primitive count; zero marks an interior node.
    count: u32,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

/// Watertight ray/triangle test (Woop, Benthin and Wald 2013).
/// Returns the ray parameter of the hit.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<f64> {
    let d = ray.direction;
    let kz = if d.x.abs() > d.y.abs() {
        if d.x.abs() > d.z.abs() {
            0
        } else {
            2
        }
    } else if d.y.abs() > d.z.abs() {
        1
    } else {
        2
    };
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d.axis(kz) < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sz = 1.0 / d.axis(kz);
    let sx = d.axis(kx) * sz;
    let sy = d.axis(ky) * sz;

    let rel = tri.map(|v| v - ray.origin);
    let [a, b, c] = rel;
    let ax = a.axis(kx) - sx * a.axis(kz);
    let ay = a.axis(ky) - sy * a.axis(kz);
    let bx = b.axis(kx) - sx * b.axis(kz);
    let by = b.axis(ky) - sy * b.axis(kz);
    let cx = c.axis(kx) - sx * c.axis(kz);
    let cy = c.axis(ky) - sy * c.axis(kz);

    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let az = sz * a.axis(kz);
    let bz = sz * b.axis(kz);
    let cz = sz * c.axis(kz);
    let t = (u * az + v * bz + w * cz) / det;
    (t >= t_min && t <= t_max).then_some(t)
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.face_count();
        let mut bounds = Vec::with_capacity(n);
        let mut centers = Vec::with_capacity(n);
        for f in 0..n {
            let [a, b, c] = mesh.triangle(f);
            let bb = Aabb::EMPTY.grow(a).grow(b).grow(c);
            bounds.push(bb);
            centers.push((a + b + c) * (1.0 / 3.0));
        }
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n.max(1)),
            order: (0..n as u32).collect(),
        };
        bvh.nodes.push(Node {
            bounds: Aabb::EMPTY,
            start: 0,
            count: n as u32,
        });
        bvh.subdivide(0, &bounds, &centers);
        bvh
    }

    fn subdivide(&mut self, node: usize, bounds: &[Aabb], centers: &[Vec3]) {
        let start = self.nodes[node].start as usize;
        let count = self.nodes[node].count as usize;
        let prims = &self.order[start..start + count];
        let outer = prims
            .iter()
            .fold(Aabb::EMPTY, |acc, &p| acc.union(bounds[p as usize]));
        self.nodes[node].bounds = outer;
        if count <= LEAF_SIZE {
            return;
        }
        let inner = prims
            .iter()
            .fold(Aabb::EMPTY, |acc, &p| acc.grow(centers[p as usize]));

        // Binned SAH over the centroid box.
        let mut best: Option<(f64, usize, f64)> = None;
        for axis in 0..3 {
            let lo = inner.min.axis(axis);
            let extent = inner.max.axis(axis) - lo;
            if extent <= 0.0 {
                continue;
            }
            let mut bins = [(Aabb::EMPTY, 0usize); BINS];
            let scale = BINS as f64 / extent;
            for &p in prims {
                let b = (((centers[p as usize].axis(axis) - lo) * scale) as usize).min(BINS - 1);
                bins[b].0 = bins[b].0.union(bounds[p as usize]);
                bins[b].1 += 1;
            }
            let mut right_area = [0.0; BINS];
            let mut right_count = [0usize; BINS];
            let (mut acc, mut cnt) = (Aabb::EMPTY, 0);
            for i in (1..BINS).rev() {
                acc = acc.union(bins[i].0);
                cnt += bins[i].1;
                right_area[i] = acc.area();
                right_count[i] = cnt;
            }
            let (mut acc, mut cnt) = (Aabb::EMPTY, 0);
            for i in 0..BINS - 1 {
                acc = acc.union(bins[i].0);
                cnt += bins[i].1;
                if cnt == 0 || right_count[i + 1] == 0 {
                    continue;
                }
                let cost = acc.area() * cnt as f64 + right_area[i + 1] * right_count[i + 1] as f64;
                if best.map_or(true, |(c, _, _)| cost < c) {
                    best = Some((cost, axis, lo + (i + 1) as f64 / scale));
                }
            }
        }
        let Some((cost, axis, split)) = best else {
            return;
        };
        if cost >= outer.area() * count as f64 {
            return;
        }

        let slice = &mut self.order[start..start + count];
        let mut i = 0;
        let mut j = count;
        while i < j {
            if centers[slice[i] as usize].axis(axis) < split {
                i += 1;
            } else {
                j -= 1;
                slice.swap(i, j);
            }
        }
        if i == 0 || i == count {
            return;
        }
        let left = self.nodes.len();
        self.nodes.push(Node {
            bounds: Aabb::EMPTY,
            start: start as u32,
            count: i as u32,
        });
        self.nodes.push(Node {
            bounds: Aabb::EMPTY,
            start: (start + i) as u32,
            count: (count - i) as u32,
        });
        self.nodes[node].start = left as u32;
        self.nodes[node].count = 0;
        self.subdivide(left, bounds, centers);
        self.subdivide(left + 1, bounds, centers);
    }

    /// Closest hit as `(face, t)`.
    pub fn closest_hit(&self, mesh: &TriangleMesh, ray: &Ray) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut best: Option<(usize, f64)> = None;
        let mut t_max = f64::INFINITY;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(index) = stack.pop() {
            let node = self.nodes[index as usize];
            if node.bounds.hit(ray.origin, inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for &p in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let tri = mesh.triangle(p as usize);
                    if let Some(t) = intersect_triangle(ray, &tri, RAY_EPSILON, t_max) {
                        // Equal distances resolve to the lower face id.
                        let better = match best {
                            None => true,
                            Some((f, bt)) => t < bt || (t == bt && (p as usize) < f),
                        };
                        if better {
                            best = Some((p as usize, t));
                            t_max = t;
                        }
                    }
                }
                continue;
            }
            let l = node.start as usize;
            let near_l = self.nodes[l].bounds.hit(ray.origin, inv, t_max);
            let near_r = self.nodes[l + 1].bounds.hit(ray.origin, inv, t_max);
            match (near_l, near_r) {
                (Some(a), Some(b)) => {
                    let (first, second) = if a <= b { (l, l + 1) } else { (l + 1, l) };
                    stack.push(second as u32);
                    stack.push(first as u32);
                }
                (Some(_), None) => stack.push(l as u32),
                (None, Some(_)) => stack.push((l + 1) as u32),
                (None, None) => {}
            }
        }
        best
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
