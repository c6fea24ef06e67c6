//! Bounding volume hierarchy over plain-valued primitives.
//!
//! Built by median split on the longest centroid axis. Traversal reports the
//! same `(primitive, t)` as a linear scan, including the lower-index rule for
//! equal distances.

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};
use crate::render::{hit_distance, Ray, TraceStats};
use crate::scene::Primitive;

/// Primitives per leaf at most.
pub const LEAF_SIZE: usize = 4;
const SLAB_PAD: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<R> {
    pub min: Vec3<R>,
    pub max: Vec3<R>,
}

impl<R: Real> Aabb<R> {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::splat(R::infinity()),
            max: Vec3::splat(R::neg_infinity()),
        }
    }

    pub fn union(self, o: Self) -> Self {
        Aabb {
            min: self.min.min_by_component(o.min),
            max: self.max.max_by_component(o.max),
        }
    }

    pub fn grow(self, p: Vec3<R>) -> Self {
        Aabb {
            min: self.min.min_by_component(p),
            max: self.max.max_by_component(p),
        }
    }

    pub fn centroid(&self) -> Vec3<R> {
        (self.min + self.max) * R::of(0.5)
    }

    pub fn contains(&self, o: &Aabb<R>) -> bool {
        (0..3).all(|k| self.min.axis(k) <= o.min.axis(k) && o.max.axis(k) <= self.max.axis(k))
    }

    /// Entry distance of the ray into the box if it overlaps `[0, limit]`.
    pub fn slab(&self, ray: &Ray<R>, limit: R) -> Option<R> {
        let slack = |t: R| t + num_traits::Float::abs(t) * R::of(SLAB_PAD) + R::of(SLAB_PAD * 1e-2);
        let mut t_near = R::of(0.0);
        let mut t_far = R::infinity();
        for k in 0..3 {
            let o = *ray.origin.axis(k);
            let d = *ray.direction.axis(k);
            let (lo, hi) = (*self.min.axis(k), *self.max.axis(k));
            if d == R::of(0.0) {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = R::of(1.0) / d;
            let (mut t0, mut t1) = ((lo - o) * inv, (hi - o) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = if t0 > t_near { t0 } else { t_near };
            t_far = if t1 < t_far { t1 } else { t_far };
        }
        (t_near <= slack(t_far) && t_near <= slack(limit)).then_some(t_near)
    }
}

/// Tightest box around a primitive. Flat boxes are legal.
pub fn aabb_of<R: Real>(prim: &Primitive<R>) -> Aabb<R> {
    match prim {
        Primitive::Triangle(t) => t.vertices.iter().fold(Aabb::empty(), |b, &v| b.grow(v)),
        Primitive::Sphere(s) => Aabb {
            min: s.center - Vec3::splat(s.radius),
            max: s.center + Vec3::splat(s.radius),
        },
    }
}

#[derive(Clone, Debug)]
pub enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Clone, Debug)]
pub struct BvhNode<R> {
    pub bounds: Aabb<R>,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct Bvh<R> {
    pub nodes: Vec<BvhNode<R>>,
    /// Primitive indices in leaf order.
    pub order: Vec<u32>,
}

impl<R: Real> Bvh<R> {
    pub fn build(prims: &[Primitive<R>]) -> Result<Self> {
        if prims.is_empty() {
            return Err(Error::EmptyBvh);
        }
        let boxes: Vec<Aabb<R>> = prims.iter().map(aabb_of).collect();
        let centroids: Vec<Vec3<R>> = boxes.iter().map(Aabb::centroid).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * prims.len() / LEAF_SIZE + 1),
            order: (0..prims.len() as u32).collect(),
        };
        bvh.split(&boxes, &centroids, 0, prims.len());
        Ok(bvh)
    }

    fn split(&mut self, boxes: &[Aabb<R>], centroids: &[Vec3<R>], start: usize, end: usize) -> u32 {
        let ids = &mut self.order[start..end];
        let bounds = ids.iter().fold(Aabb::empty(), |b, &i| b.union(boxes[i as usize]));
        let here = self.nodes.len() as u32;
        self.nodes.push(BvhNode {
            bounds,
            kind: NodeKind::Leaf {
                start: start as u32,
                count: (end - start) as u32,
            },
        });
        if end - start <= LEAF_SIZE {
            return here;
        }
        let cb = ids.iter().fold(Aabb::empty(), |b, &i| b.grow(centroids[i as usize]));
        let ext = cb.max - cb.min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        ids.sort_by(|&a, &b| {
            let (ca, cb) = (*centroids[a as usize].axis(axis), *centroids[b as usize].axis(axis));
            ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        let left = self.split(boxes, centroids, start, mid);
        let right = self.split(boxes, centroids, mid, end);
        self.nodes[here as usize].kind = NodeKind::Inner { left, right };
        here
    }

    /// Nearest hit as `(primitive index, t)`.
    pub fn intersect(&self, prims: &[Primitive<R>], ray: &Ray<R>, stats: &mut TraceStats) -> Option<(usize, R)> {
        let mut best: Option<(usize, R)> = None;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        let root = &self.nodes[0];
        stats.node_visits += 1;
        root.bounds.slab(ray, R::infinity())?;
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            let limit = best.map_or(R::infinity(), |(_, t)| t);
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &i in &self.order[start as usize..(start + count) as usize] {
                        stats.primitive_tests += 1;
                        let Some(t) = hit_distance(ray, &prims[i as usize]) else { continue };
                        let better = match best {
                            None => true,
                            Some((bi, bt)) => t < bt || (t == bt && (i as usize) < bi),
                        };
                        if better {
                            best = Some((i as usize, t));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stats.node_visits += 2;
                    let tl = self.nodes[left as usize].bounds.slab(ray, limit);
                    let tr = self.nodes[right as usize].bounds.slab(ray, limit);
                    match (tl, tr) {
                        (Some(a), Some(b)) => {
                            // Push the farther child first so the nearer pops first.
                            if a <= b {
                                stack.push(right);
                                stack.push(left);
                            } else {
                                stack.push(left);
                                stack.push(right);
                            }
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }

    /// Primitive indices of every leaf, in node order.
    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Leaf { start, count } => Some(&self.order[start as usize..(start + count) as usize]),
            NodeKind::Inner { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk<R>(b: &Bvh<R>, n: u32) -> usize {
            match b.nodes[n as usize].kind {
                NodeKind::Leaf { .. } => 1,
                NodeKind::Inner { left, right } => 1 + walk(b, left).max(walk(b, right)),
            }
        }
        walk(self, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::linear_nearest;
    use crate::scene::{Sphere, Triangle};

    fn grid(n: usize) -> Vec<Primitive<f64>> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64, j as f64);
                let z = ((i * 7 + j * 3) % 5) as f64;
                out.push(Primitive::Triangle(
                    Triangle::new(Vec3::new(x, y, z), Vec3::new(x + 1.0, y, z), Vec3::new(x, y + 1.0, z), 0).unwrap(),
                ));
            }
        }
        out.push(Primitive::Sphere(Sphere::new(Vec3::new(2.0, 2.0, -3.0), 1.5, 0).unwrap()));
        out
    }

    #[test]
    fn boxes_are_tight() {
        let tri: Primitive<f64> = Primitive::Triangle(Triangle::new(Vec3::lit(0., 0., 0.), Vec3::lit(1., 0., 0.), Vec3::lit(0., 1., 0.), 0).unwrap());
        assert_eq!(aabb_of(&tri), Aabb { min: Vec3::zero(), max: Vec3::lit(1., 1., 0.) });
        let s = Primitive::Sphere(Sphere::new(Vec3::lit(1., 2., 3.), 2.0, 0).unwrap());
        assert_eq!(aabb_of(&s), Aabb { min: Vec3::lit(-1., 0., 1.), max: Vec3::lit(3., 4., 5.) });
    }

    #[test]
    fn single_primitive_is_a_leaf_root() {
        let prims = grid(1)[..1].to_vec();
        let bvh = Bvh::build(&prims).unwrap();
        assert_eq!(bvh.nodes.len(), 1);
        let r = Ray::new(Vec3::lit(0.2, 0.2, -3.), Vec3::lit(0., 0., 1.));
        let mut s = TraceStats::default();
        assert_eq!(bvh.intersect(&prims, &r, &mut s).map(|h| h.1), hit_distance(&r, &prims[0]));
    }

    #[test]
    fn root_miss_tests_nothing() {
        let prims = grid(5);
        let bvh = Bvh::build(&prims).unwrap();
        let r = Ray::new(Vec3::lit(100., 100., -3.), Vec3::lit(0., 0., 1.));
        let mut s = TraceStats::default();
        assert_eq!(bvh.intersect(&prims, &r, &mut s), None);
        assert_eq!(s.primitive_tests, 0);
    }

    #[test]
    fn empty_scene_is_rejected() {
        assert!(matches!(Bvh::<f32>::build(&[]), Err(Error::EmptyBvh)));
    }

    #[test]
    fn every_primitive_in_exactly_one_leaf_and_boxes_nest() {
        let prims = grid(9);
        let bvh = Bvh::build(&prims).unwrap();
        let mut seen: Vec<u32> = bvh.leaves().flatten().copied().collect();
        assert!(bvh.leaves().all(|l| l.len() <= LEAF_SIZE));
        seen.sort();
        assert_eq!(seen, (0..prims.len() as u32).collect::<Vec<_>>());
        for node in &bvh.nodes {
            match node.kind {
                NodeKind::Inner { left, right } => {
                    assert!(node.bounds.contains(&bvh.nodes[left as usize].bounds));
                    assert!(node.bounds.contains(&bvh.nodes[right as usize].bounds));
                }
                NodeKind::Leaf { start, count } => {
                    for &i in &bvh.order[start as usize..(start + count) as usize] {
                        assert!(node.bounds.contains(&aabb_of(&prims[i as usize])));
                    }
                }
            }
        }
    }

    #[test]
    fn matches_linear_scan_on_grid() {
        let prims = grid(8);
        let bvh = Bvh::build(&prims).unwrap();
        for a in 0..40 {
            for b in 0..40 {
                let origin = Vec3::new(a as f64 * 0.23 - 0.5, b as f64 * 0.21 - 0.5, -10.0);
                let dir = Vec3::new(0.05 * (a as f64 - 20.0) / 20.0, 0.03, 1.0).normalize();
                let r = Ray::new(origin, dir);
                let mut s = TraceStats::default();
                assert_eq!(bvh.intersect(&prims, &r, &mut s), linear_nearest(&prims, &r, &mut s));
            }
        }
    }

    #[test]
    fn overlapping_duplicates_resolve_to_lower_index() {
        let tri = Triangle::new(Vec3::lit(-1., -1., 0.), Vec3::lit(1., -1., 0.), Vec3::lit(0., 1., 0.), 0).unwrap();
        let mut prims = grid(4);
        prims.push(Primitive::Triangle(tri.clone()));
        prims.insert(3, Primitive::Triangle(tri));
        let bvh = Bvh::build(&prims).unwrap();
        let r = Ray::new(Vec3::lit(0., 0., -5.), Vec3::lit(0., 0., 1.));
        let mut s = TraceStats::default();
        assert_eq!(bvh.intersect(&prims, &r, &mut s), linear_nearest(&prims, &r, &mut s));
    }

    #[test]
    fn prunes_work_on_large_meshes() {
        let prims = grid(30);
        let bvh = Bvh::build(&prims).unwrap();
        let r = Ray::new(Vec3::new(10.3, 12.2, -20.0), Vec3::lit(0., 0., 1.));
        let mut s = TraceStats::default();
        bvh.intersect(&prims, &r, &mut s).unwrap();
        assert!(s.primitive_tests < 100, "{s:?}");
    }
}
