//! Forward pass: intersection, local shading, mirror reflection, full frames.
//!
//! Nearest-hit search always runs on plain values (linear scan or BVH). Only
//! the arithmetic of the winning hit runs on the generic scalar, so a render
//! over AD variables records one intersection per bounce no matter how many
//! primitives the scene holds, and the linear and BVH paths record identical
//! tapes.
//!
//! Shading is Lambertian diffuse plus Blinn-Phong specular per light, with a
//! constant ambient term and recursive mirror reflection. There are no shadow
//! rays.

use std::ops::Range;

use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::error::Result;
use crate::image::Image;
use crate::math::{Real, Scalar, Vec3};
use crate::scene::{CameraBasis, Light, Material, Primitive, Sphere, Triangle, World};

/// Minimum accepted ray parameter; also the reflected-origin offset.
pub const T_MIN: f64 = 1e-4;
/// Triangles whose Möller-Trumbore determinant is below this are parallel.
pub const PARALLEL_EPS: f64 = 1e-9;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<S> {
    pub origin: Vec3<S>,
    /// Unit length.
    pub direction: Vec3<S>,
}

impl<S: Scalar> Ray<S> {
    pub fn new(origin: Vec3<S>, direction: Vec3<S>) -> Self {
        Ray { origin, direction }
    }

    pub fn at(&self, t: S) -> Vec3<S> {
        self.origin + self.direction * t
    }

    pub fn value(&self) -> Ray<S::Real> {
        Ray::new(self.origin.value(), self.direction.value())
    }
}

/// Surface interaction on the generic scalar.
#[derive(Clone, Copy, Debug)]
pub struct Hit<S> {
    pub t: S,
    pub primitive: usize,
    /// Weights of (v1, v2, v3) for triangle hits.
    pub barycentric: Option<[S; 3]>,
    pub point: Vec3<S>,
    /// Unit normal on the side of the incoming ray.
    pub normal: Vec3<S>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleHit<S> {
    pub t: S,
    pub weights: [S; 3],
}

/// Smallest root of `|o + t·d − c|² = r²` above [`T_MIN`].
pub fn intersect_sphere<S: Scalar>(ray: &Ray<S>, sphere: &Sphere<S>) -> Option<S> {
    let oc = ray.origin - sphere.center;
    let b = ray.direction.dot(oc);
    let c = oc.dot(oc) - sphere.radius * sphere.radius;
    let disc = b * b - c;
    if disc.value() < S::Real::of(0.0) {
        return None;
    }
    let root = disc.sqrt();
    let t_min = S::Real::of(T_MIN);
    let near = -b - root;
    if near.value() > t_min {
        return Some(near);
    }
    let far = -b + root;
    (far.value() > t_min).then_some(far)
}

/// Möller-Trumbore. Weights are `(1 − u − v, u, v)` for `(v1, v2, v3)`.
pub fn intersect_triangle<S: Scalar>(ray: &Ray<S>, tri: &Triangle<S>) -> Option<TriangleHit<S>> {
    let zero = S::Real::of(0.0);
    let one = S::Real::of(1.0);
    let [v1, v2, v3] = tri.vertices;
    let e1 = v2 - v1;
    let e2 = v3 - v1;
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    if num_traits::Float::abs(det.value()) < S::Real::of(PARALLEL_EPS) {
        return None;
    }
    let inv = S::one() / det;
    let s = ray.origin - v1;
    let u = s.dot(p) * inv;
    if u.value() < zero || u.value() > one {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv;
    if v.value() < zero || (u + v).value() > one {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t.value() <= S::Real::of(T_MIN) {
        return None;
    }
    Some(TriangleHit {
        t,
        weights: [S::one() - u - v, u, v],
    })
}

/// Ray parameter of the hit on `prim`, if any.
pub fn hit_distance<S: Scalar>(ray: &Ray<S>, prim: &Primitive<S>) -> Option<S> {
    match prim {
        Primitive::Triangle(t) => intersect_triangle(ray, t).map(|h| h.t),
        Primitive::Sphere(s) => intersect_sphere(ray, s),
    }
}

/// Counters filled during hit-finding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub rays: u64,
    pub primitive_tests: u64,
    pub node_visits: u64,
}

impl std::ops::AddAssign for TraceStats {
    fn add_assign(&mut self, o: Self) {
        self.rays += o.rays;
        self.primitive_tests += o.primitive_tests;
        self.node_visits += o.node_visits;
    }
}

/// How nearest hits are found.
#[derive(Clone, Copy, Debug)]
pub enum Accel<'a, R> {
    Linear,
    Bvh(&'a Bvh<R>),
}

/// Nearest hit as `(primitive index, t)`; equal distances resolve to the
/// lower index.
pub fn nearest_hit<R: Real>(
    prims: &[Primitive<R>],
    accel: &Accel<'_, R>,
    ray: &Ray<R>,
    stats: &mut TraceStats,
) -> Option<(usize, R)> {
    stats.rays += 1;
    match accel {
        Accel::Linear => linear_nearest(prims, ray, stats),
        Accel::Bvh(bvh) => bvh.intersect(prims, ray, stats),
    }
}

pub fn linear_nearest<R: Real>(prims: &[Primitive<R>], ray: &Ray<R>, stats: &mut TraceStats) -> Option<(usize, R)> {
    let mut best: Option<(usize, R)> = None;
    for (i, p) in prims.iter().enumerate() {
        stats.primitive_tests += 1;
        if let Some(t) = hit_distance(ray, p) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((i, t));
            }
        }
    }
    best
}

fn face_ray<S: Scalar>(n: Vec3<S>, dir: Vec3<S>) -> Vec3<S> {
    if n.dot(dir).value() > S::Real::of(0.0) {
        -n
    } else {
        n
    }
}

/// Recomputes the interaction with `prim` on the generic scalar.
pub fn surface<S: Scalar>(ray: &Ray<S>, index: usize, prim: &Primitive<S>, smooth_normals: bool) -> Option<Hit<S>> {
    match prim {
        Primitive::Triangle(tri) => {
            let h = intersect_triangle(ray, tri)?;
            let [v1, v2, v3] = tri.vertices;
            let geometric = (v2 - v1).cross(v3 - v1);
            let n = match tri.attributes.normals {
                Some(ns) if smooth_normals => {
                    let [a, b, c] = ns.map(|n| Vec3::from_array(n.map(S::lit)));
                    a * h.weights[0] + b * h.weights[1] + c * h.weights[2]
                }
                _ => geometric,
            };
            let point = ray.at(h.t);
            Some(Hit {
                t: h.t,
                primitive: index,
                barycentric: Some(h.weights),
                point,
                normal: face_ray(n.normalize(), ray.direction),
            })
        }
        Primitive::Sphere(s) => {
            let t = intersect_sphere(ray, s)?;
            let point = ray.at(t);
            Some(Hit {
                t,
                primitive: index,
                barycentric: None,
                point,
                normal: face_ray((point - s.center) / s.radius, ray.direction),
            })
        }
    }
}

/// Diffuse albedo at a hit: the plain color, or the nearest texel at the
/// barycentric blend of the vertex UVs.
pub fn sample_material_color<S: Scalar>(
    material: &Material<S>,
    barycentric: Option<[S; 3]>,
    uv: Option<&[[f64; 2]; 3]>,
) -> Vec3<S> {
    match (&material.texture, barycentric, uv) {
        (Some(tex), Some(w), Some(uv)) => {
            let w = w.map(|x| x.value().as_f64());
            let u = w[0] * uv[0][0] + w[1] * uv[1][0] + w[2] * uv[2][0];
            let v = w[0] * uv[0][1] + w[1] * uv[1][1] + w[2] * uv[2][1];
            Vec3::from_array(tex.sample(u, v).map(S::lit))
        }
        _ => material.color_diffuse,
    }
}

/// Unit direction toward the light and the irradiance arriving at `point`.
///
/// Point lights fall off as `intensity / (4π d²)`; distant lights deliver
/// `color · intensity` everywhere.
pub fn light_at<S: Scalar>(point: Vec3<S>, light: &Light<S>) -> (Vec3<S>, Vec3<S>) {
    match light {
        Light::Point(p) => {
            let to_light = p.position - point;
            let d2 = to_light.dot(to_light);
            let irradiance = p.color * (p.intensity / (S::lit(FOUR_PI) * d2));
            (to_light.normalize(), irradiance)
        }
        Light::Distant(d) => (d.direction.normalize(), d.color * d.intensity),
    }
}

/// Shared state for tracing one frame.
pub struct TraceContext<'a, S: Scalar> {
    pub world: &'a World<S>,
    /// Plain-valued copy of `world.scene.primitives` used for hit-finding.
    pub values: &'a [Primitive<S::Real>],
    pub accel: Accel<'a, S::Real>,
}

/// Per-ray log: hit-finding counters and a hash of the discrete choices
/// (primitive ids and lighting branches) along the path.
#[derive(Clone, Copy, Debug, Default)]
pub struct TraceLog {
    pub stats: TraceStats,
    pub signature: u64,
}

impl TraceLog {
    fn note(&mut self, v: u64) {
        self.signature = (self.signature ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15)).wrapping_mul(0x0000_0100_0000_01b3);
    }
}

impl<'a, S: Scalar> TraceContext<'a, S> {
    pub fn background(&self) -> Vec3<S> {
        Vec3::from_array(self.world.options.background.map(S::lit))
    }

    /// Color carried back along `ray`; `depth` is the remaining reflection
    /// budget.
    pub fn trace(&self, ray: &Ray<S>, depth: u32, log: &mut TraceLog) -> Vec3<S> {
        let Some((index, _)) = nearest_hit(self.values, &self.accel, &ray.value(), &mut log.stats) else {
            log.note(u64::MAX);
            return self.background();
        };
        log.note(index as u64);
        match surface(ray, index, &self.world.scene.primitives[index], self.world.options.smooth_normals) {
            Some(hit) => self.shade(ray, &hit, depth, log),
            None => self.background(),
        }
    }

    /// Local shading at `hit` plus the reflected contribution.
    pub fn shade(&self, ray: &Ray<S>, hit: &Hit<S>, depth: u32, log: &mut TraceLog) -> Vec3<S> {
        let world = self.world;
        let prim = &world.scene.primitives[hit.primitive];
        let material = &world.scene.materials[prim.material()];
        let uv = match prim {
            Primitive::Triangle(t) => t.attributes.uv.as_ref(),
            Primitive::Sphere(_) => None,
        };
        let albedo = sample_material_color(material, hit.barycentric, uv);
        let n = hit.normal;
        let view = (ray.origin - hit.point).normalize();
        let zero = S::Real::of(0.0);

        let mut color = Vec3::zero();
        for light in &world.lights {
            color = color + material.color_ambient.hadamard(light.color());
            let (l, irradiance) = light_at(hit.point, light);
            let n_dot_l = n.dot(l);
            let lit = n_dot_l.value() > zero;
            log.note(lit as u64);
            if !lit {
                continue;
            }
            color = color + albedo.hadamard(irradiance) * n_dot_l;
            let half = (l + view).normalize();
            let n_dot_h = n.dot(half).max(S::zero());
            color = color + material.color_specular.hadamard(irradiance) * n_dot_h.powf(material.specular_exponent);
        }

        if depth > 0 && material.reflection.value() > zero {
            let d = ray.direction;
            let reflected = (d - n * (S::lit(2.0) * d.dot(n))).normalize();
            let origin = hit.point + n * S::lit(T_MIN);
            let bounce = self.trace(&Ray::new(origin, reflected), depth - 1, log);
            color = color + bounce * material.reflection;
        }
        color
    }

    /// Traces the primary rays of rows `rows` (row-major).
    pub fn trace_rows(&self, basis: &CameraBasis<S>, rows: Range<usize>, depth: u32, log: &mut TraceLog) -> Vec<Vec3<S>> {
        let mut out = Vec::with_capacity(rows.len() * basis.width);
        for row in rows {
            for col in 0..basis.width {
                let ray = Ray::new(basis.origin, basis.direction(col, row));
                out.push(self.trace(&ray, depth, log));
            }
        }
        out
    }
}

/// Traces arbitrary rays; `origins[i]` doubles as the eye for ray `i`.
pub fn raytrace<S: Scalar>(
    origins: &[Vec3<S>],
    directions: &[Vec3<S>],
    world: &World<S>,
    accel: Accel<'_, S::Real>,
    depth: u32,
) -> Vec<Vec3<S>> {
    let values: Vec<Primitive<S::Real>> = world.scene.primitives.iter().map(|p| p.map(Scalar::value)).collect();
    let ctx = TraceContext {
        world,
        values: &values,
        accel,
    };
    let mut log = TraceLog::default();
    origins
        .iter()
        .zip(directions)
        .map(|(&o, &d)| ctx.trace(&Ray::new(o, d), depth, &mut log))
        .collect()
}

/// Full-frame render on plain floats, parallel over rows on the current
/// rayon pool. Per-pixel results do not depend on the thread count.
pub fn render<R: Real>(world: &World<R>, accel: Accel<'_, R>, depth: u32) -> Result<Image<R>> {
    render_with_stats(world, accel, depth).map(|(img, _)| img)
}

pub fn render_with_stats<R: Real>(world: &World<R>, accel: Accel<'_, R>, depth: u32) -> Result<(Image<R>, TraceStats)> {
    let (pixels, logs) = render_rows_parallel(world, accel, depth)?;
    let mut stats = TraceStats::default();
    for l in &logs {
        stats += l.stats;
    }
    let cam = &world.camera;
    Ok((Image::new(cam.width, cam.height, pixels)?, stats))
}

/// Per-pixel path signatures; two renders with equal signatures made the
/// same discrete choices at every pixel.
pub fn trace_signatures<R: Real>(world: &World<R>, accel: Accel<'_, R>, depth: u32) -> Result<Vec<u64>> {
    world.camera.validate()?;
    let basis = world.camera.basis()?;
    let ctx = TraceContext {
        world,
        values: &world.scene.primitives,
        accel,
    };
    let mut sigs = Vec::with_capacity(world.camera.pixel_count());
    for row in 0..basis.height {
        for col in 0..basis.width {
            let mut log = TraceLog::default();
            ctx.trace(&Ray::new(basis.origin, basis.direction(col, row)), depth, &mut log);
            sigs.push(log.signature);
        }
    }
    Ok(sigs)
}

fn render_rows_parallel<R: Real>(
    world: &World<R>,
    accel: Accel<'_, R>,
    depth: u32,
) -> Result<(Vec<Vec3<R>>, Vec<TraceLog>)> {
    world.camera.validate()?;
    let basis = world.camera.basis()?;
    let ctx = TraceContext {
        world,
        values: &world.scene.primitives,
        accel,
    };
    let rows: Vec<(Vec<Vec3<R>>, TraceLog)> = (0..basis.height)
        .into_par_iter()
        .map(|row| {
            let mut log = TraceLog::default();
            let px = ctx.trace_rows(&basis, row..row + 1, depth, &mut log);
            (px, log)
        })
        .collect();
    let mut pixels = Vec::with_capacity(world.camera.pixel_count());
    let mut logs = Vec::with_capacity(rows.len());
    for (px, log) in rows {
        pixels.extend(px);
        logs.push(log);
    }
    Ok((pixels, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Camera, Material, Scene};

    fn ray(o: [f64; 3], d: [f64; 3]) -> Ray<f64> {
        Ray::new(Vec3::from_array(o), Vec3::from_array(d))
    }

    fn unit_tri() -> Triangle<f64> {
        Triangle::new(Vec3::lit(0., 0., 0.), Vec3::lit(1., 0., 0.), Vec3::lit(0., 1., 0.), 0).unwrap()
    }

    #[test]
    fn sphere_examples() {
        let s = Sphere::new(Vec3::zero(), 1.0, 0).unwrap();
        assert_eq!(intersect_sphere(&ray([0., 0., -5.], [0., 0., 1.]), &s), Some(4.0));
        assert_eq!(intersect_sphere(&ray([0., 0., -5.], [0., 1., 0.]), &s), None);
        assert_eq!(intersect_sphere(&ray([1., 0., -5.], [0., 0., 1.]), &s), Some(5.0));
        // From inside, the far root is the hit.
        assert_eq!(intersect_sphere(&ray([0., 0., 0.], [0., 0., 1.]), &s), Some(1.0));
    }

    #[test]
    fn triangle_examples() {
        let tri = unit_tri();
        let h = intersect_triangle(&ray([0.25, 0.25, -1.], [0., 0., 1.]), &tri).unwrap();
        assert_eq!(h.t, 1.0);
        assert_eq!(h.weights, [0.5, 0.25, 0.25]);
        assert!(intersect_triangle(&ray([2., 2., -1.], [0., 0., 1.]), &tri).is_none());
        assert!(intersect_triangle(&ray([0.2, 0.2, -1.], [1., 0., 0.]), &tri).is_none());
        // Behind the origin.
        assert!(intersect_triangle(&ray([0.25, 0.25, 1.], [0., 0., 1.]), &tri).is_none());
    }

    #[test]
    fn point_light_inverse_square() {
        let light = Light::point(Vec3::new(0.2, 0.4, 1.0), FOUR_PI, Vec3::zero());
        let (dir, irr) = light_at(Vec3::new(0.0, 0.0, -1.0), &light);
        assert!((irr - Vec3::new(0.2, 0.4, 1.0)).length() < 1e-12);
        assert!((dir - Vec3::new(0.0, 0.0, 1.0)).length() < 1e-12);
        let (_, far) = light_at(Vec3::new(0.0, 2.0, 0.0), &light);
        assert!((far.z - 0.25).abs() < 1e-12);
    }

    #[test]
    fn distant_light_is_uniform() {
        let light = Light::distant(Vec3::splat(1.0), 100.0, Vec3::new(0.0, 1.0, 0.0));
        let a = light_at(Vec3::new(3.0, -2.0, 7.0), &light);
        let b = light_at(Vec3::new(-50.0, 9.0, 0.5), &light);
        assert_eq!(a, b);
        assert_eq!(a.1, Vec3::splat(100.0));
    }

    fn one_triangle_world(material: Material<f64>, light: Light<f64>) -> World<f64> {
        let mut scene = Scene::new();
        let m = scene.add_material("m", material);
        scene.push(Primitive::Triangle(
            Triangle::new(Vec3::lit(-1., -1., 0.), Vec3::lit(1., -1., 0.), Vec3::lit(0., 1., 0.), m).unwrap(),
        ));
        let cam = Camera::new(Vec3::lit(0., 0., -5.), Vec3::zero(), Vec3::lit(0., 1., 0.), 30.0, 1.0, 1, 1).unwrap();
        World::new(cam, vec![light], scene)
    }

    fn shade_center(world: &World<f64>) -> Vec3<f64> {
        let ctx = TraceContext {
            world,
            values: &world.scene.primitives,
            accel: Accel::Linear,
        };
        ctx.trace(&ray([0., 0., -5.], [0., 0., 1.]), 0, &mut TraceLog::default())
    }

    #[test]
    fn back_lit_surface_is_black() {
        let light = Light::distant(Vec3::splat(1.0), 1.0, Vec3::new(0.0, 0.0, 1.0));
        let w = one_triangle_world(Material::default(), light);
        assert_eq!(shade_center(&w), Vec3::zero());
    }

    #[test]
    fn white_diffuse_under_unit_irradiance() {
        let material = Material {
            color_specular: Vec3::zero(),
            ..Material::default()
        };
        let light = Light::distant(Vec3::splat(1.0), 1.0, Vec3::new(0.0, 0.0, -1.0));
        let w = one_triangle_world(material, light);
        let c = shade_center(&w);
        assert!((c - Vec3::splat(1.0)).length() < 1e-12, "{c:?}");
    }

    #[test]
    fn green_surface_under_red_light_has_no_diffuse() {
        let material = Material {
            color_diffuse: Vec3::new(0.0, 1.0, 0.0),
            color_specular: Vec3::zero(),
            ..Material::default()
        };
        let light = Light::point(Vec3::new(1.0, 0.0, 0.0), 100000.0, Vec3::new(0.0, 0.0, -10.0));
        let w = one_triangle_world(material.clone(), light.clone());
        assert_eq!(shade_center(&w), Vec3::zero());
        // With the default white specular only the red channel lights up.
        let w = one_triangle_world(Material { color_specular: Vec3::splat(1.0), ..material }, light);
        let c = shade_center(&w);
        assert!(c.x > 0.0 && c.y == 0.0 && c.z == 0.0);
    }

    #[test]
    fn nearest_of_two_and_tie_break() {
        let mut scene = Scene::new();
        scene.add_material("m", Material::default());
        let near = Triangle::new(Vec3::lit(-1., -1., 1.), Vec3::lit(1., -1., 1.), Vec3::lit(0., 1., 1.), 0).unwrap();
        let far = Triangle::new(Vec3::lit(-1., -1., 2.), Vec3::lit(1., -1., 2.), Vec3::lit(0., 1., 2.), 0).unwrap();
        scene.push(Primitive::Triangle(far));
        scene.push(Primitive::Triangle(near.clone()));
        scene.push(Primitive::Triangle(near));
        let r = ray([0., 0., -1.], [0., 0., 1.]);
        let hit = linear_nearest(&scene.primitives, &r, &mut TraceStats::default()).unwrap();
        assert_eq!(hit, (1, 2.0));
    }
}
