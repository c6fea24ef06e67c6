//! Bundled meshes and seeded scene generators for tests and benchmarks.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::math::{Real, Vec3};
use crate::render::Ray;
use crate::scene::obj::parse_obj;
use crate::scene::{Camera, Light, Material, Primitive, Scene, Sphere, Triangle, World};

/// Seeded generator used everywhere a scene or ray set is randomized.
pub fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Low-poly tree: a hexagonal trunk under three stacked seven-sided cones.
pub fn tree_obj() -> String {
    let mut out = String::from("# low-poly tree: hexagonal trunk, three cones\n");
    let mut verts = 0usize;
    let bottom = ring(&mut out, &mut verts, 6, 0.2, 0.0, 0.0);
    let top = ring(&mut out, &mut verts, 6, 0.2, 1.0, 0.0);
    let mut faces = String::new();
    for k in 0..6 {
        let (a, b) = (k, (k + 1) % 6);
        let _ = writeln!(faces, "f {} {} {} {}", bottom + a, top + a, top + b, bottom + b);
    }
    let cap: Vec<String> = (0..6).map(|k| (bottom + k).to_string()).collect();
    let _ = writeln!(faces, "f {}", cap.join(" "));

    for (i, (base_y, radius, apex_y)) in [(0.8, 1.3, 2.4), (1.7, 1.0, 3.2), (2.5, 0.7, 3.9)].into_iter().enumerate() {
        let base = ring(&mut out, &mut verts, 7, radius, base_y, 0.3 * i as f64);
        let _ = writeln!(out, "v 0 {apex_y:.6} 0");
        verts += 1;
        let apex = verts;
        for k in 0..7 {
            let _ = writeln!(faces, "f {} {} {}", base + k, apex, base + (k + 1) % 7);
        }
        let cap: Vec<String> = (0..7).rev().map(|k| (base + k).to_string()).collect();
        let _ = writeln!(faces, "f {}", cap.join(" "));
    }
    out.push_str(&faces);
    out
}

/// Appends a horizontal ring of `n` vertices; returns the 1-based index of
/// the first.
fn ring(out: &mut String, verts: &mut usize, n: usize, r: f64, y: f64, phase: f64) -> usize {
    for k in 0..n {
        let a = phase + TAU * k as f64 / n as f64;
        let _ = writeln!(out, "v {:.6} {:.6} {:.6}", r * a.cos(), y, r * a.sin());
    }
    *verts += n;
    *verts - n + 1
}

pub fn tree_mesh<R: Real>(material: usize) -> Vec<Triangle<R>> {
    parse_obj(&tree_obj(), "builtin:tree", material)
        .expect("bundled tree parses")
        .triangles
}

/// UV sphere of radius 1 at the origin (17 segments, 5 bands) plus a small
/// plate beneath it: 137 triangles.
pub fn bench_mesh<R: Real>(material: usize) -> Vec<Triangle<R>> {
    const SEGMENTS: usize = 17;
    const BANDS: usize = 5;
    let p = |band: usize, seg: usize| -> Vec3<R> {
        let theta = PI * band as f64 / BANDS as f64;
        let phi = TAU * (seg % SEGMENTS) as f64 / SEGMENTS as f64;
        Vec3::lit(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin())
    };
    let mut tris = Vec::with_capacity(137);
    let mut push = |a, b, c| tris.push(Triangle::new(a, b, c, material).expect("bench mesh is non-degenerate"));
    for seg in 0..SEGMENTS {
        push(p(0, 0), p(1, seg + 1), p(1, seg));
        for band in 1..BANDS - 1 {
            push(p(band, seg), p(band, seg + 1), p(band + 1, seg + 1));
            push(p(band, seg), p(band + 1, seg + 1), p(band + 1, seg));
        }
        push(p(BANDS - 1, seg), p(BANDS - 1, seg + 1), p(BANDS, 0));
    }
    push(Vec3::lit(-0.6, -1.2, -0.6), Vec3::lit(0.6, -1.2, -0.6), Vec3::lit(0.0, -1.2, 0.7));
    tris
}

/// World for the performance sweeps: the bench mesh under one light, camera
/// on the -z axis.
pub fn bench_world<R: Real>(width: usize, height: usize) -> World<R> {
    let mut scene = Scene::new();
    let m = scene.add_material(
        "bench",
        Material {
            color_diffuse: Vec3::lit(0.8, 0.6, 0.4),
            ..Material::default()
        },
    );
    for t in bench_mesh(m) {
        scene.push(Primitive::Triangle(t));
    }
    let cam = Camera::new(Vec3::lit(0.0, 0.5, -4.0), Vec3::zero(), Vec3::lit(0.0, 1.0, 0.0), R::of(45.0), R::of(1.0), width, height)
        .expect("valid bench camera");
    let light = Light::point(Vec3::splat(R::of(1.0)), R::of(4.0 * PI * 40.0), Vec3::lit(2.0, 3.0, -4.0));
    World::new(cam, vec![light], scene)
}

fn v3<R: Real>(rng: &mut SplitMix64, lo: f64, hi: f64) -> Vec3<R> {
    Vec3::lit(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi))
}

fn random_triangle<R: Real>(rng: &mut SplitMix64, center: Vec3<R>, size: f64, material: usize) -> Triangle<R> {
    loop {
        let v = [0, 1, 2].map(|_| center + v3(rng, -size, size));
        if let Ok(t) = Triangle::new(v[0], v[1], v[2], material) {
            if t.area() > 0.05 * size * size {
                return t;
            }
        }
    }
}

fn random_material<R: Real>(rng: &mut SplitMix64) -> Material<R> {
    Material {
        color_diffuse: v3(rng, 0.2, 1.0),
        color_specular: v3(rng, 0.1, 0.6),
        color_ambient: v3(rng, 0.0, 0.1),
        specular_exponent: R::of(rng.gen_range(2.0..8.0)),
        reflection: R::of(rng.gen_range(0.1..0.5)),
        texture: None,
    }
}

/// Small world for gradient checks: 1 to 5 triangles or a single sphere,
/// 8 to 16 pixels on a side, one point light delivering irradiance near 1.
pub fn gradcheck_world<R: Real>(seed: u64) -> World<R> {
    let mut rng = rng(seed);
    let width = rng.gen_range(8..=16);
    let height = rng.gen_range(8..=16);
    let mut scene = Scene::new();
    if rng.gen_bool(1.0 / 6.0) {
        let m = scene.add_material("m0", random_material(&mut rng));
        let center = v3(&mut rng, -0.3, 0.3);
        let s = Sphere::new(center, R::of(rng.gen_range(0.6..1.0)), m).expect("positive radius");
        scene.push(Primitive::Sphere(s));
    } else {
        let n = rng.gen_range(1..=5);
        for i in 0..n {
            let m = scene.add_material(format!("m{i}"), random_material(&mut rng));
            let center = v3(&mut rng, -0.6, 0.6);
            let t = random_triangle(&mut rng, center, 1.2, m);
            scene.push(Primitive::Triangle(t));
        }
    }
    let cam = Camera::new(Vec3::lit(0.0, 0.0, -4.0), Vec3::zero(), Vec3::lit(0.0, 1.0, 0.0), R::of(40.0), R::of(1.0), width, height)
        .expect("valid camera");
    let pos: Vec3<R> = Vec3::lit(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-6.0..-3.0));
    let d2 = pos.value().length_squared().as_f64();
    let light = Light::point(v3(&mut rng, 0.5, 1.0), R::of(4.0 * PI * d2), pos);
    World::new(cam, vec![light], scene)
}

/// World for the AD-versus-FD sweep: triangle 0 is a backdrop covering the
/// frame, the other `triangles - 1` are random. Every triangle has its own
/// material, so each adds 20 parameters (9 vertex + 11 material).
pub fn ad_bench_world<R: Real>(seed: u64, triangles: usize, width: usize, height: usize) -> World<R> {
    assert!(triangles >= 1);
    let mut rng = rng(seed);
    let mut scene = Scene::new();
    let m = scene.add_material("t00", random_material(&mut rng));
    let backdrop = Triangle::new(Vec3::lit(-8.0, -6.0, 3.0), Vec3::lit(8.0, -6.0, 3.0), Vec3::lit(0.0, 10.0, 3.0), m).expect("backdrop");
    scene.push(Primitive::Triangle(backdrop));
    for i in 1..triangles {
        let m = scene.add_material(format!("t{i:02}"), random_material(&mut rng));
        let center = Vec3::lit(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.0..1.5));
        let t = random_triangle(&mut rng, center, 0.8, m);
        scene.push(Primitive::Triangle(t));
    }
    let cam = Camera::new(Vec3::lit(0.0, 0.0, -5.0), Vec3::zero(), Vec3::lit(0.0, 1.0, 0.0), R::of(45.0), R::of(1.0), width, height)
        .expect("valid camera");
    let light = Light::point(Vec3::splat(R::of(1.0)), R::of(4.0 * PI * 40.0), Vec3::lit(1.0, 2.0, -5.0));
    World::new(cam, vec![light], scene)
}

/// Random triangles and spheres inside a cube of half-size 3; index 0 is
/// always a triangle.
pub fn random_primitives<R: Real>(seed: u64, count: usize) -> Vec<Primitive<R>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let center = v3(&mut rng, -3.0, 3.0);
            if i > 0 && rng.gen_bool(0.2) {
                Primitive::Sphere(Sphere::new(center, R::of(rng.gen_range(0.1..0.8)), 0).expect("positive radius"))
            } else {
                let size = rng.gen_range(0.2..1.5);
                Primitive::Triangle(random_triangle(&mut rng, center, size, 0))
            }
        })
        .collect()
}

/// Unit-direction rays from a shell of radius 8 toward points near the
/// origin.
pub fn random_rays<R: Real>(seed: u64, count: usize) -> Vec<Ray<R>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let dir: Vec3<R> = loop {
                let d = v3::<R>(&mut rng, -1.0, 1.0);
                let l = d.length().as_f64();
                if l > 0.1 && l <= 1.0 {
                    break d.normalize();
                }
            };
            let origin = dir * R::of(8.0);
            let aim = v3::<R>(&mut rng, -3.0, 3.0);
            Ray::new(origin, (aim - origin).normalize())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_is_about_fifty_triangles() {
        let tris = tree_mesh::<f32>(0);
        assert_eq!(tris.len(), 52);
        let top = tris.iter().flat_map(|t| t.vertices).map(|v| v.y).fold(0.0, f32::max);
        assert!((top - 3.9).abs() < 1e-6);
    }

    #[test]
    fn bench_mesh_has_137_triangles_around_the_origin() {
        let tris = bench_mesh::<f64>(0);
        assert_eq!(tris.len(), 137);
        let sphere = &tris[..136];
        let c = sphere.iter().flat_map(|t| t.vertices).fold(Vec3::zero(), |a, v| a + v) / (136.0 * 3.0);
        assert!(c.length() < 0.05, "{c:?}");
    }

    #[test]
    fn generators_are_seeded() {
        let a = gradcheck_world::<f32>(7);
        let b = gradcheck_world::<f32>(7);
        assert_eq!(a.scene.primitives.len(), b.scene.primitives.len());
        assert_eq!(a.camera.width, b.camera.width);
        let (pa, pb) = (random_primitives::<f64>(3, 20), random_primitives::<f64>(3, 20));
        assert_eq!(format!("{pa:?}"), format!("{pb:?}"));
        for r in random_rays::<f32>(1, 100) {
            assert!((r.direction.length() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn ad_bench_world_counts() {
        let w = ad_bench_world::<f32>(1, 20, 16, 16);
        assert_eq!(w.scene.primitives.len(), 20);
        assert_eq!(w.scene.materials.len(), 20);
        w.validate().unwrap();
    }
}
