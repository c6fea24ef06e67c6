//! Scene description: camera, lights, materials and primitives.
//!
//! All structures are generic over the scalar so the same scene can be
//! rendered with plain floats or lifted onto an AD tape (see
//! [`params::lift`]).

pub mod builtin;
pub mod camera;
pub mod file;
pub mod obj;
pub mod params;

use std::sync::Arc;

pub use camera::{get_primary_rays, Camera, CameraBasis, PrimaryRays};
pub use params::{pack_params, unpack_params, ParamTarget, ParamVector, Selection};

use crate::error::{Error, Result};
use crate::math::{Real, Scalar, Vec3};

/// Minimum triangle area accepted at construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// RGB image used as a diffuse texture; texel (0,0) is the top-left.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<[f64; 3]>,
}

impl Texture {
    pub fn new(width: usize, height: usize, texels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || texels.len() != width * height {
            return Err(Error::InvalidScene(format!(
                "texture {width}x{height} needs {} texels, got {}",
                width * height,
                texels.len()
            )));
        }
        Ok(Texture {
            width,
            height,
            texels,
        })
    }

    /// Nearest-texel lookup; `v = 0` is the bottom row, coordinates clamp to
    /// the border.
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let x = ((u * self.width as f64).floor().max(0.0) as usize).min(self.width - 1);
        let y = (((1.0 - v) * self.height as f64).floor().max(0.0) as usize).min(self.height - 1);
        let t = self.texels[y * self.width + x];
        t.map(|c| c.clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug)]
pub struct Material<S> {
    pub color_diffuse: Vec3<S>,
    pub color_specular: Vec3<S>,
    /// Constant term modulated by the light color; zero by default.
    pub color_ambient: Vec3<S>,
    pub specular_exponent: S,
    pub reflection: S,
    pub texture: Option<Arc<Texture>>,
}

impl<S: Scalar> Material<S> {
    pub fn diffuse(color: Vec3<S>) -> Self {
        Material {
            color_diffuse: color,
            ..Self::default()
        }
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> Material<T> {
        Material {
            color_diffuse: self.color_diffuse.map(&mut f),
            color_specular: self.color_specular.map(&mut f),
            color_ambient: self.color_ambient.map(&mut f),
            specular_exponent: f(self.specular_exponent),
            reflection: f(self.reflection),
            texture: self.texture.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let colors = [self.color_diffuse, self.color_specular, self.color_ambient];
        let finite = colors
            .iter()
            .flat_map(|c| c.to_array())
            .chain([self.specular_exponent, self.reflection])
            .all(|c| num_traits::Float::is_finite(c.value()));
        if !finite {
            return Err(Error::InvalidScene("material has non-finite values".into()));
        }
        let r = self.reflection.value();
        if r < S::Real::of(0.0) || r > S::Real::of(1.0) {
            return Err(Error::InvalidScene(format!("reflection {r} outside [0, 1]")));
        }
        Ok(())
    }
}

impl<S: Scalar> Default for Material<S> {
    fn default() -> Self {
        Material {
            color_diffuse: Vec3::splat(S::one()),
            color_specular: Vec3::splat(S::one()),
            color_ambient: Vec3::zero(),
            specular_exponent: S::lit(50.0),
            reflection: S::zero(),
            texture: None,
        }
    }
}

/// Texture coordinates and shading normals attached to triangle vertices.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VertexAttributes {
    pub uv: Option<[[f64; 2]; 3]>,
    pub normals: Option<[[f64; 3]; 3]>,
}

#[derive(Clone, Debug)]
pub struct Triangle<S> {
    pub vertices: [Vec3<S>; 3],
    pub material: usize,
    pub attributes: VertexAttributes,
}

impl<S: Scalar> Triangle<S> {
    /// Rejects near-collinear vertices.
    pub fn new(v1: Vec3<S>, v2: Vec3<S>, v3: Vec3<S>, material: usize) -> Result<Self> {
        let tri = Triangle {
            vertices: [v1, v2, v3],
            material,
            attributes: VertexAttributes::default(),
        };
        if tri.area() <= MIN_TRIANGLE_AREA {
            return Err(Error::InvalidScene(format!(
                "degenerate triangle {:?}",
                tri.vertices.map(|v| v.value())
            )));
        }
        Ok(tri)
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices.map(|v| v.value().map(|x| x.as_f64()));
        0.5 * (b - a).cross(c - a).length()
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> Triangle<T> {
        Triangle {
            vertices: self.vertices.map(|v| v.map(&mut f)),
            material: self.material,
            attributes: self.attributes,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sphere<S> {
    pub center: Vec3<S>,
    pub radius: S,
    pub material: usize,
}

impl<S: Scalar> Sphere<S> {
    pub fn new(center: Vec3<S>, radius: S, material: usize) -> Result<Self> {
        if !(radius.value() > S::Real::of(0.0)) {
            return Err(Error::InvalidScene(format!("sphere radius {:?} must be > 0", radius.value())));
        }
        Ok(Sphere {
            center,
            radius,
            material,
        })
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> Sphere<T> {
        Sphere {
            center: self.center.map(&mut f),
            radius: f(self.radius),
            material: self.material,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Primitive<S> {
    Triangle(Triangle<S>),
    Sphere(Sphere<S>),
}

impl<S: Scalar> Primitive<S> {
    pub fn material(&self) -> usize {
        match self {
            Primitive::Triangle(t) => t.material,
            Primitive::Sphere(s) => s.material,
        }
    }

    pub fn map<T: Scalar>(&self, f: impl FnMut(S) -> T) -> Primitive<T> {
        match self {
            Primitive::Triangle(t) => Primitive::Triangle(t.map(f)),
            Primitive::Sphere(s) => Primitive::Sphere(s.map(f)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointLight<S> {
    pub color: Vec3<S>,
    pub intensity: S,
    pub position: Vec3<S>,
}

#[derive(Clone, Debug)]
pub struct DistantLight<S> {
    pub color: Vec3<S>,
    pub intensity: S,
    /// Unit vector pointing from the surface toward the light.
    pub direction: Vec3<S>,
}

impl<S: Scalar> DistantLight<S> {
    /// Normalizes `direction`.
    pub fn new(color: Vec3<S>, intensity: S, direction: Vec3<S>) -> Self {
        DistantLight {
            color,
            intensity,
            direction: direction.normalize(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Light<S> {
    Point(PointLight<S>),
    Distant(DistantLight<S>),
}

impl<S: Scalar> Light<S> {
    pub fn point(color: Vec3<S>, intensity: S, position: Vec3<S>) -> Self {
        Light::Point(PointLight {
            color,
            intensity,
            position,
        })
    }

    pub fn distant(color: Vec3<S>, intensity: S, direction: Vec3<S>) -> Self {
        Light::Distant(DistantLight::new(color, intensity, direction))
    }

    pub fn color(&self) -> Vec3<S> {
        match self {
            Light::Point(l) => l.color,
            Light::Distant(l) => l.color,
        }
    }

    pub fn intensity(&self) -> S {
        match self {
            Light::Point(l) => l.intensity,
            Light::Distant(l) => l.intensity,
        }
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> Light<T> {
        match self {
            Light::Point(l) => Light::Point(PointLight {
                color: l.color.map(&mut f),
                intensity: f(l.intensity),
                position: l.position.map(&mut f),
            }),
            Light::Distant(l) => Light::Distant(DistantLight {
                color: l.color.map(&mut f),
                intensity: f(l.intensity),
                direction: l.direction.map(&mut f),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let i = self.intensity().value();
        if !num_traits::Float::is_finite(i) || i < S::Real::of(0.0) {
            return Err(Error::InvalidScene(format!("light intensity {i} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Primitives plus the materials they reference by index.
#[derive(Clone, Debug)]
pub struct Scene<S> {
    pub primitives: Vec<Primitive<S>>,
    pub materials: Vec<Material<S>>,
    pub material_names: Vec<String>,
}

impl<S: Scalar> Default for Scene<S> {
    fn default() -> Self {
        Scene {
            primitives: Vec::new(),
            materials: Vec::new(),
            material_names: Vec::new(),
        }
    }
}

impl<S: Scalar> Scene<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a material and returns its index.
    pub fn add_material(&mut self, name: impl Into<String>, material: Material<S>) -> usize {
        self.materials.push(material);
        self.material_names.push(name.into());
        self.materials.len() - 1
    }

    pub fn material_index(&self, name: &str) -> Option<usize> {
        self.material_names.iter().position(|n| n == name)
    }

    pub fn push(&mut self, primitive: Primitive<S>) {
        self.primitives.push(primitive);
    }

    pub fn triangles(&self) -> impl Iterator<Item = (usize, &Triangle<S>)> {
        self.primitives.iter().enumerate().filter_map(|(i, p)| match p {
            Primitive::Triangle(t) => Some((i, t)),
            _ => None,
        })
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> Scene<T> {
        Scene {
            primitives: self.primitives.iter().map(|p| p.map(&mut f)).collect(),
            materials: self.materials.iter().map(|m| m.map(&mut f)).collect(),
            material_names: self.material_names.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.materials {
            m.validate()?;
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if p.material() >= self.materials.len() {
                return Err(Error::InvalidScene(format!(
                    "primitive {i} references missing material {}",
                    p.material()
                )));
            }
        }
        Ok(())
    }
}

/// Renderer switches that are not optimizable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub background: [f64; 3],
    /// Interpolate per-vertex normals when a triangle carries them.
    pub smooth_normals: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            background: [0.0; 3],
            smooth_normals: false,
        }
    }
}

/// Everything a render call needs.
#[derive(Clone, Debug)]
pub struct World<S> {
    pub camera: Camera<S>,
    pub lights: Vec<Light<S>>,
    pub scene: Scene<S>,
    pub options: RenderOptions,
}

impl<S: Scalar> World<S> {
    pub fn new(camera: Camera<S>, lights: Vec<Light<S>>, scene: Scene<S>) -> Self {
        World {
            camera,
            lights,
            scene,
            options: RenderOptions::default(),
        }
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> World<T> {
        World {
            camera: self.camera.map(&mut f),
            lights: self.lights.iter().map(|l| l.map(&mut f)).collect(),
            scene: self.scene.map(&mut f),
            options: self.options.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        for l in &self.lights {
            l.validate()?;
        }
        self.scene.validate()
    }
}

impl<R: Real> World<R> {
    /// Converts between float widths.
    pub fn cast<T: Real>(&self) -> World<T> {
        self.map(|x| T::of(x.as_f64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_triangle_rejected() {
        let v = |x: f32, y: f32| Vec3::new(x, y, 0.0);
        assert!(Triangle::new(v(0., 0.), v(1., 0.), v(2., 0.), 0).is_err());
        assert!(Triangle::new(v(0., 0.), v(1., 0.), v(0., 1.), 0).is_ok());
    }

    #[test]
    fn distant_light_direction_is_normalized() {
        let l = Light::distant(Vec3::splat(1.0f32), 100.0, Vec3::new(0.0, 3.0, 4.0));
        match l {
            Light::Distant(d) => assert!((d.direction.length() - 1.0).abs() < 1e-6),
            _ => unreachable!(),
        }
    }

    #[test]
    fn material_validation() {
        let mut m = Material::<f32>::default();
        assert!(m.validate().is_ok());
        m.reflection = 1.5;
        assert!(m.validate().is_err());
        m.reflection = 0.5;
        m.color_diffuse.x = f32::NAN;
        assert!(m.validate().is_err());
    }

    #[test]
    fn texture_nearest_lookup() {
        let t = Texture::new(2, 1, vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(t.sample(0.0, 0.0), [1.0, 0.0, 0.0]);
        assert_eq!(t.sample(0.99, 0.5), [0.0, 0.0, 1.0]);
        assert_eq!(t.sample(1.5, -3.0), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn negative_intensity_rejected() {
        let l = Light::point(Vec3::splat(1.0f64), -1.0, Vec3::zero());
        assert!(l.validate().is_err());
    }
}
