//! JSON scene documents.
//!
//! ```json
//! {
//!   "camera": {"lookfrom": [0, 0, -30], "lookat": [0, 0, 0], "vup": [0, 1, 0],
//!              "vfov": 45, "focus": 1, "width": 100, "height": 75},
//!   "lights": [{"type": "point", "color": [1, 0, 0], "intensity": 100000,
//!               "position": [0, 0, -10]}],
//!   "materials": {"green": {"color_diffuse": [0, 1, 0]}},
//!   "meshes": [{"path": "tree.obj", "material": "green"}, {"builtin": "tree"}],
//!   "primitives": [{"type": "sphere", "center": [0, 0, 0], "radius": 1,
//!                   "material": "green"}],
//!   "options": {"background": [0, 0, 0], "smooth_normals": false}
//! }
//! ```
//!
//! Materials are indexed in name order. Meshes and primitives without a
//! material use `default` (white diffuse), created on demand. Mesh and
//! texture paths are relative to the scene file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{Real, Vec3};
use crate::scene::builtin::{bench_mesh, tree_mesh};
use crate::scene::obj::{load_obj, ObjReport};
use crate::scene::{
    Camera, Light, Material, Primitive, RenderOptions, Scene, Sphere, Texture, Triangle, World,
};

pub const DEFAULT_MATERIAL: &str = "default";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub camera: CameraSpec,
    #[serde(default)]
    pub lights: Vec<LightSpec>,
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialSpec>,
    #[serde(default)]
    pub meshes: Vec<MeshSpec>,
    #[serde(default)]
    pub primitives: Vec<PrimitiveSpec>,
    #[serde(default)]
    pub options: OptionsSpec,
}

fn up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}
fn default_vfov() -> f64 {
    45.0
}
fn one() -> f64 {
    1.0
}
fn white() -> [f64; 3] {
    [1.0; 3]
}
fn exponent() -> f64 {
    50.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub lookfrom: [f64; 3],
    pub lookat: [f64; 3],
    #[serde(default = "up")]
    pub vup: [f64; 3],
    #[serde(default = "default_vfov")]
    pub vfov: f64,
    #[serde(default = "one")]
    pub focus: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LightSpec {
    Point {
        #[serde(default = "white")]
        color: [f64; 3],
        intensity: f64,
        position: [f64; 3],
    },
    Distant {
        #[serde(default = "white")]
        color: [f64; 3],
        intensity: f64,
        /// From the surface toward the light.
        direction: [f64; 3],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(default = "white")]
    pub color_diffuse: [f64; 3],
    #[serde(default = "white")]
    pub color_specular: [f64; 3],
    #[serde(default)]
    pub color_ambient: [f64; 3],
    #[serde(default = "exponent")]
    pub specular_exponent: f64,
    #[serde(default)]
    pub reflection: f64,
    /// Binary PPM, used with per-vertex UVs from OBJ meshes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<String>,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec {
            color_diffuse: white(),
            color_specular: white(),
            color_ambient: [0.0; 3],
            specular_exponent: exponent(),
            reflection: 0.0,
            texture: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// `tree` or `bench`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Triangle {
        v1: [f64; 3],
        v2: [f64; 3],
        v3: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        material: Option<String>,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        material: Option<String>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSpec {
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default)]
    pub smooth_normals: bool,
}

/// A loaded world plus what the mesh loader skipped.
#[derive(Clone, Debug)]
pub struct LoadedScene<R> {
    pub world: World<R>,
    pub obj_reports: Vec<(String, ObjReport)>,
}

fn vec3<R: Real>(a: [f64; 3]) -> Vec3<R> {
    Vec3::from_array(a.map(R::of))
}

pub fn load_scene<R: Real>(path: impl AsRef<Path>) -> Result<LoadedScene<R>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    file.build(&base)
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: PathBuf::from("<inline>"),
            source,
        })
    }

    /// Resolves meshes and textures relative to `base`.
    pub fn build<R: Real>(&self, base: &Path) -> Result<LoadedScene<R>> {
        let c = &self.camera;
        let camera = Camera::new(
            vec3(c.lookfrom),
            vec3(c.lookat),
            vec3(c.vup),
            R::of(c.vfov),
            R::of(c.focus),
            c.width,
            c.height,
        )?;
        let lights = self
            .lights
            .iter()
            .map(|l| {
                let light = match *l {
                    LightSpec::Point {
                        color,
                        intensity,
                        position,
                    } => Light::point(vec3(color), R::of(intensity), vec3(position)),
                    LightSpec::Distant {
                        color,
                        intensity,
                        direction,
                    } => {
                        if direction.iter().all(|&d| d == 0.0) {
                            return Err(Error::InvalidScene("distant light direction is zero".into()));
                        }
                        Light::distant(vec3(color), R::of(intensity), vec3(direction))
                    }
                };
                light.validate()?;
                Ok(light)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut scene = Scene::new();
        for (name, m) in &self.materials {
            let texture = match &m.texture {
                Some(p) => {
                    let img = Image::<f64>::read_ppm(base.join(p))?;
                    let texels = img.pixels.iter().map(|p| p.to_array()).collect();
                    Some(Arc::new(Texture::new(img.width, img.height, texels)?))
                }
                None => None,
            };
            scene.add_material(
                name.clone(),
                Material {
                    color_diffuse: vec3(m.color_diffuse),
                    color_specular: vec3(m.color_specular),
                    color_ambient: vec3(m.color_ambient),
                    specular_exponent: R::of(m.specular_exponent),
                    reflection: R::of(m.reflection),
                    texture,
                },
            );
        }
        let material = |scene: &mut Scene<R>, name: &Option<String>| -> Result<usize> {
            let name = name.as_deref().unwrap_or(DEFAULT_MATERIAL);
            match scene.material_index(name) {
                Some(i) => Ok(i),
                None if name == DEFAULT_MATERIAL => Ok(scene.add_material(DEFAULT_MATERIAL, Material::default())),
                None => Err(Error::InvalidScene(format!("unknown material `{name}`"))),
            }
        };

        let mut obj_reports = Vec::new();
        for mesh in &self.meshes {
            let m = material(&mut scene, &mesh.material)?;
            let triangles = match (&mesh.path, &mesh.builtin) {
                (Some(p), None) => {
                    let full = base.join(p);
                    let loaded = load_obj::<R>(&full, m)?;
                    obj_reports.push((full.display().to_string(), loaded.report));
                    loaded.triangles
                }
                (None, Some(b)) => match b.as_str() {
                    "tree" => tree_mesh(m),
                    "bench" => bench_mesh(m),
                    other => return Err(Error::InvalidScene(format!("unknown builtin mesh `{other}`"))),
                },
                _ => return Err(Error::InvalidScene("mesh needs exactly one of `path` or `builtin`".into())),
            };
            for t in triangles {
                scene.push(Primitive::Triangle(t));
            }
        }
        for p in &self.primitives {
            let prim = match p {
                PrimitiveSpec::Triangle { v1, v2, v3, material: name } => {
                    let m = material(&mut scene, name)?;
                    Primitive::Triangle(Triangle::new(vec3(*v1), vec3(*v2), vec3(*v3), m)?)
                }
                PrimitiveSpec::Sphere {
                    center,
                    radius,
                    material: name,
                } => {
                    let m = material(&mut scene, name)?;
                    Primitive::Sphere(Sphere::new(vec3(*center), R::of(*radius), m)?)
                }
            };
            scene.push(prim);
        }

        let world = World {
            camera,
            lights,
            scene,
            options: RenderOptions {
                background: self.options.background,
                smooth_normals: self.options.smooth_normals,
            },
        };
        world.validate()?;
        Ok(LoadedScene { world, obj_reports })
    }

    /// Inline description of `world`: meshes are flattened into triangle
    /// primitives and textures are dropped.
    pub fn from_world<R: Real>(world: &World<R>) -> Self {
        let arr = |v: Vec3<R>| v.to_array().map(|c| c.as_f64());
        let f = |x: R| x.as_f64();
        let c = &world.camera;
        let names = &world.scene.material_names;
        SceneFile {
            camera: CameraSpec {
                lookfrom: arr(c.lookfrom),
                lookat: arr(c.lookat),
                vup: arr(c.vup),
                vfov: f(c.vfov),
                focus: f(c.focus),
                width: c.width,
                height: c.height,
            },
            lights: world
                .lights
                .iter()
                .map(|l| match l {
                    Light::Point(p) => LightSpec::Point {
                        color: arr(p.color),
                        intensity: f(p.intensity),
                        position: arr(p.position),
                    },
                    Light::Distant(d) => LightSpec::Distant {
                        color: arr(d.color),
                        intensity: f(d.intensity),
                        direction: arr(d.direction),
                    },
                })
                .collect(),
            materials: names
                .iter()
                .zip(&world.scene.materials)
                .map(|(n, m)| {
                    (
                        n.clone(),
                        MaterialSpec {
                            color_diffuse: arr(m.color_diffuse),
                            color_specular: arr(m.color_specular),
                            color_ambient: arr(m.color_ambient),
                            specular_exponent: f(m.specular_exponent),
                            reflection: f(m.reflection),
                            texture: None,
                        },
                    )
                })
                .collect(),
            meshes: Vec::new(),
            primitives: world
                .scene
                .primitives
                .iter()
                .map(|p| match p {
                    Primitive::Triangle(t) => PrimitiveSpec::Triangle {
                        v1: arr(t.vertices[0]),
                        v2: arr(t.vertices[1]),
                        v3: arr(t.vertices[2]),
                        material: Some(names[t.material].clone()),
                    },
                    Primitive::Sphere(s) => PrimitiveSpec::Sphere {
                        center: arr(s.center),
                        radius: f(s.radius),
                        material: Some(names[s.material].clone()),
                    },
                })
                .collect(),
            options: OptionsSpec {
                background: world.options.background,
                smooth_normals: world.options.smooth_normals,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECT: &str = r#"{
        "camera": {"lookfrom": [0, 0, -30], "lookat": [0, 0, 0], "vfov": 45, "focus": 1, "width": 4, "height": 3},
        "lights": [{"type": "point", "color": [1, 0, 0], "intensity": 100000, "position": [0, 0, -10]}],
        "materials": {"green": {"color_diffuse": [0, 1, 0]}},
        "primitives": [
            {"type": "triangle", "v1": [20, 10, 0], "v2": [20, -10, 0], "v3": [-20, -10, 0], "material": "green"},
            {"type": "triangle", "v1": [20, 10, 0], "v2": [-20, -10, 0], "v3": [-20, 10, 0], "material": "green"}
        ]
    }"#;

    #[test]
    fn parses_inline_scene() {
        let w = SceneFile::parse(RECT).unwrap().build::<f32>(Path::new(".")).unwrap().world;
        assert_eq!(w.scene.primitives.len(), 2);
        assert_eq!(w.scene.materials.len(), 1);
        assert_eq!(w.camera.vup, Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(w.lights[0].intensity(), 100000.0);
    }

    #[test]
    fn default_material_is_created_on_demand() {
        let text = RECT.replace(r#", "material": "green""#, "");
        let w = SceneFile::parse(&text).unwrap().build::<f64>(Path::new(".")).unwrap().world;
        assert_eq!(w.scene.material_names, vec!["green".to_string(), DEFAULT_MATERIAL.to_string()]);
        assert!(w.scene.primitives.iter().all(|p| p.material() == 1));
    }

    #[test]
    fn rejects_unknown_material_and_fields() {
        let text = RECT.replace(r#""material": "green"}"#, r#""material": "blue"}"#);
        assert!(SceneFile::parse(&text).unwrap().build::<f32>(Path::new(".")).is_err());
        assert!(SceneFile::parse(&RECT.replace("\"vfov\"", "\"fov\"")).is_err());
    }

    #[test]
    fn builtin_meshes_resolve() {
        let text = RECT.replace(r#""primitives""#, r#""meshes": [{"builtin": "tree", "material": "green"}], "primitives""#);
        let w = SceneFile::parse(&text).unwrap().build::<f32>(Path::new(".")).unwrap().world;
        assert_eq!(w.scene.primitives.len(), 54);
    }

    #[test]
    fn world_roundtrip() {
        let w = SceneFile::parse(RECT).unwrap().build::<f64>(Path::new(".")).unwrap().world;
        let again = SceneFile::from_world(&w);
        assert_eq!(again, SceneFile::parse(&again.to_json()).unwrap());
        let w2 = again.build::<f64>(Path::new(".")).unwrap().world;
        assert_eq!(format!("{:?}", w.scene.primitives), format!("{:?}", w2.scene.primitives));
    }
}
