//! Flat parameter view over a [`World`].
//!
//! Parameters are addressed by dotted paths:
//!
//! | path                                  | scalars |
//! |---------------------------------------|---------|
//! | `camera`                              | 11      |
//! | `camera.lookfrom`, `.lookat`, `.vup`  | 3       |
//! | `camera.vfov`, `camera.focus`         | 1       |
//! | `light[i]` (`lights` for all)         | 7       |
//! | `light[i].color`, `.position`, `.direction` | 3 |
//! | `light[i].intensity`                  | 1       |
//! | `material[name or i]` (`materials`)   | 11      |
//! | `material[..].color_diffuse`, `.color_specular`, `.color_ambient` | 3 |
//! | `material[..].specular_exponent`, `.reflection` | 1 |
//! | `triangle[k]` (`triangles`)           | 9       |
//! | `triangle[k].v1` .. `.v3`             | 3       |
//! | `sphere[k]` (`spheres`)               | 4       |
//! | `sphere[k].center`, `.radius`         | 3 / 1   |
//!
//! Vector fields accept a trailing component (`x`/`y`/`z`, `r`/`g`/`b` or
//! `0`..`2`). `triangle[k]` and `sphere[k]` count primitives of that kind in
//! scene order; `primitive[k]` names the k-th primitive of either kind, as
//! printed by `Display`. Several paths may be joined with commas.

use std::fmt;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::math::{Real, Scalar, Vec3};
use crate::scene::{Light, Primitive, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CameraField {
    Lookfrom(u8),
    Lookat(u8),
    Vup(u8),
    Vfov,
    Focus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LightField {
    Color(u8),
    Intensity,
    /// Point lights only.
    Position(u8),
    /// Distant lights only.
    Direction(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaterialField {
    Diffuse(u8),
    Specular(u8),
    Ambient(u8),
    Exponent,
    Reflection,
}

/// One scalar slot in a [`World`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamTarget {
    Camera(CameraField),
    Light { light: usize, field: LightField },
    Material { material: usize, field: MaterialField },
    Vertex { primitive: usize, corner: u8, axis: u8 },
    SphereCenter { primitive: usize, axis: u8 },
    SphereRadius { primitive: usize },
}

const AXES: [&str; 3] = ["x", "y", "z"];
const CHANNELS: [&str; 3] = ["r", "g", "b"];

impl ParamTarget {
    /// Geometry moves silhouettes; optimizing it is opt-in.
    pub fn is_geometry(&self) -> bool {
        matches!(
            self,
            ParamTarget::Vertex { .. } | ParamTarget::SphereCenter { .. } | ParamTarget::SphereRadius { .. }
        )
    }
}

impl fmt::Display for ParamTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CameraField as C;
        use LightField as L;
        use MaterialField as M;
        let ax = |a: &u8| AXES[*a as usize];
        let ch = |a: &u8| CHANNELS[*a as usize];
        match self {
            ParamTarget::Camera(C::Lookfrom(a)) => write!(f, "camera.lookfrom.{}", ax(a)),
            ParamTarget::Camera(C::Lookat(a)) => write!(f, "camera.lookat.{}", ax(a)),
            ParamTarget::Camera(C::Vup(a)) => write!(f, "camera.vup.{}", ax(a)),
            ParamTarget::Camera(C::Vfov) => write!(f, "camera.vfov"),
            ParamTarget::Camera(C::Focus) => write!(f, "camera.focus"),
            ParamTarget::Light { light, field } => match field {
                L::Color(c) => write!(f, "light[{light}].color.{}", ch(c)),
                L::Intensity => write!(f, "light[{light}].intensity"),
                L::Position(a) => write!(f, "light[{light}].position.{}", ax(a)),
                L::Direction(a) => write!(f, "light[{light}].direction.{}", ax(a)),
            },
            ParamTarget::Material { material, field } => match field {
                M::Diffuse(c) => write!(f, "material[{material}].color_diffuse.{}", ch(c)),
                M::Specular(c) => write!(f, "material[{material}].color_specular.{}", ch(c)),
                M::Ambient(c) => write!(f, "material[{material}].color_ambient.{}", ch(c)),
                M::Exponent => write!(f, "material[{material}].specular_exponent"),
                M::Reflection => write!(f, "material[{material}].reflection"),
            },
            ParamTarget::Vertex {
                primitive,
                corner,
                axis,
            } => write!(f, "primitive[{primitive}].v{}.{}", corner + 1, ax(axis)),
            ParamTarget::SphereCenter { primitive, axis } => {
                write!(f, "primitive[{primitive}].center.{}", ax(axis))
            }
            ParamTarget::SphereRadius { primitive } => write!(f, "primitive[{primitive}].radius"),
        }
    }
}

fn vec_slot<S>(v: &mut Vec3<S>, axis: u8) -> &mut S {
    v.axis_mut(axis as usize)
}

/// Mutable access to the scalar addressed by `target`.
pub fn slot_mut<S: Scalar>(world: &mut World<S>, target: ParamTarget) -> Result<&mut S> {
    let missing = || Error::UnknownParam(target.to_string());
    Ok(match target {
        ParamTarget::Camera(field) => {
            let cam = &mut world.camera;
            match field {
                CameraField::Lookfrom(a) => vec_slot(&mut cam.lookfrom, a),
                CameraField::Lookat(a) => vec_slot(&mut cam.lookat, a),
                CameraField::Vup(a) => vec_slot(&mut cam.vup, a),
                CameraField::Vfov => &mut cam.vfov,
                CameraField::Focus => &mut cam.focus,
            }
        }
        ParamTarget::Light { light, field } => {
            let l = world.lights.get_mut(light).ok_or_else(missing)?;
            match (l, field) {
                (Light::Point(p), LightField::Color(c)) => vec_slot(&mut p.color, c),
                (Light::Distant(d), LightField::Color(c)) => vec_slot(&mut d.color, c),
                (Light::Point(p), LightField::Intensity) => &mut p.intensity,
                (Light::Distant(d), LightField::Intensity) => &mut d.intensity,
                (Light::Point(p), LightField::Position(a)) => vec_slot(&mut p.position, a),
                (Light::Distant(d), LightField::Direction(a)) => vec_slot(&mut d.direction, a),
                _ => return Err(missing()),
            }
        }
        ParamTarget::Material { material, field } => {
            let m = world.scene.materials.get_mut(material).ok_or_else(missing)?;
            match field {
                MaterialField::Diffuse(c) => vec_slot(&mut m.color_diffuse, c),
                MaterialField::Specular(c) => vec_slot(&mut m.color_specular, c),
                MaterialField::Ambient(c) => vec_slot(&mut m.color_ambient, c),
                MaterialField::Exponent => &mut m.specular_exponent,
                MaterialField::Reflection => &mut m.reflection,
            }
        }
        ParamTarget::Vertex {
            primitive,
            corner,
            axis,
        } => match world.scene.primitives.get_mut(primitive) {
            Some(Primitive::Triangle(t)) if corner < 3 => vec_slot(&mut t.vertices[corner as usize], axis),
            _ => return Err(missing()),
        },
        ParamTarget::SphereCenter { primitive, axis } => match world.scene.primitives.get_mut(primitive) {
            Some(Primitive::Sphere(s)) => vec_slot(&mut s.center, axis),
            _ => return Err(missing()),
        },
        ParamTarget::SphereRadius { primitive } => match world.scene.primitives.get_mut(primitive) {
            Some(Primitive::Sphere(s)) => &mut s.radius,
            _ => return Err(missing()),
        },
    })
}

/// Ordered, duplicate-free list of parameter slots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Selection {
    pub targets: Vec<ParamTarget>,
}

impl Selection {
    pub fn new(targets: impl IntoIterator<Item = ParamTarget>) -> Self {
        let mut sel = Selection::default();
        sel.extend(targets);
        sel
    }

    fn extend(&mut self, targets: impl IntoIterator<Item = ParamTarget>) {
        for t in targets {
            if !self.targets.contains(&t) {
                self.targets.push(t);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn has_geometry(&self) -> bool {
        self.targets.iter().any(ParamTarget::is_geometry)
    }

    /// Parses a comma-separated list of parameter paths against `world`.
    pub fn parse<S: Scalar>(spec: &str, world: &World<S>) -> Result<Self> {
        let mut sel = Selection::default();
        for path in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let targets = expand_path(path, world)?;
            // Every expanded slot must exist in this world.
            let mut probe = world.clone();
            for t in &targets {
                slot_mut(&mut probe, *t).map_err(|_| Error::UnknownParam(path.to_string()))?;
            }
            sel.extend(targets);
        }
        if sel.is_empty() {
            return Err(Error::UnknownParam(spec.to_string()));
        }
        Ok(sel)
    }
}

/// Splits `name[index]` into its parts.
fn split_indexed(seg: &str) -> (&str, Option<&str>) {
    match (seg.find('['), seg.strip_suffix(']')) {
        (Some(open), Some(body)) => (&seg[..open], Some(&body[open + 1..])),
        _ => (seg, None),
    }
}

fn component(tok: Option<&str>, path: &str) -> Result<Vec<u8>> {
    match tok {
        None => Ok(vec![0, 1, 2]),
        Some("x" | "r" | "0") => Ok(vec![0]),
        Some("y" | "g" | "1") => Ok(vec![1]),
        Some("z" | "b" | "2") => Ok(vec![2]),
        Some(_) => Err(Error::UnknownParam(path.to_string())),
    }
}

fn expand_path<S: Scalar>(path: &str, world: &World<S>) -> Result<Vec<ParamTarget>> {
    let unknown = || Error::UnknownParam(path.to_string());
    let segs: Vec<&str> = path.split('.').collect();
    let (head, index) = split_indexed(segs[0]);
    let field = segs.get(1).copied();
    let comp = segs.get(2).copied();
    if segs.len() > 3 {
        return Err(unknown());
    }

    let nth_of_kind = |want_sphere: bool| -> Vec<usize> {
        world
            .scene
            .primitives
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Primitive::Sphere(_)) == want_sphere)
            .map(|(i, _)| i)
            .collect()
    };
    let pick = |items: Vec<usize>, index: Option<&str>| -> Result<Vec<usize>> {
        match index {
            None => Ok(items),
            Some(i) => {
                let k: usize = i.parse().map_err(|_| unknown())?;
                items.get(k).map(|&p| vec![p]).ok_or_else(unknown)
            }
        }
    };

    let mut out = Vec::new();
    match (head, index) {
        ("camera", None) => {
            use CameraField as C;
            let vec_fields: [(&str, fn(u8) -> CameraField); 3] =
                [("lookfrom", C::Lookfrom), ("lookat", C::Lookat), ("vup", C::Vup)];
            let mut matched = false;
            for (name, make) in vec_fields {
                if field.is_none() || field == Some(name) {
                    if field.is_none() && comp.is_some() {
                        return Err(unknown());
                    }
                    out.extend(component(comp, path)?.into_iter().map(|a| ParamTarget::Camera(make(a))));
                    matched = true;
                }
            }
            for (name, f) in [("vfov", C::Vfov), ("focus", C::Focus)] {
                if field.is_none() || field == Some(name) {
                    if comp.is_some() {
                        return Err(unknown());
                    }
                    out.push(ParamTarget::Camera(f));
                    matched = true;
                }
            }
            if !matched {
                return Err(unknown());
            }
        }
        ("light" | "lights", idx) => {
            let lights: Vec<usize> = match (head, idx) {
                ("lights", None) => (0..world.lights.len()).collect(),
                ("light", Some(i)) => vec![i.parse().map_err(|_| unknown())?],
                _ => return Err(unknown()),
            };
            for li in lights {
                let light = world.lights.get(li).ok_or_else(unknown)?;
                let is_point = matches!(light, Light::Point(_));
                let mk = |field| ParamTarget::Light { light: li, field };
                let mut matched = false;
                if field.is_none() || field == Some("color") {
                    out.extend(component(comp, path)?.into_iter().map(|c| mk(LightField::Color(c))));
                    matched = true;
                }
                if field.is_none() || field == Some("intensity") {
                    out.push(mk(LightField::Intensity));
                    matched = true;
                }
                if (field.is_none() && is_point) || field == Some("position") {
                    if !is_point {
                        return Err(unknown());
                    }
                    out.extend(component(comp, path)?.into_iter().map(|a| mk(LightField::Position(a))));
                    matched = true;
                }
                if (field.is_none() && !is_point) || field == Some("direction") {
                    if is_point {
                        return Err(unknown());
                    }
                    out.extend(component(comp, path)?.into_iter().map(|a| mk(LightField::Direction(a))));
                    matched = true;
                }
                if !matched || (field.is_none() && comp.is_some()) {
                    return Err(unknown());
                }
            }
        }
        ("material" | "materials", idx) => {
            let mats: Vec<usize> = match (head, idx) {
                ("materials", None) => (0..world.scene.materials.len()).collect(),
                ("material", Some(name)) => vec![world
                    .scene
                    .material_index(name)
                    .or_else(|| name.parse().ok())
                    .filter(|&i| i < world.scene.materials.len())
                    .ok_or_else(unknown)?],
                _ => return Err(unknown()),
            };
            use MaterialField as M;
            let vec_fields: [(&str, fn(u8) -> MaterialField); 3] = [
                ("color_diffuse", M::Diffuse),
                ("color_specular", M::Specular),
                ("color_ambient", M::Ambient),
            ];
            for mi in mats {
                let mk = |field| ParamTarget::Material { material: mi, field };
                let mut matched = false;
                for (name, make) in vec_fields {
                    if field.is_none() || field == Some(name) {
                        out.extend(component(comp, path)?.into_iter().map(|c| mk(make(c))));
                        matched = true;
                    }
                }
                for (name, f) in [("specular_exponent", M::Exponent), ("reflection", M::Reflection)] {
                    if field.is_none() || field == Some(name) {
                        out.push(mk(f));
                        matched = true;
                    }
                }
                if !matched || (field.is_none() && comp.is_some()) {
                    return Err(unknown());
                }
            }
        }
        ("triangle" | "triangles", idx) => {
            if (head == "triangle") != idx.is_some() {
                return Err(unknown());
            }
            for p in pick(nth_of_kind(false), idx)? {
                let corners: Vec<u8> = match field {
                    None => vec![0, 1, 2],
                    Some("v1") => vec![0],
                    Some("v2") => vec![1],
                    Some("v3") => vec![2],
                    Some(_) => return Err(unknown()),
                };
                if field.is_none() && comp.is_some() {
                    return Err(unknown());
                }
                for corner in corners {
                    for axis in component(comp, path)? {
                        out.push(ParamTarget::Vertex {
                            primitive: p,
                            corner,
                            axis,
                        });
                    }
                }
            }
        }
        ("primitive", Some(i)) => {
            let p: usize = i.parse().map_err(|_| unknown())?;
            let rest = segs[1..].join(".");
            let alias = match world.scene.primitives.get(p).ok_or_else(unknown)? {
                Primitive::Triangle(_) => {
                    let k = nth_of_kind(false).iter().position(|&q| q == p).ok_or_else(unknown)?;
                    format!("triangle[{k}]")
                }
                Primitive::Sphere(_) => {
                    let k = nth_of_kind(true).iter().position(|&q| q == p).ok_or_else(unknown)?;
                    format!("sphere[{k}]")
                }
            };
            let aliased = if rest.is_empty() { alias } else { format!("{alias}.{rest}") };
            return expand_path(&aliased, world).map_err(|_| unknown());
        }
        ("sphere" | "spheres", idx) => {
            if (head == "sphere") != idx.is_some() {
                return Err(unknown());
            }
            for p in pick(nth_of_kind(true), idx)? {
                match field {
                    None | Some("center") => {
                        if field.is_none() && comp.is_some() {
                            return Err(unknown());
                        }
                        out.extend(
                            component(comp, path)?
                                .into_iter()
                                .map(|axis| ParamTarget::SphereCenter { primitive: p, axis }),
                        );
                        if field.is_none() {
                            out.push(ParamTarget::SphereRadius { primitive: p });
                        }
                    }
                    Some("radius") if comp.is_none() => out.push(ParamTarget::SphereRadius { primitive: p }),
                    _ => return Err(unknown()),
                }
            }
        }
        _ => return Err(unknown()),
    }
    Ok(out)
}

/// Selected parameter values plus the slot each one came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<R> {
    pub values: Vec<R>,
    pub layout: Vec<ParamTarget>,
}

impl<R: Real> ParamVector<R> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<R>) -> Self {
        assert_eq!(values.len(), self.layout.len());
        ParamVector {
            values,
            layout: self.layout.clone(),
        }
    }

    pub fn get(&self, target: ParamTarget) -> Option<R> {
        self.layout.iter().position(|t| *t == target).map(|i| self.values[i])
    }
}

pub fn pack_params<S: Scalar>(world: &World<S>, selection: &Selection) -> Result<ParamVector<S::Real>> {
    let mut probe = world.clone();
    let values = selection
        .targets
        .iter()
        .map(|&t| slot_mut(&mut probe, t).map(|s| s.value()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamVector {
        values,
        layout: selection.targets.clone(),
    })
}

pub fn unpack_params<R: Real>(params: &ParamVector<R>, world: &mut World<R>) -> Result<()> {
    for (&t, &v) in params.layout.iter().zip(&params.values) {
        *slot_mut(world, t)? = v;
    }
    Ok(())
}

/// Copies `world` onto `tape`: selected slots become input variables (in
/// layout order), everything else becomes a constant.
pub fn lift<'t, R: Real>(
    world: &World<R>,
    tape: &'t Tape<R>,
    params: &ParamVector<R>,
) -> Result<(World<Var<'t, R>>, Vec<Var<'t, R>>)> {
    let mut lifted = world.map(Var::constant);
    let mut vars = Vec::with_capacity(params.len());
    for (&t, &v) in params.layout.iter().zip(&params.values) {
        let var = tape.var(v);
        *slot_mut(&mut lifted, t)? = var;
        vars.push(var);
    }
    Ok((lifted, vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Camera, Material, Scene, Sphere, Triangle};
    use proptest::prelude::*;

    fn world() -> World<f64> {
        let mut scene = Scene::new();
        let green = scene.add_material("green", Material::diffuse(Vec3::new(0.0, 1.0, 0.0)));
        scene.add_material("white", Material::default());
        scene.push(Primitive::Triangle(
            Triangle::new(Vec3::lit(0., 0., 0.), Vec3::lit(1., 0., 0.), Vec3::lit(0., 1., 0.), green).unwrap(),
        ));
        scene.push(Primitive::Sphere(Sphere::new(Vec3::lit(0., 0., 3.), 1.0, 1).unwrap()));
        scene.push(Primitive::Triangle(
            Triangle::new(Vec3::lit(0., 0., 1.), Vec3::lit(1., 0., 1.), Vec3::lit(0., 1., 1.), 1).unwrap(),
        ));
        let cam = Camera::new(
            Vec3::lit(0., 0., -30.),
            Vec3::zero(),
            Vec3::lit(0., 1., 0.),
            90.0,
            1.0,
            4,
            3,
        )
        .unwrap();
        let lights = vec![
            Light::point(Vec3::lit(1., 0., 0.), 100000.0, Vec3::lit(0., 0., -10.)),
            Light::distant(Vec3::splat(1.0), 100.0, Vec3::lit(0., 1., 0.)),
        ];
        World::new(cam, lights, scene)
    }

    #[test]
    fn point_light_has_seven_scalars() {
        let w = world();
        assert_eq!(Selection::parse("light[0]", &w).unwrap().len(), 7);
        assert_eq!(Selection::parse("light[1]", &w).unwrap().len(), 7);
        assert_eq!(Selection::parse("lights", &w).unwrap().len(), 14);
    }

    #[test]
    fn camera_location_and_focus_is_four() {
        let w = world();
        let sel = Selection::parse("camera.lookfrom, camera.focus", &w).unwrap();
        assert_eq!(sel.len(), 4);
        assert_eq!(Selection::parse("camera", &w).unwrap().len(), 11);
        let pv = pack_params(&w, &sel).unwrap();
        assert_eq!(pv.values, vec![0.0, 0.0, -30.0, 1.0]);
    }

    #[test]
    fn triangle_plus_its_material_is_twenty() {
        let w = world();
        let sel = Selection::parse("triangle[0], material[green]", &w).unwrap();
        assert_eq!(sel.len(), 20);
        assert!(sel.has_geometry());
        let sel = Selection::parse("triangle[1].v2.z", &w).unwrap();
        assert_eq!(
            sel.targets,
            vec![ParamTarget::Vertex {
                primitive: 2,
                corner: 1,
                axis: 2
            }]
        );
    }

    #[test]
    fn display_paths_parse_back() {
        let w = world();
        let all = Selection::parse("camera,lights,materials,triangles,spheres", &w).unwrap();
        for t in &all.targets {
            let back = Selection::parse(&t.to_string(), &w).unwrap();
            assert_eq!(back.targets, vec![*t], "{t}");
        }
        assert!(Selection::parse("primitive[9]", &w).is_err());
        assert!(Selection::parse("primitive[1].v1", &w).is_err());
    }

    #[test]
    fn duplicates_collapse() {
        let w = world();
        let sel = Selection::parse("camera.focus,camera.focus,camera", &w).unwrap();
        assert_eq!(sel.len(), 11);
    }

    #[test]
    fn unknown_paths_are_errors() {
        let w = world();
        for bad in [
            "camera.nope",
            "light[7]",
            "light[1].position",
            "light[0].direction",
            "material[blue]",
            "sphere[1]",
            "triangle",
            "triangle[0].v4",
            "camera.focus.x",
            "",
            "bogus",
        ] {
            assert!(Selection::parse(bad, &w).is_err(), "{bad}");
        }
    }

    #[test]
    fn unpack_writes_back() {
        let mut w = world();
        let sel = Selection::parse("light[0].intensity,sphere[0].radius,material[1].color_diffuse.g", &w).unwrap();
        let pv = pack_params(&w, &sel).unwrap().with_values(vec![5.0, 2.0, 0.25]);
        unpack_params(&pv, &mut w).unwrap();
        assert_eq!(w.lights[0].intensity(), 5.0);
        assert_eq!(w.scene.materials[1].color_diffuse.y, 0.25);
        match &w.scene.primitives[1] {
            Primitive::Sphere(s) => assert_eq!(s.radius, 2.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn lift_creates_one_input_per_parameter() {
        let w = world();
        let sel = Selection::parse("camera.lookfrom,light[0].intensity", &w).unwrap();
        let pv = pack_params(&w, &sel).unwrap();
        let tape = Tape::new();
        let (lifted, vars) = lift(&w, &tape, &pv).unwrap();
        assert_eq!(vars.len(), 4);
        assert_eq!(tape.len(), 4);
        assert!(!lifted.camera.lookfrom.z.is_constant());
        assert!(lifted.camera.lookat.z.is_constant());
        assert_eq!(lifted.camera.lookfrom.z.value(), -30.0);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(vals in proptest::collection::vec(-50.0f64..50.0, 80)) {
            let mut w = world();
            let sel = Selection::parse("camera,lights,materials,triangles", &w).unwrap();
            prop_assume!(sel.len() <= vals.len());
            let pv = pack_params(&w, &sel).unwrap().with_values(vals[..sel.len()].to_vec());
            unpack_params(&pv, &mut w).unwrap();
            let again = pack_params(&w, &sel).unwrap();
            prop_assert_eq!(&again, &pv);
        }
    }
}
