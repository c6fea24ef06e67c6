//! Differentiable Whitted-style ray tracer.
//!
//! The renderer is written once over [`math::Scalar`]. Instantiated with
//! `f32`/`f64` it renders images; instantiated with [`autodiff::Var`] it
//! records every operation on a tape so image-space losses can be
//! differentiated with respect to any scene parameter in one reverse sweep.
//!
//! ```
//! use difftrace::prelude::*;
//!
//! let mut scene = Scene::new();
//! let m = scene.add_material("white", Material::default());
//! scene.push(Primitive::Sphere(Sphere::new(Vec3::zero(), 1.0f32, m).unwrap()));
//! let cam = Camera::new(Vec3::new(0.0, 0.0, -5.0), Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), 45.0, 1.0, 16, 16).unwrap();
//! let light = Light::point(Vec3::splat(1.0), 1000.0, Vec3::new(0.0, 2.0, -5.0));
//! let world = World::new(cam, vec![light], scene);
//! let image = render(&world, Accel::Linear, 2).unwrap();
//! assert!(image.get(8, 8).x > 0.0);
//! ```

pub mod autodiff;
pub mod bvh;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod inverse;
pub mod math;
pub mod render;
pub mod scene;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::autodiff::{finite_difference_gradient, gradient, GradConfig, Tape, Var};
    pub use crate::bvh::Bvh;
    pub use crate::error::{Error, Result};
    pub use crate::image::Image;
    pub use crate::inverse::{optimize, LossKind, Objective, OptimConfig};
    pub use crate::math::{Real, Scalar, Vec3};
    pub use crate::render::{render, Accel, Ray};
    pub use crate::scene::{
        pack_params, unpack_params, Camera, Light, Material, ParamVector, Primitive, Scene, Selection, Sphere,
        Triangle, World,
    };
}
