use crate::error::{Error, Result};
use crate::math::{Real, Scalar, Vec3};

/// Pinhole camera.
///
/// `focus` scales the half-extent of the image plane, which sits at unit
/// distance along the view direction: larger values widen the view.
#[derive(Clone, Debug)]
pub struct Camera<S> {
    pub lookfrom: Vec3<S>,
    pub lookat: Vec3<S>,
    pub vup: Vec3<S>,
    /// Vertical field of view in degrees.
    pub vfov: S,
    pub focus: S,
    pub width: usize,
    pub height: usize,
}

/// Orthonormal camera frame plus image-plane half extents.
#[derive(Clone, Copy, Debug)]
pub struct CameraBasis<S> {
    pub origin: Vec3<S>,
    /// Points from the target back toward the eye.
    pub w: Vec3<S>,
    pub u: Vec3<S>,
    pub v: Vec3<S>,
    pub half_width: S,
    pub half_height: S,
    pub width: usize,
    pub height: usize,
}

pub struct PrimaryRays<S> {
    pub origins: Vec<Vec3<S>>,
    pub directions: Vec<Vec3<S>>,
}

impl<S: Scalar> Camera<S> {
    pub fn new(
        lookfrom: Vec3<S>,
        lookat: Vec3<S>,
        vup: Vec3<S>,
        vfov: S,
        focus: S,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Camera {
            lookfrom,
            lookat,
            vup,
            vfov,
            focus,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let vfov = self.vfov.value().as_f64();
        if !(vfov > 0.0 && vfov < 180.0) {
            return Err(Error::InvalidCamera(format!("vfov {vfov} outside (0, 180)")));
        }
        let focus = self.focus.value().as_f64();
        if !(focus > 0.0) || !focus.is_finite() {
            return Err(Error::InvalidCamera(format!("focus {focus} must be > 0")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!(
                "resolution {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if self.lookfrom.value() == self.lookat.value() {
            return Err(Error::InvalidCamera("lookfrom equals lookat".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> Camera<T> {
        Camera {
            lookfrom: self.lookfrom.map(&mut f),
            lookat: self.lookat.map(&mut f),
            vup: self.vup.map(&mut f),
            vfov: f(self.vfov),
            focus: f(self.focus),
            width: self.width,
            height: self.height,
        }
    }

    pub fn basis(&self) -> Result<CameraBasis<S>> {
        let w = (self.lookfrom - self.lookat).normalize();
        let side = self.vup.cross(w);
        let up_len = self.vup.value().length().as_f64();
        if side.value().length().as_f64() <= 1e-9 * up_len.max(1e-300) {
            return Err(Error::InvalidCamera("vup is parallel to the view direction".into()));
        }
        let u = side.normalize();
        let v = w.cross(u);
        let half_angle = self.vfov * S::lit(std::f64::consts::PI / 360.0);
        let half_height = self.focus * half_angle.tan();
        let aspect = S::lit(self.width as f64 / self.height as f64);
        Ok(CameraBasis {
            origin: self.lookfrom,
            w,
            u,
            v,
            half_width: half_height * aspect,
            half_height,
            width: self.width,
            height: self.height,
        })
    }
}

impl<S: Scalar> CameraBasis<S> {
    /// Unit direction through the center of pixel (`col`, `row`); row 0 is
    /// the top of the image.
    pub fn direction(&self, col: usize, row: usize) -> Vec3<S> {
        let sx = (2.0 * (col as f64 + 0.5) / self.width as f64) - 1.0;
        let sy = 1.0 - (2.0 * (row as f64 + 0.5) / self.height as f64);
        let offset = self.u * (self.half_width * S::lit(sx)) + self.v * (self.half_height * S::lit(sy));
        (offset - self.w).normalize()
    }
}

/// One ray through each pixel center, in row-major order from the top-left.
pub fn get_primary_rays<S: Scalar>(cam: &Camera<S>) -> Result<PrimaryRays<S>> {
    cam.validate()?;
    let basis = cam.basis()?;
    let mut directions = Vec::with_capacity(cam.pixel_count());
    for row in 0..cam.height {
        for col in 0..cam.width {
            directions.push(basis.direction(col, row));
        }
    }
    Ok(PrimaryRays {
        origins: vec![cam.lookfrom; cam.pixel_count()],
        directions,
    })
}
