use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat3, Vec3};
use crate::{Error, Result};

/// Pinhole camera with a rigid world-to-camera transform.
///
/// Camera space looks down `+z`; pixel `(x, y)` has its center at
/// `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

pub const MIN_IMAGE_SIDE: usize = 8;

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
    ) -> Result<Self> {
        let cam = Camera { id: id.into(), width, height, fx, fy, cx, cy, rotation, translation };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` as the approximate
    /// image-up direction (image y grows downward).
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        id: impl Into<String>,
        width: usize,
        height: usize,
        focal: f64,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Result<Self> {
        let forward = normalize(sub(target, eye));
        let right = normalize(cross(forward, up));
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = linalg::mul_vec(&rotation, &eye).map(|v| -v);
        Camera::new(
            id,
            width,
            height,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            translation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(format!("camera {}: focal lengths must be positive", self.id)));
        }
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(Error::invalid(format!(
                "camera {}: resolution {}x{} below {MIN_IMAGE_SIDE}",
                self.id, self.width, self.height
            )));
        }
        let err = linalg::orthonormality_error(&self.rotation);
        if !(err <= 1e-6) {
            return Err(Error::invalid(format!(
                "camera {}: rotation not orthonormal (error {err:e})",
                self.id
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.translation.iter().all(|t| t.is_finite())) {
            return Err(Error::invalid(format!("camera {}: non-finite parameters", self.id)));
        }
        Ok(())
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        let p = linalg::mul_vec(&self.rotation, world);
        [p[0] + self.translation[0], p[1] + self.translation[1], p[2] + self.translation[2]]
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Same pose, intrinsics rescaled to a new resolution.
    pub fn resized(&self, width: usize, height: usize) -> Result<Camera> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera::new(
            self.id.clone(),
            width,
            height,
            self.fx * sx,
            self.fy * sy,
            self.cx * sx,
            self.cy * sy,
            self.rotation,
            self.translation,
        )
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: Vec3) -> Vec3 {
    let n = crate::math::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    [a[0] / n, a[1] / n, a[2] / n]
}
