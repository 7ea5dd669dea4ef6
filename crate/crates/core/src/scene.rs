//! Gaussian scene representation.
//!
//! Fields are held in `f64` in memory. The on-disk format stores `f32`, so a
//! scene loaded from disk is exactly representable and round-trips bit-exactly.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{self, Mat3, Vec3};
use crate::{Error, Result};

/// Allowed deviation of a rotation quaternion from unit norm.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec3,
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f64; 4],
    /// Per-axis standard deviations, all positive.
    pub scale: Vec3,
    /// In `(0, 1]`.
    pub opacity: f64,
    pub color: Vec3,
    /// Per-Gaussian attention prior slot; zero unless a prior is attached.
    pub attn_score: f64,
}

impl Gaussian {
    /// Isotropic, axis-aligned Gaussian.
    pub fn isotropic(mean: Vec3, sigma: f64, opacity: f64, color: Vec3) -> Self {
        Gaussian {
            mean,
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: [sigma; 3],
            opacity,
            color,
            attn_score: 0.0,
        }
    }

    pub fn check(&self) -> core::result::Result<(), alloc::string::String> {
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err("non-finite mean".into());
        }
        let qn = linalg::quat_norm(&self.rotation);
        if !qn.is_finite() || (qn - 1.0).abs() > QUAT_NORM_TOLERANCE {
            return Err(format!("rotation quaternion norm {qn} is not within {QUAT_NORM_TOLERANCE} of 1"));
        }
        if !self.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(format!("scale {:?} must be positive", self.scale));
        }
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(format!("opacity {} outside (0, 1]", self.opacity));
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(format!("color {:?} outside [0, 1]", self.color));
        }
        if !(self.attn_score >= 0.0 && self.attn_score.is_finite()) {
            return Err(format!("attention score {} must be finite and nonnegative", self.attn_score));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Result<Mat3> {
        covariance_from(&self.rotation, &self.scale)
    }
}

/// `C = R·S·Sᵀ·Rᵀ` for rotation quaternion `(w, x, y, z)` and per-axis scale.
pub fn covariance_from(rotation: &[f64; 4], scale: &Vec3) -> Result<Mat3> {
    let qn = linalg::quat_norm(rotation);
    if !qn.is_finite() || (qn - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(Error::invalid(format!("quaternion norm {qn} is not unit")));
    }
    if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::invalid(format!("scale {scale:?} must be positive")));
    }
    let r = linalg::quat_to_rotation(rotation);
    // (R S)(R S)^T, with S diagonal.
    let mut rs = r;
    for row in rs.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= scale[j];
        }
    }
    let mut c = linalg::mul(&rs, &linalg::transpose(&rs));
    // Exact symmetry.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let avg = 0.5 * (c[i][j] + c[j][i]);
            c[i][j] = avg;
            c[j][i] = avg;
        }
    }
    Ok(c)
}

/// An ordered, validated set of Gaussians. Index is the Gaussian id.
///
/// `revision` identifies the snapshot; every mutation bumps it, which is how
/// stale contribution buffers are detected.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    gaussians: Vec<Gaussian>,
    background: Vec3,
    revision: u64,
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian>, background: Vec3) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::invalid("scene has no gaussians"));
        }
        for (index, g) in gaussians.iter().enumerate() {
            g.check().map_err(|reason| Error::InvalidGaussian { index, reason })?;
        }
        if !background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("background {background:?} outside [0, 1]")));
        }
        Ok(Scene { gaussians, background, revision: 0 })
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn background(&self) -> Vec3 {
        self.background
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// New snapshot with `scores` written into the attention slots.
    pub fn with_attn_scores(&self, scores: &[f64]) -> Result<Scene> {
        if scores.len() != self.gaussians.len() {
            return Err(Error::invalid(format!(
                "prior has {} scores for {} gaussians",
                scores.len(),
                self.gaussians.len()
            )));
        }
        if let Some(bad) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(format!("prior score {bad} is negative or non-finite")));
        }
        let mut next = self.clone();
        for (g, s) in next.gaussians.iter_mut().zip(scores) {
            g.attn_score = *s;
        }
        next.revision += 1;
        Ok(next)
    }

    /// Applies gradient-style updates to colors and opacities, projecting back
    /// onto the valid ranges, and advances the revision by one.
    pub(crate) fn apply_appearance_step(
        &mut self,
        color_delta: &[[f64; 3]],
        opacity_delta: &[f64],
        min_opacity: f64,
    ) {
        for ((g, dc), da) in self.gaussians.iter_mut().zip(color_delta).zip(opacity_delta) {
            for c in 0..3 {
                g.color[c] = (g.color[c] + dc[c]).clamp(0.0, 1.0);
            }
            g.opacity = (g.opacity + da).clamp(min_opacity, 1.0);
        }
        self.revision += 1;
    }

    /// Mutable access for tests and tools; bumps the revision.
    pub fn edit<F: FnOnce(&mut [Gaussian])>(&mut self, f: F) -> Result<()> {
        let mut next = self.gaussians.clone();
        f(&mut next);
        for (index, g) in next.iter().enumerate() {
            g.check().map_err(|reason| Error::InvalidGaussian { index, reason })?;
        }
        self.gaussians = next;
        self.revision += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_unit_scale() {
        let c = covariance_from(&[1.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c, linalg::IDENTITY);
    }

    #[test]
    fn axis_aligned_squares_scale() {
        let c = covariance_from(&[1.0, 0.0, 0.0, 0.0], &[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(c, [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn quarter_turn_about_z_swaps_axes() {
        let h = core::f64::consts::FRAC_PI_4;
        let q = [libm::cos(h), 0.0, 0.0, libm::sin(h)];
        let c = covariance_from(&q, &[2.0, 1.0, 1.0]).unwrap();

        // Oracle: compose the z rotation matrix directly and multiply.
        let (s, co) = (libm::sin(2.0 * h), libm::cos(2.0 * h));
        let r = [[co, -s, 0.0], [s, co, 0.0], [0.0, 0.0, 1.0]];
        let s2 = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let expected = linalg::mul(&linalg::mul(&r, &s2), &linalg::transpose(&r));
        assert!(close(&c, &expected, 1e-12));
        assert!(close(&c, &[[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]], 1e-9));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            covariance_from(&[1.0, 0.1, 0.0, 0.0], &[1.0; 3]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            covariance_from(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn scene_validation_names_index() {
        let good = Gaussian::isotropic([0.0; 3], 1.0, 0.5, [0.5; 3]);
        let mut bad = good.clone();
        bad.opacity = 0.0;
        let err = Scene::new(alloc::vec![good.clone(), bad], [0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidGaussian { index: 1, .. }));
        assert!(Scene::new(Vec::new(), [0.0; 3]).is_err());
    }

    #[test]
    fn attaching_scores_bumps_revision() {
        let g = Gaussian::isotropic([0.0; 3], 1.0, 0.5, [0.5; 3]);
        let s = Scene::new(alloc::vec![g; 2], [0.0; 3]).unwrap();
        let t = s.with_attn_scores(&[1.0, 2.0]).unwrap();
        assert_eq!(t.revision(), s.revision() + 1);
        assert_eq!(t.gaussians()[1].attn_score, 2.0);
        assert!(s.with_attn_scores(&[1.0]).is_err());
        assert!(s.with_attn_scores(&[1.0, -1.0]).is_err());
    }
}
