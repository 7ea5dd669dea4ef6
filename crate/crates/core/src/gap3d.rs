//! Per-Gaussian attention prior from weighted unprojection of 2D maps.
//!
//! For Gaussian `i`, with `V_i` the reference views in which it carries more
//! than [`MASS_THRESHOLD`] of total contribution,
//!
//! ```text
//! prior(i) = Σ_{v ∈ V_i} w_v / (Σ_{m ∈ V_i} w_m) · Σ_p M_v(p)·O_i(p)·T_i(p)
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::maps::ScalarMap;
use crate::par;
use crate::render::{self, ContributionBuffer};
use crate::scene::Scene;
use crate::{Error, Result};

pub const MASS_THRESHOLD: f64 = 1e-6;

/// One reference view's input to [`build_prior`].
#[derive(Debug, Clone, Copy)]
pub struct PriorInput<'a> {
    pub view_id: &'a str,
    pub weight: f64,
    /// Attention map at the render resolution.
    pub attention: &'a ScalarMap,
    pub contributions: &'a ContributionBuffer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorOptions {
    /// Divide each view's term by the Gaussian's contribution mass in that
    /// view, turning the sum over pixels into an average.
    #[serde(default)]
    pub normalize_by_mass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionPrior {
    pub layer: u32,
    pub scores: Vec<f64>,
    pub views: Vec<String>,
    pub weights: Vec<f64>,
    /// Gaussians not seen by any reference view (score forced to 0).
    pub uncovered: Vec<u32>,
}

pub fn build_prior(
    gaussian_count: usize,
    layer: u32,
    inputs: &[PriorInput<'_>],
    options: PriorOptions,
) -> Result<AttentionPrior> {
    if inputs.is_empty() {
        return Err(Error::invalid("no reference views for the attention prior"));
    }
    for input in inputs {
        let buf = input.contributions;
        if buf.gaussian_count() != gaussian_count {
            return Err(Error::invalid(format!(
                "view {}: contribution buffer covers {} gaussians, scene has {gaussian_count}",
                input.view_id,
                buf.gaussian_count()
            )));
        }
        if input.attention.width != buf.width() || input.attention.height != buf.height() {
            return Err(Error::Format(format!(
                "view {}: attention map is {}x{}, render is {}x{}",
                input.view_id,
                input.attention.width,
                input.attention.height,
                buf.width(),
                buf.height()
            )));
        }
        input.attention.check_attention()?;
        if !(input.weight > 0.0 && input.weight.is_finite()) {
            return Err(Error::invalid(format!("view {}: weight {} must be positive", input.view_id, input.weight)));
        }
    }

    // Per view: (mass, attention-weighted mass) for every Gaussian.
    let per_view = par::map_ordered(inputs, |input| {
        let mass = input.contributions.mass_per_gaussian();
        let attn = input.contributions.weighted_mass_per_gaussian(Some(&input.attention.values));
        (mass, attn)
    });

    let mut scores = vec![0.0; gaussian_count];
    let mut uncovered = Vec::new();
    for (i, score) in scores.iter_mut().enumerate() {
        let mut weight_sum = 0.0;
        for (input, (mass, _)) in inputs.iter().zip(&per_view) {
            if mass[i] > MASS_THRESHOLD {
                weight_sum += input.weight;
            }
        }
        if weight_sum == 0.0 {
            uncovered.push(i as u32);
            continue;
        }
        let mut acc = 0.0;
        for (input, (mass, attn)) in inputs.iter().zip(&per_view) {
            if mass[i] > MASS_THRESHOLD {
                let term = if options.normalize_by_mass { attn[i] / mass[i] } else { attn[i] };
                acc += input.weight / weight_sum * term;
            }
        }
        *score = acc;
    }

    Ok(AttentionPrior {
        layer,
        scores,
        views: inputs.iter().map(|i| String::from(i.view_id)).collect(),
        weights: inputs.iter().map(|i| i.weight).collect(),
        uncovered,
    })
}

/// Renders the prior into a view: the 3D-constrained attention map.
pub fn project_prior(scene: &Scene, prior: &AttentionPrior, cam: &Camera) -> Result<ScalarMap> {
    let buf = render::rasterize(scene, cam)?;
    project_prior_with(&buf, prior)
}

/// As [`project_prior`], reusing an existing contribution buffer.
pub fn project_prior_with(buf: &ContributionBuffer, prior: &AttentionPrior) -> Result<ScalarMap> {
    render::composite_scalar(buf, &prior.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::scene::Gaussian;

    fn setup() -> (Scene, Camera) {
        let gs = (0..6)
            .map(|i| {
                let x = (i as f64 - 2.5) * 0.15;
                Gaussian::isotropic([x, 0.05 * i as f64, 3.0 + 0.1 * i as f64], 0.12, 0.7, [0.5; 3])
            })
            .collect();
        let scene = Scene::new(gs, [0.0; 3]).unwrap();
        let cam = Camera::new("v", 32, 32, 40.0, 40.0, 16.0, 16.0, linalg::IDENTITY, [0.0; 3]).unwrap();
        (scene, cam)
    }

    #[test]
    fn constant_map_gives_mass() {
        let (scene, cam) = setup();
        let buf = render::rasterize(&scene, &cam).unwrap();
        let map = ScalarMap::filled(32, 32, 0.4);
        let input = PriorInput { view_id: "v", weight: 0.7, attention: &map, contributions: &buf };
        let prior = build_prior(scene.len(), 0, &[input], PriorOptions::default()).unwrap();
        // Oracle: sum O*T per gaussian directly over the pixel lists.
        for i in 0..scene.len() {
            let mut mass = 0.0;
            for p in 0..buf.pixel_count() {
                for c in buf.pixel(p) {
                    if c.gaussian as usize == i {
                        mass += c.opacity * c.transmittance;
                    }
                }
            }
            assert!((prior.scores[i] - 0.4 * mass).abs() <= 1e-5 * (0.4 * mass).max(1e-12));
        }
    }

    #[test]
    fn identical_views_equal_single() {
        let (scene, cam) = setup();
        let buf = render::rasterize(&scene, &cam).unwrap();
        let map = ScalarMap::new(32, 32, (0..1024).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let one = PriorInput { view_id: "a", weight: 1.0, attention: &map, contributions: &buf };
        let two = PriorInput { view_id: "b", ..one };
        let single = build_prior(scene.len(), 0, &[one], PriorOptions::default()).unwrap();
        let double = build_prior(scene.len(), 0, &[one, two], PriorOptions::default()).unwrap();
        for (a, b) in single.scores.iter().zip(&double.scores) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn zero_map_zero_prior_and_projection() {
        let (scene, cam) = setup();
        let buf = render::rasterize(&scene, &cam).unwrap();
        let map = ScalarMap::filled(32, 32, 0.0);
        let input = PriorInput { view_id: "v", weight: 1.0, attention: &map, contributions: &buf };
        let prior = build_prior(scene.len(), 0, &[input], PriorOptions::default()).unwrap();
        assert!(prior.scores.iter().all(|s| *s == 0.0));
        let projected = project_prior(&scene, &prior, &cam).unwrap();
        assert!(projected.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn errors() {
        let (scene, cam) = setup();
        let buf = render::rasterize(&scene, &cam).unwrap();
        assert!(matches!(build_prior(scene.len(), 0, &[], PriorOptions::default()), Err(Error::InvalidInput(_))));
        let small = ScalarMap::filled(16, 16, 1.0);
        let input = PriorInput { view_id: "v", weight: 1.0, attention: &small, contributions: &buf };
        assert!(matches!(build_prior(scene.len(), 0, &[input], PriorOptions::default()), Err(Error::Format(_))));
    }

    #[test]
    fn uncovered_gaussians_are_reported() {
        let (scene, cam) = setup();
        let mut gs = scene.gaussians().to_vec();
        gs.push(Gaussian::isotropic([0.0, 0.0, -5.0], 0.1, 0.5, [0.5; 3]));
        let scene = Scene::new(gs, [0.0; 3]).unwrap();
        let buf = render::rasterize(&scene, &cam).unwrap();
        let map = ScalarMap::filled(32, 32, 1.0);
        let input = PriorInput { view_id: "v", weight: 1.0, attention: &map, contributions: &buf };
        let prior = build_prior(scene.len(), 0, &[input], PriorOptions::default()).unwrap();
        assert_eq!(prior.uncovered, [6]);
        assert_eq!(prior.scores[6], 0.0);
    }

    #[test]
    fn mass_normalization_averages() {
        let (scene, cam) = setup();
        let buf = render::rasterize(&scene, &cam).unwrap();
        let map = ScalarMap::filled(32, 32, 0.25);
        let input = PriorInput { view_id: "v", weight: 1.0, attention: &map, contributions: &buf };
        let prior = build_prior(scene.len(), 0, &[input], PriorOptions { normalize_by_mass: true }).unwrap();
        for s in &prior.scores {
            assert!((s - 0.25).abs() < 1e-12);
        }
    }
}
