#![allow(dead_code)]

use rand::Rng;
use splatedit_core::linalg;
use splatedit_core::{Camera, Gaussian, Scene};

pub fn axis_camera(id: &str, size: usize, focal: f64) -> Camera {
    let c = size as f64 / 2.0;
    Camera::new(id, size, size, focal, focal, c, c, linalg::IDENTITY, [0.0; 3]).unwrap()
}

pub fn random_unit_quat(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 {
            return q.map(|v| v / n);
        }
    }
}

/// Gaussians in front of an axis camera at the origin.
pub fn random_gaussian(rng: &mut impl Rng, max_opacity: f64) -> Gaussian {
    Gaussian {
        mean: [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(2.0..6.0)],
        rotation: random_unit_quat(rng),
        scale: std::array::from_fn(|_| rng.random_range(0.05..0.4)),
        opacity: rng.random_range(0.05..max_opacity),
        color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        attn_score: rng.random_range(0.0..2.0),
    }
}

pub fn random_scene(rng: &mut impl Rng, n: usize, max_opacity: f64) -> Scene {
    let gs = (0..n).map(|_| random_gaussian(rng, max_opacity)).collect();
    let bg = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    Scene::new(gs, bg).unwrap()
}

/// `|a − b| ≤ tol · max(|a|, |b|, floor)`.
pub fn rel_close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}
