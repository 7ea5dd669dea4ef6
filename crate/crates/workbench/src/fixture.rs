//! The `bimodal` synthetic scenario.
//!
//! A sphere of Gaussians seen by a ring of cameras. Two groups of views carry
//! conflicting edits: style A recolors the top cap red, style B recolors the
//! top cap red and the bottom cap blue. The key view is a style A view, so up
//! to the shared red cap the two styles disagree, and only a selection that
//! downweights style B keeps the bottom cap unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatedit_core::optimizer::{RunConfig, ViewData};
use splatedit_core::render::{self, Field, Rendered};
use splatedit_core::{Camera, Gaussian, Image, ScalarMap, Scene};

use crate::scenario::{write_scenario, Scenario, SYNTHETIC_EMBEDDINGS_FILE};
use crate::synth::SyntheticEmbeddings;

pub const RED: [f64; 3] = [0.9, 0.15, 0.1];
pub const BLUE: [f64; 3] = [0.1, 0.2, 0.9];
pub const CAP: f64 = 0.55;
pub const PROMPT_SRC: &str = "prompt/src";
pub const PROMPT_EDIT: &str = "prompt/edit";
/// Native attention resolution per layer, as fractions of the render size.
pub const LAYER_DIVISORS: [(u32, usize); 2] = [(0, 2), (1, 4)];

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalOptions {
    pub seed: u64,
    pub views: usize,
    pub gaussians: usize,
    pub size: usize,
    pub focal: f64,
    pub camera_radius: f64,
}

impl BimodalOptions {
    pub fn new(seed: u64) -> Self {
        BimodalOptions { seed, views: 20, gaussians: 2000, size: 64, focal: 77.0, camera_radius: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    A,
    B,
}

pub struct Bimodal {
    pub scenario: Scenario,
    /// Per view, attention at the stored (sub-render) resolution.
    pub native_attention: Vec<BTreeMap<u32, ScalarMap>>,
    pub styles: Vec<Style>,
    pub synthetic: SyntheticEmbeddings,
    pub run_config: RunConfig,
    /// Fully edited scenes for style A and B.
    pub truth: [Scene; 2],
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

fn quantize(img: Image) -> Image {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    Image { pixels: img.pixels.into_iter().map(|p| p.map(q)).collect(), ..img }
}

pub fn style_of(index: usize) -> Style {
    if matches!(index % 5, 0 | 2) {
        Style::A
    } else {
        Style::B
    }
}

pub fn view_id(index: usize) -> String {
    format!("v{index:02}")
}

pub fn in_top_cap(g: &Gaussian) -> bool {
    g.mean[1] > CAP
}

pub fn in_bottom_cap(g: &Gaussian) -> bool {
    g.mean[1] < -CAP
}

fn sphere(opts: &BimodalOptions, rng: &mut ChaCha8Rng) -> Scene {
    let n = opts.gaussians;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let gaussians = (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            let mean = [r * phi.cos(), y, r * phi.sin()].map(f32_round);
            let lon = mean[2].atan2(mean[0]);
            let color = [0.0, 2.1, 4.2].map(|off: f64| {
                f32_round((0.45 + 0.2 * (3.0 * lon + off).sin() + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
            });
            Gaussian::isotropic(mean, f32_round(0.07), f32_round(0.8), color)
        })
        .collect();
    Scene::new(gaussians, [0.0; 3]).expect("fixture scene is valid")
}

fn recolor(scene: &Scene, style: Style) -> Scene {
    let mut out = scene.clone();
    out.edit(|gs| {
        for g in gs {
            if in_top_cap(g) {
                g.color = RED.map(f32_round);
            } else if style == Style::B && in_bottom_cap(g) {
                g.color = BLUE.map(f32_round);
            }
        }
    })
    .expect("recolor keeps gaussians valid");
    out
}

fn edited_region(scene: &Scene, style: Style) -> Vec<f64> {
    scene
        .gaussians()
        .iter()
        .map(|g| if in_top_cap(g) || (style == Style::B && in_bottom_cap(g)) { 1.0 } else { 0.0 })
        .collect()
}

fn ring_cameras(opts: &BimodalOptions) -> Vec<Camera> {
    (0..opts.views)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / opts.views as f64;
            let elev: f64 = if k % 2 == 0 { 0.25 } else { -0.25 };
            let r = opts.camera_radius;
            let eye = [r * elev.cos() * theta.cos(), r * elev.sin(), r * elev.cos() * theta.sin()];
            Camera::look_at(view_id(k), opts.size, opts.size, opts.focal, eye, [0.0; 3], [0.0, 1.0, 0.0])
                .expect("ring camera is valid")
        })
        .collect()
}

pub fn bimodal(opts: &BimodalOptions) -> splatedit_core::Result<Bimodal> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scene = sphere(opts, &mut rng);
    let truth = [recolor(&scene, Style::A), recolor(&scene, Style::B)];
    let cameras = ring_cameras(opts);
    let styles: Vec<Style> = (0..opts.views).map(style_of).collect();

    let mut views = Vec::with_capacity(cameras.len());
    let mut native_attention = Vec::with_capacity(cameras.len());
    for (camera, style) in cameras.into_iter().zip(&styles) {
        let src = quantize(render::render_color(&scene, &camera)?.0);
        let edit = quantize(render::render_color(&truth[*style as usize], &camera)?.0);
        let marked = scene.with_attn_scores(&edited_region(&scene, *style))?;
        let Rendered::Scalar(mask) = render::render(&marked, &camera, Field::AttnScore)?.0 else {
            unreachable!("scalar field renders a scalar map")
        };
        let mut native = BTreeMap::new();
        let mut attention = BTreeMap::new();
        for (layer, div) in LAYER_DIVISORS {
            let mut map = mask.resample(camera.width / div, camera.height / div);
            for v in &mut map.values {
                *v = f32_round((*v + rng.random_range(0.0..0.05)).max(0.0));
            }
            attention.insert(layer, map.resample(camera.width, camera.height));
            native.insert(layer, map);
        }
        native_attention.push(native);
        views.push(ViewData { camera, src, edit, attention });
    }

    let style_map: BTreeMap<String, Option<usize>> =
        styles.iter().enumerate().map(|(i, s)| (view_id(i), Some(*s as usize))).collect();
    let synthetic = SyntheticEmbeddings::new(opts.seed, style_map);
    let embeddings = synthetic.generate(PROMPT_SRC, PROMPT_EDIT);

    let run_config = RunConfig {
        key_view: Some(view_id(0)),
        iterations: 200,
        lr_color: 1.0,
        lr_opacity: 0.2,
        normalize_by_mass: true,
        seed: opts.seed,
        ..RunConfig::default()
    };

    Ok(Bimodal {
        scenario: Scenario {
            root: Default::default(),
            scene,
            views,
            layers: LAYER_DIVISORS.iter().map(|(l, _)| *l).collect(),
            embeddings,
            prompt_src: PROMPT_SRC.into(),
            prompt_edit: PROMPT_EDIT.into(),
        },
        native_attention,
        styles,
        synthetic,
        run_config,
        truth,
    })
}

impl Bimodal {
    /// Writes the scenario layout plus `run.json` and the synthetic
    /// embedding recipe.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_scenario(dir, &self.scenario, Some(&self.native_attention))?;
        std::fs::write(dir.join(SYNTHETIC_EMBEDDINGS_FILE), serde_json::to_string_pretty(&self.synthetic)?)?;
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&self.run_config)?)?;
        Ok(())
    }
}
