//! The editing loop.
//!
//! 1. Score views against the key view and pick weighted reference views.
//! 2. Build one attention prior per configured layer from those views.
//! 3. Each iteration, per view: render, project the prior through the same
//!    contribution buffer, fuse with the 2D maps, blend a supervision target
//!    from source and edited images under the fused mask, and take the L1
//!    editing loss. Then step the gate weights and the scene's colors and
//!    opacities.
//!
//! The supervision target is a stand-in for injecting the fused attention
//! into a diffusion editor: it is the only place where the fused attention
//! reaches the scene.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::afn::{self, FusionState, GateSample};
use crate::camera::Camera;
use crate::cscs::{self, Selection, SelectionParams};
use crate::embedding::EmbeddingTable;
use crate::gap3d::{self, AttentionPrior, PriorInput, PriorOptions};
use crate::maps::{Image, ScalarMap};
use crate::metrics::{self, ColorHistogramEmbedder, ProxyMetrics};
use crate::par;
use crate::render::{self, Gradients};
use crate::scene::Scene;
use crate::{Error, Result};

/// Opacity never drops below this during optimization.
pub const MIN_OPACITY: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Selection, prior, and gated fusion.
    #[default]
    Full,
    /// Prior averaged uniformly over all views; fusion unchanged.
    NoCscs,
    /// The projected prior replaces the 2D attention outright.
    NoAfn,
    /// 2D attention only; no prior is built.
    Only2d,
}

impl Ablation {
    pub fn uses_prior(self) -> bool {
        !matches!(self, Ablation::Only2d)
    }

    pub fn trains_gate(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoCscs)
    }

    pub fn uses_selection(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoAfn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub key_view: Option<String>,
    /// Reference view count; `⌈N/2⌉` when absent.
    pub k: Option<usize>,
    pub gamma_cscs: f64,
    pub soft_select: bool,
    pub bias_alpha: f64,
    pub layers: Vec<u32>,
    #[serde(rename = "T", alias = "iterations")]
    pub iterations: u32,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub lr_gate: f64,
    pub lambda_2d: f64,
    pub lambda_3d_init: f64,
    pub lambda_3d_final: f64,
    pub ablation: Ablation,
    /// `[width, height]`; camera resolution when absent.
    pub render_size: Option<[usize; 2]>,
    pub normalize_by_mass: bool,
    pub seed: u64,
    /// Snapshot cadence for intermediate dumps, in iterations.
    pub dump_every: Option<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            key_view: None,
            k: None,
            gamma_cscs: cscs::DEFAULT_GAMMA,
            soft_select: false,
            bias_alpha: 2.0,
            layers: vec![0, 1],
            iterations: 800,
            lr_color: 0.05,
            lr_opacity: 0.01,
            lr_gate: 0.5,
            lambda_2d: 1.0,
            lambda_3d_init: 0.5,
            lambda_3d_final: 0.05,
            ablation: Ablation::Full,
            render_size: None,
            normalize_by_mass: false,
            seed: 0,
            dump_every: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("T must be at least 1"));
        }
        for (name, lr) in [("lr_color", self.lr_color), ("lr_opacity", self.lr_opacity), ("lr_gate", self.lr_gate)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.lambda_2d >= 0.0 && self.lambda_3d_final >= 0.0 && self.lambda_3d_init >= self.lambda_3d_final) {
            return Err(Error::invalid("need lambda_2d ≥ 0 and lambda_3d_init ≥ lambda_3d_final ≥ 0"));
        }
        if !(self.bias_alpha >= 0.0 && self.bias_alpha.is_finite()) {
            return Err(Error::invalid("bias_alpha must be finite and nonnegative"));
        }
        if !(self.gamma_cscs > 0.0) {
            return Err(Error::invalid("gamma_cscs must be positive"));
        }
        if self.layers.is_empty() {
            return Err(Error::invalid("at least one attention layer is required"));
        }
        if self.ablation.uses_selection() && self.key_view.is_none() {
            return Err(Error::invalid("a key view is required unless ablation is no_cscs or only_2d"));
        }
        Ok(())
    }
}

/// Linear `λ3D` decay from `lambda_3d_init` at `t = 0` to `lambda_3d_final`
/// at `t = T`.
pub fn lambda_schedule(cfg: &RunConfig, t: u32) -> f64 {
    let frac = (t as f64 / cfg.iterations.max(1) as f64).min(1.0);
    cfg.lambda_3d_init + (cfg.lambda_3d_final - cfg.lambda_3d_init) * frac
}

/// Scales a map by its maximum into `[0, 1]`; an all-zero map stays zero.
pub fn normalize_by_max(map: &ScalarMap) -> ScalarMap {
    let max = map.max();
    if !(max > 0.0) {
        return ScalarMap::filled(map.width, map.height, 0.0);
    }
    ScalarMap { width: map.width, height: map.height, values: map.values.iter().map(|v| v / max).collect() }
}

/// `m·edit + (1 − m)·src` per pixel.
pub fn blend_target(mask: &ScalarMap, src: &Image, edit: &Image) -> Result<Image> {
    if !src.same_shape(edit) || mask.width != src.width || mask.height != src.height {
        return Err(Error::invalid(format!(
            "target inputs differ in shape: mask {}x{}, src {}x{}, edit {}x{}",
            mask.width, mask.height, src.width, src.height, edit.width, edit.height
        )));
    }
    let pixels = mask
        .values
        .iter()
        .zip(src.pixels.iter().zip(&edit.pixels))
        .map(|(m, (s, e))| {
            let m = m.clamp(0.0, 1.0);
            let mut out = [0.0; 3];
            for c in 0..3 {
                out[c] = (s[c] + m * (e[c] - s[c])).clamp(0.0, 1.0);
            }
            out
        })
        .collect();
    Ok(Image { width: src.width, height: src.height, pixels })
}

/// Supervision image for one fused map: the map, max-normalized, blends the
/// source toward the edited image.
pub fn supervision_target(fused: &ScalarMap, src: &Image, edit: &Image) -> Result<Image> {
    blend_target(&normalize_by_max(fused), src, edit)
}

/// Mean absolute error over pixels and channels.
pub fn editing_loss(render: &Image, target: &Image) -> Result<f64> {
    if !render.same_shape(target) {
        return Err(Error::invalid("render and target differ in shape"));
    }
    let n = (render.pixels.len() * 3).max(1) as f64;
    let total: f64 = render
        .pixels
        .iter()
        .zip(&target.pixels)
        .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs())
        .sum();
    Ok(total / n)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One view's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewData {
    pub camera: Camera,
    pub src: Image,
    pub edit: Image,
    /// 2D attention per layer.
    pub attention: BTreeMap<u32, ScalarMap>,
}

impl ViewData {
    pub fn id(&self) -> &str {
        &self.camera.id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditInputs {
    /// Camera-path order.
    pub views: Vec<ViewData>,
    pub embeddings: EmbeddingTable,
    pub prompt_src: String,
    pub prompt_edit: String,
}

impl EditInputs {
    pub fn view(&self, id: &str) -> Option<&ViewData> {
        self.views.iter().find(|v| v.id() == id)
    }

    pub fn view_ids(&self) -> Vec<&str> {
        self.views.iter().map(|v| v.id()).collect()
    }

    /// Alignment scores of every view against the prompt direction.
    pub fn scores(&self) -> Result<Vec<(String, cscs::Score)>> {
        cscs::score_views(&self.embeddings, self.view_ids(), &self.prompt_src, &self.prompt_edit)
    }

    pub fn select(&self, key_view: &str, params: &SelectionParams) -> Result<Selection> {
        cscs::select_reference_views(&self.scores()?, key_view, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub t: u32,
    pub l_edit: f64,
    pub l_kl: f64,
    pub l_total: f64,
    pub lambda_3d: f64,
    pub bias: f64,
    /// Mean gate value over views, layers and pixels; absent without a gate.
    pub mean_gate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSummary {
    pub layer: u32,
    pub uncovered: usize,
    pub max: f64,
    pub mean: f64,
    pub views: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ablation: Ablation,
    #[serde(rename = "T")]
    pub total_iterations: u32,
    pub iterations: Vec<IterationLog>,
    pub cancelled: bool,
    pub gap3d_skipped: bool,
    pub gate_training_skipped: bool,
    pub selection: Option<Selection>,
    pub priors: Vec<PriorSummary>,
    pub fusion: FusionState,
    pub final_metrics: Option<ProxyMetrics>,
    pub seed: u64,
    /// Filled in by the caller; the core has no clock.
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn loss_sequence(&self) -> Vec<(f64, f64, f64)> {
        self.iterations.iter().map(|i| (i.l_edit, i.l_kl, i.l_total)).collect()
    }
}

/// One view's state at an iteration boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSnapshot {
    pub view_id: String,
    pub render: Image,
    pub target: Image,
    /// Per configured layer, in `RunConfig::layers` order. Empty when unused.
    pub a3d: Vec<ScalarMap>,
    pub gate: Vec<ScalarMap>,
    pub fused: Vec<ScalarMap>,
}

pub struct Progress<'a> {
    pub log: &'a IterationLog,
    pub total: u32,
    pub layers: &'a [u32],
    pub views: &'a [ViewSnapshot],
    pub scene: &'a Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Cancel,
}

/// Called once per iteration, after the losses are computed and before the
/// parameter update.
pub trait RunObserver {
    fn on_iteration(&mut self, progress: &Progress<'_>) -> Control;
}

impl RunObserver for () {
    fn on_iteration(&mut self, _: &Progress<'_>) -> Control {
        Control::Continue
    }
}

impl<F: FnMut(&Progress<'_>) -> Control> RunObserver for F {
    fn on_iteration(&mut self, progress: &Progress<'_>) -> Control {
        self(progress)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scene: Scene,
    pub report: RunReport,
    pub priors: Vec<AttentionPrior>,
    pub initial_renders: Vec<Image>,
}

struct PreparedView<'a> {
    camera: Camera,
    src: Image,
    edit: Image,
    a2d: Vec<ScalarMap>,
    source: &'a ViewData,
}

fn prepare_views<'a>(inputs: &'a EditInputs, cfg: &RunConfig) -> Result<Vec<PreparedView<'a>>> {
    if inputs.views.is_empty() {
        return Err(Error::invalid("no views"));
    }
    inputs
        .views
        .iter()
        .map(|v| {
            let camera = match cfg.render_size {
                Some([w, h]) => v.camera.resized(w, h)?,
                None => v.camera.clone(),
            };
            let (w, h) = (camera.width, camera.height);
            let a2d = cfg
                .layers
                .iter()
                .map(|layer| {
                    let map = v
                        .attention
                        .get(layer)
                        .ok_or_else(|| Error::invalid(format!("view {}: no attention for layer {layer}", v.id())))?;
                    map.check_attention()?;
                    Ok(map.resample(w, h))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedView { src: v.src.resample(w, h), edit: v.edit.resample(w, h), camera, a2d, source: v })
        })
        .collect()
}

fn summarize(prior: &AttentionPrior) -> PriorSummary {
    let n = prior.scores.len().max(1) as f64;
    PriorSummary {
        layer: prior.layer,
        uncovered: prior.uncovered.len(),
        max: prior.scores.iter().copied().fold(0.0, f64::max),
        mean: prior.scores.iter().sum::<f64>() / n,
        views: prior.views.clone(),
    }
}

/// View index and weight.
type References = Vec<(usize, f64)>;

/// Weighted reference views according to the ablation mode.
fn reference_weights(inputs: &EditInputs, cfg: &RunConfig) -> Result<(Option<Selection>, References)> {
    if !cfg.ablation.uses_selection() {
        return Ok((None, (0..inputs.views.len()).map(|i| (i, 1.0)).collect()));
    }
    let key = cfg.key_view.as_deref().ok_or_else(|| Error::invalid("missing key view"))?;
    let mut params = SelectionParams::defaults_for(inputs.views.len());
    if let Some(k) = cfg.k {
        params.k = k;
    }
    params.gamma = cfg.gamma_cscs;
    params.soft_select = cfg.soft_select;
    let selection = inputs.select(key, &params)?;
    let refs = selection
        .selected()
        .map(|row| {
            let idx = inputs.views.iter().position(|v| v.id() == row.view_id).expect("selection row names a view");
            (idx, row.weight)
        })
        .collect();
    Ok((Some(selection), refs))
}

/// Builds one prior per configured layer from the scene's current state.
pub fn build_priors(
    scene: &Scene,
    inputs: &EditInputs,
    cfg: &RunConfig,
) -> Result<(Option<Selection>, Vec<AttentionPrior>)> {
    let views = prepare_views(inputs, cfg)?;
    build_priors_prepared(scene, inputs, &views, cfg)
}

fn build_priors_prepared(
    scene: &Scene,
    inputs: &EditInputs,
    views: &[PreparedView<'_>],
    cfg: &RunConfig,
) -> Result<(Option<Selection>, Vec<AttentionPrior>)> {
    let (selection, refs) = reference_weights(inputs, cfg)?;
    let buffers = par::map_ordered(&refs, |(idx, _)| render::rasterize(scene, &views[*idx].camera))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let options = PriorOptions { normalize_by_mass: cfg.normalize_by_mass };
    let priors = cfg
        .layers
        .iter()
        .enumerate()
        .map(|(li, &layer)| {
            let prior_inputs: Vec<PriorInput<'_>> = refs
                .iter()
                .zip(&buffers)
                .map(|((idx, w), buf)| PriorInput {
                    view_id: views[*idx].camera.id.as_str(),
                    weight: *w,
                    attention: &views[*idx].a2d[li],
                    contributions: buf,
                })
                .collect();
            gap3d::build_prior(scene.len(), layer, &prior_inputs, options)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((selection, priors))
}

struct ViewStep {
    snapshot: ViewSnapshot,
    l_edit: f64,
    l_kl: f64,
    gate_sum: f64,
    gate_cells: usize,
    upstream: Vec<ScalarMap>,
    grads: Gradients,
}

fn step_view(
    scene: &Scene,
    view: &PreparedView<'_>,
    priors: &[AttentionPrior],
    fusion: &FusionState,
    bias: f64,
    cfg: &RunConfig,
) -> Result<ViewStep> {
    let (render_img, buf) = render::render_color(scene, &view.camera)?;
    let mode = cfg.ablation;
    let n_layers = cfg.layers.len();

    let a3d: Vec<ScalarMap> = if mode.uses_prior() {
        priors.iter().map(|p| gap3d::project_prior_with(&buf, p)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut gates = Vec::new();
    let fused: Vec<ScalarMap> = match mode {
        Ablation::Full | Ablation::NoCscs => {
            let mut out = Vec::with_capacity(n_layers);
            for (li, &layer) in cfg.layers.iter().enumerate() {
                let g = afn::gate(&fusion.weights(layer)?, &view.a2d[li], &a3d[li], bias)?;
                out.push(afn::fuse(&g, &view.a2d[li], &a3d[li])?);
                gates.push(g);
            }
            out
        }
        Ablation::NoAfn => a3d.clone(),
        Ablation::Only2d => view.a2d.clone(),
    };

    // Mask: mean of max-normalized per-layer fused maps.
    let maxima: Vec<f64> = fused.iter().map(ScalarMap::max).collect();
    let mut mask = ScalarMap::filled(view.camera.width, view.camera.height, 0.0);
    for (f, max) in fused.iter().zip(&maxima) {
        if *max > 0.0 {
            for (m, v) in mask.values.iter_mut().zip(&f.values) {
                *m += v / max / n_layers as f64;
            }
        }
    }
    let target = blend_target(&mask, &view.src, &view.edit)?;
    let l_edit = editing_loss(&render_img, &target)?;

    let n = (view.camera.pixel_count() * 3) as f64;
    let residual: Vec<[f64; 3]> = render_img
        .pixels
        .iter()
        .zip(&target.pixels)
        .map(|(r, t)| {
            [
                cfg.lambda_2d * sign(r[0] - t[0]) / n,
                cfg.lambda_2d * sign(r[1] - t[1]) / n,
                cfg.lambda_2d * sign(r[2] - t[2]) / n,
            ]
        })
        .collect();
    let grads = render::backward(scene, &buf, &residual)?;

    let mut upstream = Vec::new();
    if mode.trains_gate() {
        // ∂L/∂target = −residual; ∂target/∂mask = edit − src;
        // ∂mask/∂fused_l = 1/(L·max_l) with the normalizer held fixed.
        let d_mask: Vec<f64> = residual
            .iter()
            .zip(view.src.pixels.iter().zip(&view.edit.pixels))
            .map(|(r, (s, e))| -(r[0] * (e[0] - s[0]) + r[1] * (e[1] - s[1]) + r[2] * (e[2] - s[2])))
            .collect();
        for max in &maxima {
            let scale = if *max > 0.0 { 1.0 / (max * n_layers as f64) } else { 0.0 };
            upstream.push(ScalarMap {
                width: view.camera.width,
                height: view.camera.height,
                values: d_mask.iter().map(|d| d * scale).collect(),
            });
        }
    }

    let mut l_kl = 0.0;
    if mode.uses_prior() {
        for (a, f) in a3d.iter().zip(&fused) {
            l_kl += afn::kl_attention(a, f)?;
        }
    }
    let gate_sum = gates.iter().map(ScalarMap::sum).sum();
    let gate_cells = gates.iter().map(ScalarMap::len).sum();

    Ok(ViewStep {
        snapshot: ViewSnapshot {
            view_id: view.camera.id.clone(),
            render: render_img,
            target,
            a3d,
            gate: gates,
            fused,
        },
        l_edit,
        l_kl,
        gate_sum,
        gate_cells,
        upstream,
        grads,
    })
}

/// Runs the full editing loop.
pub fn run_edit(
    scene: Scene,
    inputs: &EditInputs,
    cfg: &RunConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let views = prepare_views(inputs, cfg)?;
    let mut scene = scene;
    let total = cfg.iterations;

    let (selection, priors) = if cfg.ablation.uses_prior() {
        build_priors_prepared(&scene, inputs, &views, cfg)?
    } else {
        (None, Vec::new())
    };
    let mut fusion = FusionState::new(&cfg.layers, cfg.bias_alpha, total, cfg.lambda_2d, cfg.lambda_3d_init)?;
    let mut iterations = Vec::with_capacity(total as usize);
    let mut initial_renders: Vec<Image> = Vec::new();
    let mut cancelled = false;

    for t in 1..=total {
        let lambda_3d = lambda_schedule(cfg, t);
        fusion.t = t;
        fusion.lambda_3d = lambda_3d;
        let bias = fusion.bias()?;

        let steps = par::map_ordered(&views, |v| step_view(&scene, v, &priors, &fusion, bias, cfg))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let l_edit: f64 = steps.iter().map(|s| s.l_edit).sum();
        let l_kl: f64 = steps.iter().map(|s| s.l_kl).sum();
        let l_total = cfg.lambda_2d * l_edit + lambda_3d * l_kl;
        if !(l_edit.is_finite() && l_kl.is_finite() && l_total.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: t, detail: format!("edit {l_edit}, kl {l_kl}") });
        }
        let gate_cells: usize = steps.iter().map(|s| s.gate_cells).sum();
        let mean_gate =
            (gate_cells > 0).then(|| steps.iter().map(|s| s.gate_sum).sum::<f64>() / gate_cells as f64);
        let log = IterationLog { t, l_edit, l_kl, l_total, lambda_3d, bias, mean_gate };

        if t == 1 {
            initial_renders = steps.iter().map(|s| s.snapshot.render.clone()).collect();
        }
        let snapshots: Vec<ViewSnapshot> = steps.iter().map(|s| s.snapshot.clone()).collect();
        let control = observer.on_iteration(&Progress {
            log: &log,
            total,
            layers: &cfg.layers,
            views: &snapshots,
            scene: &scene,
        });
        iterations.push(log);
        if control == Control::Cancel {
            cancelled = true;
            break;
        }

        if cfg.ablation.trains_gate() {
            for (li, &layer) in cfg.layers.iter().enumerate() {
                let samples: Vec<GateSample<'_>> = steps
                    .iter()
                    .zip(&views)
                    .map(|(s, v)| GateSample { a2d: &v.a2d[li], a3d: &s.snapshot.a3d[li], upstream: &s.upstream[li] })
                    .collect();
                afn::gate_step(&mut fusion, layer, &samples, cfg.lr_gate)?;
            }
        }

        let mut grads = Gradients::zeros(scene.len());
        for s in &steps {
            grads.accumulate(&s.grads);
        }
        let color_delta: Vec<[f64; 3]> =
            grads.color.iter().map(|g| [-cfg.lr_color * g[0], -cfg.lr_color * g[1], -cfg.lr_color * g[2]]).collect();
        let opacity_delta: Vec<f64> = grads.opacity.iter().map(|g| -cfg.lr_opacity * g).collect();
        scene.apply_appearance_step(&color_delta, &opacity_delta, MIN_OPACITY);
    }

    let final_metrics = if cancelled { None } else { final_proxy_metrics(&scene, &views, &initial_renders, cfg)? };

    let report = RunReport {
        ablation: cfg.ablation,
        total_iterations: total,
        iterations,
        cancelled,
        gap3d_skipped: !cfg.ablation.uses_prior(),
        gate_training_skipped: !cfg.ablation.trains_gate(),
        selection,
        priors: priors.iter().map(summarize).collect(),
        fusion,
        final_metrics,
        seed: cfg.seed,
        wall_time_s: 0.0,
    };
    Ok(RunOutcome { scene, report, priors, initial_renders })
}

fn final_proxy_metrics(
    scene: &Scene,
    views: &[PreparedView<'_>],
    initial: &[Image],
    cfg: &RunConfig,
) -> Result<Option<ProxyMetrics>> {
    let Some(key) = cfg.key_view.as_deref() else {
        return Ok(None);
    };
    let Some(key_view) = views.iter().find(|v| v.source.id() == key) else {
        return Err(Error::invalid(format!("key view {key} not among views")));
    };
    let finals = par::map_ordered(views, |v| render::render_color(scene, &v.camera).map(|(img, _)| img))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&Image, &Image)> = initial.iter().zip(&finals).collect();
    let embedder = ColorHistogramEmbedder::default();
    metrics::proxy_metrics(&embedder, &key_view.src, &key_view.edit, &pairs).map(Some)
}
