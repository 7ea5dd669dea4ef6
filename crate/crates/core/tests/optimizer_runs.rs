mod common;

use std::collections::BTreeMap;

use splatedit_core::embedding::{edit_key, normalized, src_key, EmbeddingTable};
use splatedit_core::optimizer::{self, Ablation, Control, EditInputs, Progress, RunConfig, ViewData};
use splatedit_core::render;
use splatedit_core::{Camera, Error, Gaussian, Image, ScalarMap, Scene};

const SIZE: usize = 24;

fn ball() -> Scene {
    let mut gs = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let x = -0.6 + 0.3 * i as f64;
            let y = -0.6 + 0.3 * j as f64;
            gs.push(Gaussian::isotropic([x, y, 0.0], 0.18, 0.7, [0.5, 0.5, 0.5]));
        }
    }
    Scene::new(gs, [0.0; 3]).unwrap()
}

fn cameras() -> Vec<Camera> {
    (0..4)
        .map(|i| {
            let a = i as f64 * 0.4 - 0.6;
            let eye = [3.0 * a.sin(), 0.3, -3.0 * a.cos()];
            Camera::look_at(format!("v{i}"), SIZE, SIZE, 28.0, eye, [0.0; 3], [0.0, -1.0, 0.0]).unwrap()
        })
        .collect()
}

/// Edit images paint the upper half red; attention marks the same region.
fn inputs(scene: &Scene, edited: bool) -> EditInputs {
    let mut embeddings = EmbeddingTable::new(4);
    embeddings.insert("p_src", normalized(&[1.0, 0.0, 0.0, 0.0])).unwrap();
    embeddings.insert("p_edit", normalized(&[1.0, 1.0, 0.0, 0.0])).unwrap();
    let views = cameras()
        .into_iter()
        .enumerate()
        .map(|(i, camera)| {
            let src = render::render_color(scene, &camera).unwrap().0;
            let mut edit = src.clone();
            let mut attn = ScalarMap::filled(SIZE, SIZE, 0.02);
            if edited {
                for y in 0..SIZE / 2 {
                    for x in 0..SIZE {
                        let p = &mut edit.pixels[y * SIZE + x];
                        *p = [(p[0] + 0.4).min(1.0), p[1] * 0.5, p[2] * 0.5];
                        attn.values[y * SIZE + x] = 0.9;
                    }
                }
            }
            let spread = i as f64 * 0.2;
            embeddings.insert(src_key(camera.id.as_str()), normalized(&[1.0, 0.0, 0.1, spread])).unwrap();
            embeddings
                .insert(edit_key(camera.id.as_str()), normalized(&[1.0, 1.0 - spread, 0.1, spread]))
                .unwrap();
            let attention = BTreeMap::from([(0, attn.clone()), (1, attn.resample(SIZE / 2, SIZE / 2))]);
            ViewData { camera, src, edit, attention }
        })
        .collect();
    EditInputs { views, embeddings, prompt_src: "p_src".into(), prompt_edit: "p_edit".into() }
}

fn config(ablation: Ablation, iterations: u32) -> RunConfig {
    RunConfig {
        key_view: Some("v0".into()),
        iterations,
        lr_color: 1.0,
        lr_opacity: 0.2,
        ablation,
        ..RunConfig::default()
    }
}

#[test]
fn every_iteration_bumps_the_revision_once() {
    let scene = ball();
    let start = scene.revision();
    let data = inputs(&scene, true);
    let mut seen = Vec::new();
    let mut observer = |p: &Progress<'_>| {
        seen.push((p.log.t, p.scene.revision()));
        Control::Continue
    };
    let out = optimizer::run_edit(scene, &data, &config(Ablation::Full, 6), &mut observer).unwrap();
    let expect: Vec<(u32, u64)> = (1..=6).map(|t| (t, start + t as u64 - 1)).collect();
    assert_eq!(seen, expect);
    assert_eq!(out.scene.revision(), start + 6);
}

#[test]
fn only_2d_is_a_fixed_point_without_an_edit() {
    let scene = ball();
    let data = inputs(&scene, false);
    let cfg = RunConfig { key_view: None, ..config(Ablation::Only2d, 5) };
    let out = optimizer::run_edit(scene.clone(), &data, &cfg, &mut ()).unwrap();
    assert!(out.report.gap3d_skipped);
    assert!(out.report.gate_training_skipped);
    assert!(out.priors.is_empty());
    assert!(out.report.iterations.iter().all(|i| i.l_edit < 1e-12 && i.l_kl == 0.0));
    assert_eq!(out.scene.gaussians(), scene.gaussians());
}

#[test]
fn runs_are_deterministic_and_reduce_the_loss() {
    let scene = ball();
    let data = inputs(&scene, true);
    let cfg = config(Ablation::Full, 30);
    let a = optimizer::run_edit(scene.clone(), &data, &cfg, &mut ()).unwrap();
    let b = optimizer::run_edit(scene, &data, &cfg, &mut ()).unwrap();
    assert_eq!(a.report.loss_sequence(), b.report.loss_sequence());
    assert_eq!(a.scene.gaussians(), b.scene.gaussians());
    let first = a.report.iterations.first().unwrap().l_edit;
    let last = a.report.iterations.last().unwrap().l_edit;
    assert!(last < first, "{first} -> {last}");
    assert!(a.report.selection.as_ref().is_some_and(|s| s.rows[0].view_id == "v0"));
    assert!(a.report.final_metrics.is_some());
}

#[test]
fn ablation_flags() {
    let scene = ball();
    let data = inputs(&scene, true);
    for (mode, prior, gate, selection) in [
        (Ablation::Full, true, true, true),
        (Ablation::NoCscs, true, true, false),
        (Ablation::NoAfn, true, false, true),
        (Ablation::Only2d, false, false, false),
    ] {
        let out = optimizer::run_edit(scene.clone(), &data, &config(mode, 2), &mut ()).unwrap();
        let r = &out.report;
        assert_eq!(!r.gap3d_skipped, prior, "{mode:?}");
        assert_eq!(!r.gate_training_skipped, gate, "{mode:?}");
        assert_eq!(r.selection.is_some(), selection, "{mode:?}");
        if !gate {
            assert_eq!(r.fusion.layers.iter().map(|l| l.w).collect::<Vec<_>>(), vec![[0.0, 0.0]; 2], "{mode:?}");
        }
    }
}

#[test]
fn cancellation_stops_early() {
    let scene = ball();
    let data = inputs(&scene, true);
    let mut observer = |p: &Progress<'_>| if p.log.t == 3 { Control::Cancel } else { Control::Continue };
    let out = optimizer::run_edit(scene, &data, &config(Ablation::Full, 10), &mut observer).unwrap();
    assert!(out.report.cancelled);
    assert_eq!(out.report.iterations.len(), 3);
    assert!(out.report.final_metrics.is_none());
}

#[test]
fn non_finite_loss_is_reported() {
    let scene = ball();
    let data = inputs(&scene, true);
    let cfg = RunConfig { lambda_2d: f64::MAX, ..config(Ablation::NoCscs, 3) };
    let data = EditInputs {
        views: data
            .views
            .into_iter()
            .map(|mut v| {
                v.edit = Image::filled(SIZE, SIZE, [1.0; 3]);
                v.src = Image::filled(SIZE, SIZE, [1.0; 3]);
                v
            })
            .collect(),
        ..data
    };
    match optimizer::run_edit(scene, &data, &cfg, &mut ()) {
        Err(Error::NonFiniteLoss { iteration: 1, .. }) => {}
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn missing_layer_is_rejected() {
    let scene = ball();
    let data = inputs(&scene, true);
    let cfg = RunConfig { layers: vec![0, 7], ..config(Ablation::Full, 2) };
    assert!(matches!(optimizer::run_edit(scene, &data, &cfg, &mut ()), Err(Error::InvalidInput(_))));
}
