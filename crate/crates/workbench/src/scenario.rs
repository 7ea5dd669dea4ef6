//! Scenario directory loading.
//!
//! ```text
//! <root>/scene.gsb
//! <root>/cameras.json
//! <root>/images/src/<id>.png
//! <root>/images/edit/<id>.png
//! <root>/attn/<id>_l<layer>.atn
//! <root>/embeddings.emb            (or synthetic_embeddings.json)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splatedit_core::embedding::{edit_key, src_key, EmbeddingTable};
use splatedit_core::optimizer::{EditInputs, ViewData};
use splatedit_core::{Camera, Scene};
use thiserror::Error;

use crate::formats::{self, FileError};
use crate::imageio;
use crate::synth::SyntheticEmbeddings;

pub const SCENE_FILE: &str = "scene.gsb";
pub const CAMERAS_FILE: &str = "cameras.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb";
pub const SYNTHETIC_EMBEDDINGS_FILE: &str = "synthetic_embeddings.json";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{0}")]
    Invalid(String),
}

impl LoadError {
    fn invalid(msg: impl Into<String>) -> Self {
        LoadError::Invalid(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 3×4 `[R | t]`.
    pub world_to_cam: [f64; 12],
}

impl CameraEntry {
    pub fn from_camera(cam: &Camera) -> Self {
        let r = cam.rotation;
        let t = cam.translation;
        CameraEntry {
            id: cam.id.clone(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            world_to_cam: [
                r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1], r[2][2], t[2],
            ],
        }
    }

    pub fn to_camera(&self) -> splatedit_core::Result<Camera> {
        let m = &self.world_to_cam;
        Camera::new(
            self.id.clone(),
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            [m[3], m[7], m[11]],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamerasFile {
    pub views: Vec<CameraEntry>,
    pub prompt_src_id: String,
    pub prompt_edit_id: String,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub root: PathBuf,
    pub scene: Scene,
    /// In `cameras.json` order; attention maps already at camera resolution.
    pub views: Vec<ViewData>,
    pub layers: Vec<u32>,
    pub embeddings: EmbeddingTable,
    pub prompt_src: String,
    pub prompt_edit: String,
}

impl Scenario {
    pub fn view(&self, id: &str) -> Option<&ViewData> {
        self.views.iter().find(|v| v.camera.id == id)
    }

    pub fn view_ids(&self) -> Vec<&str> {
        self.views.iter().map(|v| v.camera.id.as_str()).collect()
    }

    pub fn edit_inputs(&self) -> EditInputs {
        EditInputs {
            views: self.views.clone(),
            embeddings: self.embeddings.clone(),
            prompt_src: self.prompt_src.clone(),
            prompt_edit: self.prompt_edit.clone(),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => LoadError::Missing(path.to_path_buf()),
        _ => LoadError::Schema { path: path.to_path_buf(), message: e.to_string() },
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| LoadError::Schema {
        path: path.to_path_buf(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

fn require(path: PathBuf) -> Result<PathBuf, LoadError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(LoadError::Missing(path))
    }
}

fn load_image(path: PathBuf) -> Result<splatedit_core::Image, LoadError> {
    let path = require(path)?;
    imageio::load_png(&path).map_err(|source| LoadError::Image { path, source })
}

/// Layer indices present for one view, from `attn/<id>_l<layer>.atn`.
fn discover_layers(attn_dir: &Path, id: &str) -> Result<BTreeSet<u32>, LoadError> {
    let prefix = format!("{id}_l");
    let entries = std::fs::read_dir(attn_dir).map_err(|_| LoadError::Missing(attn_dir.to_path_buf()))?;
    let mut layers = BTreeSet::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(layer) = name.strip_prefix(&prefix).and_then(|rest| rest.strip_suffix(".atn")) {
            if let Ok(l) = layer.parse::<u32>() {
                layers.insert(l);
            }
        }
    }
    Ok(layers)
}

pub fn load_scenario(root: &Path) -> Result<Scenario, LoadError> {
    let cameras: CamerasFile = read_json(&root.join(CAMERAS_FILE))?;
    let scene = formats::load_scene(&require(root.join(SCENE_FILE))?)?;
    if cameras.views.is_empty() {
        return Err(LoadError::invalid(format!("{CAMERAS_FILE} lists no views")));
    }
    let mut seen = BTreeSet::new();
    for v in &cameras.views {
        if !seen.insert(v.id.as_str()) {
            return Err(LoadError::invalid(format!("duplicate view id {}", v.id)));
        }
    }

    let attn_dir = root.join("attn");
    let mut layer_set: Option<BTreeSet<u32>> = None;
    let mut views = Vec::with_capacity(cameras.views.len());
    for entry in &cameras.views {
        let camera = entry.to_camera().map_err(|e| LoadError::invalid(format!("camera {}: {e}", entry.id)))?;
        let src = load_image(root.join("images/src").join(format!("{}.png", entry.id)))?;
        let edit = load_image(root.join("images/edit").join(format!("{}.png", entry.id)))?;
        for (kind, img) in [("source", &src), ("edited", &edit)] {
            if img.width != camera.width || img.height != camera.height {
                return Err(LoadError::invalid(format!(
                    "view {}: {kind} image is {}x{}, camera is {}x{}",
                    entry.id, img.width, img.height, camera.width, camera.height
                )));
            }
        }
        let layers = discover_layers(&attn_dir, &entry.id)?;
        match &layer_set {
            None => layer_set = Some(layers.clone()),
            Some(expected) if *expected != layers => {
                return Err(LoadError::invalid(format!(
                    "view {} has attention layers {layers:?}, expected {expected:?}",
                    entry.id
                )))
            }
            _ => {}
        }
        let mut attention = BTreeMap::new();
        for layer in &layers {
            let map = formats::load_atn(&attn_dir.join(format!("{}_l{layer}.atn", entry.id)))?;
            map.check_attention().map_err(|e| LoadError::invalid(format!("view {} layer {layer}: {e}", entry.id)))?;
            attention.insert(*layer, map.resample(camera.width, camera.height));
        }
        views.push(ViewData { camera, src, edit, attention });
    }
    let layers: Vec<u32> = layer_set.unwrap_or_default().into_iter().collect();
    if layers.is_empty() {
        return Err(LoadError::Missing(attn_dir.join(format!("{}_l0.atn", cameras.views[0].id))));
    }

    let embeddings = load_embeddings(root, &cameras)?;
    for id in [&cameras.prompt_src_id, &cameras.prompt_edit_id] {
        if !embeddings.contains(id) {
            return Err(LoadError::invalid(format!("no embedding for prompt {id}")));
        }
    }
    for v in &cameras.views {
        for key in [src_key(&v.id), edit_key(&v.id)] {
            if !embeddings.contains(&key) {
                return Err(LoadError::invalid(format!("no embedding for {key}")));
            }
        }
    }

    Ok(Scenario {
        root: root.to_path_buf(),
        scene,
        views,
        layers,
        embeddings,
        prompt_src: cameras.prompt_src_id,
        prompt_edit: cameras.prompt_edit_id,
    })
}

fn load_embeddings(root: &Path, cameras: &CamerasFile) -> Result<EmbeddingTable, LoadError> {
    let emb = root.join(EMBEDDINGS_FILE);
    if emb.is_file() {
        return Ok(formats::load_emb(&emb)?);
    }
    let synth_path = root.join(SYNTHETIC_EMBEDDINGS_FILE);
    if !synth_path.is_file() {
        return Err(LoadError::Missing(emb));
    }
    let synth: SyntheticEmbeddings = read_json(&synth_path)?;
    if let Some(v) = cameras.views.iter().find(|v| !synth.styles.contains_key(&v.id)) {
        return Err(LoadError::Schema {
            path: synth_path,
            message: format!("no style entry for view {}", v.id),
        });
    }
    Ok(synth.generate(&cameras.prompt_src_id, &cameras.prompt_edit_id))
}

/// Writes a scenario's files; the inverse of [`load_scenario`] for f32- and
/// 8-bit-representable data.
pub fn write_scenario(dir: &Path, scenario: &Scenario, native_attention: Option<&[BTreeMap<u32, splatedit_core::ScalarMap>]>) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir.join("images/src"))?;
    std::fs::create_dir_all(dir.join("images/edit"))?;
    std::fs::create_dir_all(dir.join("attn"))?;
    formats::save_scene(&scenario.scene, &dir.join(SCENE_FILE))?;
    let cameras = CamerasFile {
        views: scenario.views.iter().map(|v| CameraEntry::from_camera(&v.camera)).collect(),
        prompt_src_id: scenario.prompt_src.clone(),
        prompt_edit_id: scenario.prompt_edit.clone(),
    };
    std::fs::write(dir.join(CAMERAS_FILE), serde_json::to_string_pretty(&cameras)?)?;
    for (i, v) in scenario.views.iter().enumerate() {
        let id = &v.camera.id;
        imageio::save_png(&v.src, &dir.join("images/src").join(format!("{id}.png")))?;
        imageio::save_png(&v.edit, &dir.join("images/edit").join(format!("{id}.png")))?;
        let maps = native_attention.map(|n| &n[i]).unwrap_or(&v.attention);
        for (layer, map) in maps {
            formats::save_atn(map, &dir.join("attn").join(format!("{id}_l{layer}.atn")))?;
        }
    }
    formats::save_emb(&scenario.embeddings, &dir.join(EMBEDDINGS_FILE))?;
    Ok(())
}
