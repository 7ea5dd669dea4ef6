//! Embedding-direction evaluation metrics.
//!
//! * CLIP similarity: `cos(E_img(edit), E_txt(edit prompt))`.
//! * CTIDS: `cos(ΔI, ΔT)`, the same computation as the view alignment score.
//! * CDC: mean `cos(ΔI_v, ΔI_{v+1})` over consecutive views along the camera
//!   path (view id order).
//!
//! [`ColorHistogramEmbedder`] is a deterministic stand-in image encoder used
//! to score rendered outputs when no external encoder is available.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cscs::{alignment_score, edit_direction};
use crate::embedding::{edit_key, src_key, EmbeddingTable};
use crate::maps::Image;
use crate::math;
use crate::{Error, Result};

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("dimensions differ: {} vs {}", a.len(), b.len())));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = math::sqrt(na) * math::sqrt(nb);
    if !(denom > 0.0) {
        return Err(Error::invalid("cosine of a zero vector"));
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

pub fn clip_similarity(e_img_edit: &[f32], e_txt_edit: &[f32]) -> Result<f64> {
    cosine(e_img_edit, e_txt_edit)
}

/// Text-image direction similarity; shares its implementation with the view
/// alignment score.
pub fn ctids(d_text: &[f32], d_image: &[f32]) -> Result<f64> {
    Ok(alignment_score(d_image, d_text)?.value)
}

/// Direction consistency over an ordered sequence of image edit directions.
/// Near-zero directions are skipped; at least two must remain.
pub fn cdc(directions: &[Vec<f32>]) -> Result<f64> {
    let pairs = cdc_pairs(directions)?;
    Ok(pairs.iter().sum::<f64>() / pairs.len() as f64)
}

fn cdc_pairs(directions: &[Vec<f32>]) -> Result<Vec<f64>> {
    let valid: Vec<&Vec<f32>> =
        directions.iter().filter(|d| crate::embedding::norm_f32(d) > crate::cscs::DEGENERATE_NORM).collect();
    if valid.len() < 2 {
        return Err(Error::invalid(format!("direction consistency needs 2 edited views, got {}", valid.len())));
    }
    valid.windows(2).map(|w| cosine(w[0], w[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view_id: String,
    pub clip_similarity: f64,
    pub ctids: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub clip_similarity: f64,
    pub ctids: f64,
    pub cdc: f64,
    pub per_view: Vec<ViewMetrics>,
    /// `cos(ΔI_v, ΔI_{v+1})` for consecutive edited views.
    pub cdc_pairs: Vec<f64>,
}

impl MetricsReport {
    /// Metrics over `(view id, edited embedding, source embedding)` triples,
    /// in camera-path order.
    pub fn compute(views: &[(String, Vec<f32>, Vec<f32>)], txt_src: &[f32], txt_edit: &[f32]) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::invalid("no views to evaluate"));
        }
        let d_text = edit_direction(txt_edit, txt_src)?;
        let mut per_view = Vec::with_capacity(views.len());
        let mut directions = Vec::with_capacity(views.len());
        for (id, e_edit, e_src) in views {
            let d_img = edit_direction(e_edit, e_src)?;
            per_view.push(ViewMetrics {
                view_id: id.clone(),
                clip_similarity: clip_similarity(e_edit, txt_edit)?,
                ctids: ctids(&d_text, &d_img)?,
            });
            directions.push(d_img);
        }
        let cdc_pairs = cdc_pairs(&directions)?;
        let n = per_view.len() as f64;
        Ok(MetricsReport {
            clip_similarity: per_view.iter().map(|v| v.clip_similarity).sum::<f64>() / n,
            ctids: per_view.iter().map(|v| v.ctids).sum::<f64>() / n,
            cdc: cdc_pairs.iter().sum::<f64>() / cdc_pairs.len() as f64,
            per_view,
            cdc_pairs,
        })
    }

    /// Metrics of the edited candidates stored in an embedding table.
    pub fn from_table(
        table: &EmbeddingTable,
        view_ids: &[&str],
        prompt_src: &str,
        prompt_edit: &str,
    ) -> Result<Self> {
        let mut ids: Vec<&str> = view_ids.to_vec();
        ids.sort_unstable();
        let views = ids
            .iter()
            .map(|id| {
                Ok((String::from(*id), table.get(&edit_key(id))?.to_vec(), table.get(&src_key(id))?.to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        MetricsReport::compute(&views, table.get(prompt_src)?, table.get(prompt_edit)?)
    }
}

/// Deterministic image embedding: soft per-channel color histograms plus the
/// mean color, unit-normalized. View-independent enough to compare edit
/// directions across views of the same scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorHistogramEmbedder {
    pub bins: usize,
}

impl Default for ColorHistogramEmbedder {
    fn default() -> Self {
        ColorHistogramEmbedder { bins: 8 }
    }
}

impl ColorHistogramEmbedder {
    pub fn dim(&self) -> usize {
        3 * self.bins + 3
    }

    pub fn embed(&self, image: &Image) -> Vec<f32> {
        let bins = self.bins;
        let mut feat = vec![0.0f64; self.dim()];
        let n = image.pixels.len().max(1) as f64;
        for px in &image.pixels {
            for (c, v) in px.iter().enumerate() {
                // Triangular kernel between the two nearest bin centers.
                let pos = (v.clamp(0.0, 1.0) * bins as f64 - 0.5).clamp(0.0, (bins - 1) as f64);
                let lo = math::floor(pos) as usize;
                let hi = (lo + 1).min(bins - 1);
                let f = pos - lo as f64;
                feat[c * bins + lo] += (1.0 - f) / n;
                feat[c * bins + hi] += f / n;
                feat[3 * bins + c] += v / n;
            }
        }
        crate::embedding::normalized(&feat)
    }
}

/// Cosine between each view's rendered edit direction and the key view's
/// edit direction, under a stand-in encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyMetrics {
    /// Mean over views of `cos(E(final_v) − E(initial_v), E(edit_key) − E(src_key))`.
    pub proxy_ctids_key: f64,
    /// Direction consistency of the rendered edit directions.
    pub proxy_cdc: Option<f64>,
    pub per_view: Vec<f64>,
}

pub fn proxy_metrics(
    embedder: &ColorHistogramEmbedder,
    key_src: &Image,
    key_edit: &Image,
    views: &[(&Image, &Image)],
) -> Result<ProxyMetrics> {
    let key_dir = edit_direction(&embedder.embed(key_edit), &embedder.embed(key_src))?;
    let mut per_view = Vec::with_capacity(views.len());
    let mut dirs = Vec::with_capacity(views.len());
    for (initial, fin) in views {
        let d = edit_direction(&embedder.embed(fin), &embedder.embed(initial))?;
        per_view.push(ctids(&key_dir, &d)?);
        dirs.push(d);
    }
    let proxy_ctids_key = if per_view.is_empty() { 0.0 } else { per_view.iter().sum::<f64>() / per_view.len() as f64 };
    Ok(ProxyMetrics { proxy_ctids_key, proxy_cdc: cdc(&dirs).ok(), per_view })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(angle: f64) -> Vec<f32> {
        vec![libm::cos(angle) as f32, libm::sin(angle) as f32]
    }

    #[test]
    fn clip_similarity_cases() {
        assert!((clip_similarity(&[0.6, 0.8], &[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(clip_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(clip_similarity(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ctids_cases() {
        let d = [0.2f32, -0.4, 0.1];
        assert!((ctids(&d, &d).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f32> = d.iter().map(|x| -x).collect();
        assert!((ctids(&d, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdc_closed_forms() {
        let same = vec![unit(0.3); 5];
        assert!((cdc(&same).unwrap() - 1.0).abs() < 1e-9);
        let a = unit(0.3);
        let b: Vec<f32> = a.iter().map(|x| -x).collect();
        let alternating = vec![a.clone(), b.clone(), a, b];
        assert!((cdc(&alternating).unwrap() + 1.0).abs() < 1e-9);
        // Successive 60 degree turns.
        let chain = vec![vec![1.0f32, 1.0, 0.0], vec![1.0f32, 0.0, 1.0], vec![0.0f32, -1.0, 1.0]];
        assert!((cdc(&chain).unwrap() - 0.5).abs() < 1e-9);
        assert!(cdc(&[unit(0.0)]).is_err());
    }

    #[test]
    fn histogram_embedding_is_unit_and_color_sensitive() {
        let e = ColorHistogramEmbedder::default();
        let red = Image::filled(8, 8, [0.9, 0.1, 0.1]);
        let blue = Image::filled(8, 8, [0.1, 0.1, 0.9]);
        let a = e.embed(&red);
        assert_eq!(a.len(), e.dim());
        assert!((crate::embedding::norm_f32(&a) - 1.0).abs() < 1e-6);
        assert!(cosine(&a, &e.embed(&blue)).unwrap() < 0.9);
    }
}
