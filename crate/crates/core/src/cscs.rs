//! Embedding-space semantic consistency selection.
//!
//! Each edited view is scored by the cosine between its image edit direction
//! `ΔI_v = E(edit_v) − E(src_v)` and the prompt direction `ΔT`. Views whose
//! score deviates least from the user's key view become reference views, with
//! weight `exp(−γ·|s_v − s_key|)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::{edit_key, src_key, EmbeddingTable};
use crate::math;
use crate::{Error, Result};

/// Below this norm an edit direction is treated as "no edit".
pub const DEGENERATE_NORM: f64 = 1e-12;
pub const DEFAULT_GAMMA: f64 = 10.0;

/// `e_edit − e_src`, componentwise, not renormalized.
pub fn edit_direction(e_edit: &[f32], e_src: &[f32]) -> Result<Vec<f32>> {
    if e_edit.len() != e_src.len() {
        return Err(Error::invalid(format!(
            "embedding dimensions differ: {} vs {}",
            e_edit.len(),
            e_src.len()
        )));
    }
    Ok(e_edit.iter().zip(e_src).map(|(a, b)| a - b).collect())
}

/// Cosine score, flagged when the image direction was degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// `‖ΔI‖` was below [`DEGENERATE_NORM`]; `value` is then defined as 0.
    pub unedited: bool,
}

/// Cosine similarity of an image edit direction with a text edit direction.
pub fn alignment_score(d_image: &[f32], d_text: &[f32]) -> Result<Score> {
    if d_image.len() != d_text.len() {
        return Err(Error::invalid(format!(
            "direction dimensions differ: {} vs {}",
            d_image.len(),
            d_text.len()
        )));
    }
    let mut dot = 0.0f64;
    let mut ni = 0.0f64;
    let mut nt = 0.0f64;
    for (a, b) in d_image.iter().zip(d_text) {
        let (a, b) = (*a as f64, *b as f64);
        dot += a * b;
        ni += a * a;
        nt += b * b;
    }
    let (ni, nt) = (math::sqrt(ni), math::sqrt(nt));
    if !(nt > DEGENERATE_NORM) {
        return Err(Error::invalid("text edit direction is degenerate (identical prompts?)"));
    }
    if !(ni > DEGENERATE_NORM) {
        return Ok(Score { value: 0.0, unedited: true });
    }
    Ok(Score { value: (dot / (ni * nt)).clamp(-1.0, 1.0), unedited: false })
}

/// One row of the selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewAlignment {
    pub view_id: String,
    pub s_v: f64,
    pub delta_s: f64,
    pub weight: f64,
    pub selected: bool,
    #[serde(default)]
    pub unedited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// Number of reference views, key view included.
    pub k: usize,
    pub gamma: f64,
    /// Keep every view (weighted) instead of cutting at `k`.
    #[serde(default)]
    pub soft_select: bool,
}

impl SelectionParams {
    /// `k = ⌈n/2⌉`, `γ = 10`, hard cut.
    pub fn defaults_for(n_views: usize) -> Self {
        SelectionParams { k: n_views.div_ceil(2).max(1), gamma: DEFAULT_GAMMA, soft_select: false }
    }
}

/// Ranked selection over every candidate view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub key_view: String,
    pub s_key: f64,
    pub rows: Vec<ViewAlignment>,
}

impl Selection {
    pub fn selected(&self) -> impl Iterator<Item = &ViewAlignment> {
        self.rows.iter().filter(|r| r.selected)
    }

    pub fn unedited(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().filter(|r| r.unedited).map(|r| r.view_id.as_str())
    }
}

/// Ranks all views by `Δs` against the key view and selects the top `k`.
///
/// The key view is always rank 1 with `Δs = 0`, `w = 1`; the rest are ordered
/// by `Δs` ascending, ties broken by view id.
pub fn select_reference_views(
    scores: &[(String, Score)],
    key_view: &str,
    params: &SelectionParams,
) -> Result<Selection> {
    if params.k < 1 || params.k > scores.len() {
        return Err(Error::invalid(format!("k = {} outside 1..={}", params.k, scores.len())));
    }
    if !(params.gamma > 0.0 && params.gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma = {} must be positive", params.gamma)));
    }
    let s_key = scores
        .iter()
        .find(|(id, _)| id == key_view)
        .map(|(_, s)| s.value)
        .ok_or_else(|| Error::invalid(format!("key view {key_view} not among candidates")))?;

    let mut rows: Vec<ViewAlignment> = scores
        .iter()
        .map(|(id, s)| {
            let delta_s = if id == key_view { 0.0 } else { (s.value - s_key).abs() };
            ViewAlignment {
                view_id: id.clone(),
                s_v: s.value,
                delta_s,
                weight: math::exp(-params.gamma * delta_s),
                selected: false,
                unedited: s.unedited,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.view_id != key_view)
            .cmp(&(b.view_id != key_view))
            .then(a.delta_s.total_cmp(&b.delta_s))
            .then_with(|| a.view_id.cmp(&b.view_id))
    });
    let keep = if params.soft_select { rows.len() } else { params.k };
    for row in rows.iter_mut().take(keep) {
        row.selected = true;
    }
    Ok(Selection { key_view: key_view.into(), s_key, rows })
}

/// Scores every view from an embedding table: `s_v = cos(ΔI_v, ΔT)`.
pub fn score_views<'a>(
    table: &EmbeddingTable,
    view_ids: impl IntoIterator<Item = &'a str>,
    prompt_src: &str,
    prompt_edit: &str,
) -> Result<Vec<(String, Score)>> {
    let d_text = edit_direction(table.get(prompt_edit)?, table.get(prompt_src)?)?;
    view_ids
        .into_iter()
        .map(|id| {
            let d_img = edit_direction(table.get(&edit_key(id))?, table.get(&src_key(id))?)?;
            Ok((String::from(id), alignment_score(&d_img, &d_text)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(v: f64) -> Score {
        Score { value: v, unedited: false }
    }

    fn named(list: &[(&str, f64)]) -> Vec<(String, Score)> {
        list.iter().map(|(id, v)| (String::from(*id), s(*v))).collect()
    }

    #[test]
    fn edit_direction_cases() {
        assert_eq!(edit_direction(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(edit_direction(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0, -1.0]);
        assert!(edit_direction(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn alignment_cases() {
        let d = [0.3f32, -0.2, 0.5];
        assert!((alignment_score(&d, &d).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(alignment_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
        let twice: Vec<f32> = d.iter().map(|x| 2.0 * x).collect();
        assert!((alignment_score(&twice, &d).unwrap().value - 1.0).abs() < 1e-12);

        let zero = alignment_score(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(zero.unedited && zero.value == 0.0);
        assert!(alignment_score(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn key_view_anchor_and_half_weight() {
        let gamma = 10.0;
        let ln2 = core::f64::consts::LN_2;
        let scores = named(&[("key", 0.5), ("a", 0.5 + ln2 / gamma), ("b", 0.1)]);
        let sel =
            select_reference_views(&scores, "key", &SelectionParams { k: 3, gamma, soft_select: false }).unwrap();
        assert_eq!(sel.rows[0].view_id, "key");
        assert_eq!(sel.rows[0].delta_s, 0.0);
        assert_eq!(sel.rows[0].weight, 1.0);
        assert!((sel.rows[1].weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spec_ranking_example() {
        let scores = named(&[("key", 0.8), ("a", 0.79), ("b", 0.5), ("c", 0.2)]);
        let sel = select_reference_views(&scores, "key", &SelectionParams { k: 2, gamma: 10.0, soft_select: false })
            .unwrap();
        let picked: Vec<&str> = sel.selected().map(|r| r.view_id.as_str()).collect();
        assert_eq!(picked, ["key", "a"]);
        assert_eq!(sel.rows.len(), 4);
    }

    #[test]
    fn soft_select_keeps_everything() {
        let scores = named(&[("key", 0.8), ("a", 0.79), ("b", 0.5)]);
        let sel =
            select_reference_views(&scores, "key", &SelectionParams { k: 1, gamma: 10.0, soft_select: true }).unwrap();
        assert_eq!(sel.selected().count(), 3);
    }

    #[test]
    fn key_stays_first_on_ties() {
        let scores = named(&[("a", 0.4), ("z", 0.4)]);
        let sel = select_reference_views(&scores, "z", &SelectionParams::defaults_for(2)).unwrap();
        assert_eq!(sel.rows[0].view_id, "z");
        assert_eq!(sel.rows[1].delta_s, 0.0);
    }

    #[test]
    fn invalid_params() {
        let scores = named(&[("key", 0.8), ("a", 0.79)]);
        let p = |k, gamma| SelectionParams { k, gamma, soft_select: false };
        assert!(select_reference_views(&scores, "key", &p(0, 1.0)).is_err());
        assert!(select_reference_views(&scores, "key", &p(3, 1.0)).is_err());
        assert!(select_reference_views(&scores, "key", &p(1, 0.0)).is_err());
        assert!(select_reference_views(&scores, "nope", &p(1, 1.0)).is_err());
    }

    #[test]
    fn defaults() {
        assert_eq!(SelectionParams::defaults_for(20).k, 10);
        assert_eq!(SelectionParams::defaults_for(7).k, 4);
        assert_eq!(SelectionParams::defaults_for(7).gamma, 10.0);
    }
}
