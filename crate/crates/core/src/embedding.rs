//! Identifier → unit vector table in a shared image/text embedding space.
//!
//! Image embeddings for a view use the keys `src/<view>` and `edit/<view>`;
//! prompts use whatever ids the scenario names.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

pub fn src_key(view_id: &str) -> String {
    format!("src/{view_id}")
}

pub fn edit_key(view_id: &str) -> String {
    format!("edit/{view_id}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
    // Insertion order, kept so serialization is stable.
    order: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, entries: BTreeMap::new(), order: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::invalid(format!(
                "embedding {id} has dimension {}, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        let norm = norm_f32(&vector);
        if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(Error::invalid(format!("embedding {id} has norm {norm}, expected unit")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate embedding id {id}")));
        }
        self.entries.insert(id.clone(), vector);
        self.order.push(id);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&[f32]> {
        self.entries
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("no embedding for {id}")))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.order.iter().map(move |id| (id.as_str(), self.entries[id].as_slice()))
    }
}

pub fn norm_f32(v: &[f32]) -> f64 {
    math::sqrt(v.iter().map(|x| (*x as f64) * (*x as f64)).sum())
}

/// Scales to unit length; zero vectors are returned unchanged.
pub fn normalized(v: &[f64]) -> Vec<f32> {
    let n = math::sqrt(v.iter().map(|x| x * x).sum());
    if n == 0.0 {
        return v.iter().map(|x| *x as f32).collect();
    }
    v.iter().map(|x| (x / n) as f32).collect()
}
