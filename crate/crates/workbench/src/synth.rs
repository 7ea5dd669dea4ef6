//! Deterministic stand-in embeddings.
//!
//! Every view's source embedding is a shared base plus per-view noise. Its
//! edited embedding adds one fixed style direction (or nothing, for unedited
//! views). The prompt pair differs mostly along style 0, so style-0 views
//! score high and the other style scores clearly lower.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use splatedit_core::embedding::{edit_key, normalized, src_key, EmbeddingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEmbeddings {
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Style index per view id; `null` marks an unedited view.
    pub styles: BTreeMap<String, Option<usize>>,
    #[serde(default = "default_strength")]
    pub style_strength: f64,
    #[serde(default = "default_noise")]
    pub view_noise: f64,
}

fn default_dim() -> usize {
    64
}

fn default_strength() -> f64 {
    0.6
}

fn default_noise() -> f64 {
    0.15
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| {
        let z: f64 = StandardNormal.sample(&mut *rng);
        scale * z / (dim as f64).sqrt()
    }).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

impl SyntheticEmbeddings {
    pub fn new(seed: u64, styles: BTreeMap<String, Option<usize>>) -> Self {
        SyntheticEmbeddings {
            seed,
            dim: default_dim(),
            styles,
            style_strength: default_strength(),
            view_noise: default_noise(),
        }
    }

    fn style_count(&self) -> usize {
        self.styles.values().flatten().map(|s| s + 1).max().unwrap_or(0).max(2)
    }

    pub fn generate(&self, prompt_src: &str, prompt_edit: &str) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dim = self.dim;
        let base = gaussian_vec(&mut rng, dim, 1.0);
        let styles: Vec<Vec<f64>> =
            (0..self.style_count()).map(|_| unit(&gaussian_vec(&mut rng, dim, 1.0))).collect();

        let mut table = EmbeddingTable::new(dim);
        let text_src = unit(&gaussian_vec(&mut rng, dim, 1.0));
        let text_noise = gaussian_vec(&mut rng, dim, 0.1);
        let shift: Vec<f64> = styles[0].iter().zip(&text_noise).map(|(d, n)| self.style_strength * d + n).collect();
        table.insert(prompt_src, normalized(&text_src)).expect("fresh id");
        table.insert(prompt_edit, normalized(&add(&text_src, &shift))).expect("fresh id");

        for (id, style) in &self.styles {
            let noise = gaussian_vec(&mut rng, dim, self.view_noise);
            let src = add(&base, &noise);
            let edit = match style {
                Some(s) => {
                    let jitter = gaussian_vec(&mut rng, dim, 0.05);
                    let d: Vec<f64> = styles[*s].iter().zip(&jitter).map(|(d, j)| self.style_strength * d + j).collect();
                    add(&src, &d)
                }
                None => src.clone(),
            };
            table.insert(src_key(id), normalized(&src)).expect("fresh id");
            table.insert(edit_key(id), normalized(&edit)).expect("fresh id");
        }
        table
    }
}
