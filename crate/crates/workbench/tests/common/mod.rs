#![allow(dead_code)]

use std::path::Path;

use splatedit_workbench::fixture::{self, Bimodal, BimodalOptions};

/// A reduced bimodal fixture that runs a few iterations quickly.
pub fn small_options(seed: u64) -> BimodalOptions {
    BimodalOptions { gaussians: 500, size: 32, focal: 38.5, ..BimodalOptions::new(seed) }
}

pub fn write_small(dir: &Path, seed: u64) -> Bimodal {
    let fx = fixture::bimodal(&small_options(seed)).unwrap();
    fx.write(dir).unwrap();
    fx
}
