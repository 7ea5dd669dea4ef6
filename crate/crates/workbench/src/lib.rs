//! Workbench around `splatedit-core`: binary formats, scenario directories,
//! the bimodal synthetic fixture, a FIFO job runner, and an HTTP service.

pub mod artifacts;
pub mod export;
pub mod fixture;
pub mod formats;
pub mod imageio;
pub mod jobs;
pub mod scenario;
pub mod service;
pub mod synth;
