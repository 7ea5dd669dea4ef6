//! Attention-guided, multi-view consistent editing of 3D Gaussian splatting
//! scenes.
//!
//! The crate is `no_std` (with `alloc`) at its core. The `std` feature only
//! unlocks `rayon` tile/view parallelism through the `parallel` feature; all
//! float math goes through `libm`, so results are bit-identical with and
//! without it.
//!
//! Pipeline, bottom-up:
//!
//! * [`scene`] and [`camera`]: Gaussians, covariance assembly, pinhole views.
//! * [`render`]: depth-sorted alpha compositing into a [`render::ContributionBuffer`]
//!   plus analytic color/opacity gradients.
//! * [`cscs`]: embedding-space scoring of edited views against a user key view.
//! * [`gap3d`]: weighted unprojection of 2D attention onto Gaussians.
//! * [`afn`]: gated 2D/3D attention fusion with a decaying bias and KL term.
//! * [`optimizer`]: the editing loop tying everything together.
//! * [`metrics`]: embedding-direction evaluation metrics.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod afn;
pub mod camera;
pub mod cscs;
pub mod embedding;
mod error;
pub mod gap3d;
pub mod linalg;
pub mod maps;
mod math;
pub mod metrics;
pub mod optimizer;
mod par;
pub mod render;
pub mod scene;

pub use camera::Camera;
pub use error::{Error, Result};
pub use maps::{Image, ScalarMap};
pub use scene::{Gaussian, Scene};
