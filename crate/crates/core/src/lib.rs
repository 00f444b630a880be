//! Desk-scale laboratory for studying how point sampling interacts with
//! point-cloud GAN discriminators, generators, and evaluation metrics.
//!
//! The crate is organized as five subsystems:
//!
//! * [`geometry`] — point clouds, meshes, sampling procedures, density estimation,
//!   and a procedural shape generator used as a stand-in dataset.
//! * [`autodiff`] — a tape-based reverse-mode engine for dense `f64` matrices,
//!   with support for differentiating through gradients (needed for gradient
//!   penalties).
//! * [`networks`] — point-cloud discriminators, feature extractors, and
//!   generators built on the autodiff engine, plus weight serialization.
//! * [`metrics`] — Chamfer/EMD distances, distribution metrics (MMD, coverage),
//!   and Fréchet feature distances.
//! * [`experiments`] — training loops and the diagnostic experiments that tie
//!   the other subsystems together.

pub mod autodiff;
pub mod experiments;
pub mod geometry;
pub mod metrics;
pub mod networks;

mod error;

pub use error::{Error, Result};
