//! Joint identity and attribute recognition for person re-identification.
//!
//! * [`dataset`]: schemas, identity-level annotations, manifests, embedding
//!   files, statistics and a seeded synthetic generator.
//! * [`model`]: a feature transform feeding one identity head and M
//!   attribute heads, trained on `λ·L_id + mean(L_att)` with analytic gradients.
//! * [`trainer`]: mini-batch SGD with a step learning-rate schedule and the λ sweep.
//! * [`eval`]: blocked distance kernel, cross-camera CMC/mAP, camera-pair
//!   matrices, attribute accuracy, distractor scaling and attribute ablation.
//!
//! Data-parallel loops go through [`par::Exec`]; the `parallel` feature
//! (default) backs it with rayon.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
