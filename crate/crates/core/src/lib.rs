//! Modelling collaboration formation at scientific conferences.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conference;
pub mod dynamics;
pub mod fitting;
pub mod interaction;
pub mod model_selection;
pub mod numeric;
pub mod potential;
pub mod scheduler;
pub mod stats;
pub mod synth;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
