//! Intelligence-inertia toolkit.
//!
//! - [`dynamics`]: the relativistic cost law and its low-velocity expansion.
//! - [`measurement`]: velocity tiers, disorder coefficients, warmup calibration.
//! - [`regulator`]: relativistic brake, coherence gating, geometric coupling.
//! - [`microsim`]: Monte Carlo collision model of the work law.
//! - [`trainer`]: desk-scale MLP harness and the experiment protocols.
//! - [`arena`]: classical vs relativistic cost-model adjudication.
//! - [`config`]: JSON experiment configuration and runners used by the CLI.
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arena;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod measurement;
pub mod microsim;
pub mod regulator;
pub mod seed;
pub mod trainer;
pub mod vector;

pub use error::{InertiaError, Result};
