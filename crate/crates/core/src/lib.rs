#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Long-run optimal portfolios, risk premia and certainty-equivalent loss
//! bounds for diffusion market models.
//!
//! Rates and drifts are per month throughout.

pub mod calibration;
pub mod closed_form;
pub mod config;
pub mod eigen1d;
pub mod error;
pub mod horizon;
pub mod linalg;
pub mod model;
pub mod optimality;
pub mod par;
pub mod quadrature;
pub mod riccati;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{CirModel, KimOmbergModel, LinearDiffusionModel, MarketModel, Policy, PolicyKind, Preferences};
