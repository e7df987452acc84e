//! Feedback-linearizing supply-pressure control for a self-energizing
//! electro-hydraulic brake: plant model, normal form, Lie-derivative oracle,
//! pole placement with a full-order observer, and closed-loop simulation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fbl;
pub mod linear_control;
pub mod metrics;
pub mod normal_form;
pub mod oracle;
pub mod plant;
pub mod report;
pub mod sim;

pub use error::{BrakeError, Result};
