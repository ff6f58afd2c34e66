//! Quantitative phase imaging engine.
//!
//! Synthesizes aberrated off-axis holograms, retrieves and unwraps complex
//! fields, corrects system aberrations, reconstructs refractive-index
//! tomograms and scores corrected fields against ground truth.

// Negated comparisons reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aberration;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod field;
pub mod holography;
pub mod metrics;
pub mod odt;
pub mod phantom;
pub mod registry;
pub mod unwrap;

pub use error::{Error, Result};
pub use field::{ComplexField, FieldMeta, Role};
