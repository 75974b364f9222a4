//! Medoid prototype alignment for cross-domain intrusion detection.
//!
//! Two feature domains with different widths are standardized and projected
//! into a shared space of dimension `d`, summarized by K-Medoids prototypes,
//! and a small encoder/classifier is trained on labeled source data and
//! unlabeled target data with a prototype alignment term and a target
//! entropy term.

pub mod battery;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod medoids;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod pipeline;

pub use error::{ErrorClass, MpaError, Result};
