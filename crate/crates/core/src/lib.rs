//! Usage-based insurance analytics toolkit.
//!
//! The crate turns raw telematics event logs into per-driver driving-style
//! features, labels claims by severity, fits logistic accident-probability
//! models and evaluates them. A synthetic population generator with planted
//! ground truth closes the loop so the whole chain can be checked end to end.
//!
//! Module map:
//!
//! - [`ingest`]: JSON-lines event log parsing and validation
//! - [`trips`]: trip segmentation and hourly rollups
//! - [`features`]: indicator catalog per device and window
//! - [`labeling`]: claim severity classes and binary targets
//! - [`glm`]: logistic regression fitting, inference, selection and scoring
//! - [`eval`]: ROC AUC, splits, ablation and descriptive reports
//! - [`synthgen`]: synthetic population with planted coefficients
//! - [`cli`]: command-line orchestration

pub mod calendar;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod glm;
pub mod ingest;
pub mod io;
pub mod labeling;
pub mod synthgen;
pub mod trips;

pub use error::{Error, Result};

/// Version string stamped into every artifact.
pub const TOOL_VERSION: &str = concat!("ubi ", env!("CARGO_PKG_VERSION"));
