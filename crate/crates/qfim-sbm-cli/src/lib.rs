//! Batch driver for the spin-boson QFIM library: a single-file TOML
//! configuration selects one of five commands, and every artifact a run
//! writes embeds the 12-hex-digit hash of that configuration so outputs
//! are traceable to their exact inputs.
//!
//! The driver is a library plus a thin binary so integration and
//! acceptance tests can call the sweep machinery in-process.

pub mod config;
pub mod dynamics;
pub mod fit;
pub mod journal;
pub mod lindblad_run;
pub mod statics;
pub mod validate;
