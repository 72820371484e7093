//! Frequentist tolerance limits for Bayesian CNV calls on targeted amplicon
//! panels.

pub mod bayescnv;
pub mod comparators;
pub mod config;
pub mod error;
pub mod harness;
pub mod imputation;
pub mod panel_io;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod stratify;
pub mod synth;
pub mod tolerance;

pub use error::{Error, Result};
