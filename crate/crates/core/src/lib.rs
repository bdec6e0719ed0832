//! Seamless land surface temperature reconstruction from cloud-gapped
//! scene stacks: a per-pixel annual cycle ensemble plus a daily Gaussian
//! process on the residuals.

pub mod atc;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod geo;
pub mod gp;
pub mod linalg;
pub mod raster;
pub mod recon;
pub mod seed;
pub mod synth;

pub use error::{Error, Result, Violation};
