//! File-driven front-end for the plate calibration library.
//!
//! A project file names the machine, plate, campaign and bounds files and an
//! output directory. `simulate` writes measurements and a reference raster,
//! `identify` writes one solve report per method, `validate` compares the
//! corrected kinematics with the raster and `report` adds identifiability
//! diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod schema;

pub use config::{MethodChoice, Overrides, ProjectConfig};
pub use error::CliError;
