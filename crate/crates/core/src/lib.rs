//! Geometric calibration of gantry machines with a calibration plate.
//!
//! A laser beam mounted on the end effector is centered on the sensors of a
//! plate whose sensor-to-sensor distances are certified. Comparing the
//! distances implied by the encoder readings with the certified ones, over
//! several plate placements, identifies the machine's squareness, scale and
//! beam-tilt errors.
//!
//! * [`model`]: kinematics with error parameters
//! * [`residual`]: pairwise position errors and the parameter layout
//! * [`simulate`]: synthetic campaigns and reference rasters
//! * [`identify`]: least-squares and box-constrained estimation, diagnostics
//! * [`validate`]: raster comparison of corrected kinematics

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demo;
pub mod error;
pub mod identify;
pub mod model;
pub mod residual;
pub mod simulate;
pub mod validate;

pub use error::{CalibError, Result};
pub use identify::{
    identifiability_report, initial_guess, jacobian_fd, solve_constrained, solve_ls, BoundsSpec,
    IdentifiabilityReport, Method, SolveOptions, SolveReport, StackedSystem,
};
pub use model::{ErrorParams, GantryConfig, PlateGeometry, PlatePose, WorkVolume};
pub use residual::{IdentVector, ParamLayout, PoseExtrinsics, PoseMeasurement};
pub use simulate::{Campaign, CampaignSpec, NoiseModel, RasterReference};
pub use validate::ErrorField;
