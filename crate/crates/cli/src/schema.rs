//! Versioned JSON file formats. Every file starts with `schema_version` and
//! a `units` record; unknown fields are rejected.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use platecal::{
    BoundsSpec, ErrorParams, GantryConfig, Method, NoiseModel, PlateGeometry, PlatePose,
    PoseExtrinsics, PoseMeasurement, RasterReference, SolveReport, WorkVolume,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub angle: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "mm".into(),
            angle: "rad".into(),
        }
    }
}

/// Common header of every file.
pub trait Versioned {
    fn schema_version(&self) -> u32;
    fn units(&self) -> &Units;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
            fn units(&self) -> &Units {
                &self.units
            }
        }
    )*};
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineFile {
    pub schema_version: u32,
    pub units: Units,
    pub tool_offset: [f64; 3],
    pub work_volume: WorkVolume,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_errors: Option<ErrorParams>,
}

impl MachineFile {
    pub fn to_config(&self) -> Result<GantryConfig> {
        let cfg = GantryConfig {
            tool_offset: Vector3::from(self.tool_offset),
            work_volume: self.work_volume,
            true_errors: self.true_errors,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateFile {
    pub schema_version: u32,
    pub units: Units,
    /// Sensor centers in the plate frame.
    pub sensors: Vec<[f64; 3]>,
    pub distance_tolerance: f64,
}

impl PlateFile {
    pub fn to_geometry(&self) -> Result<PlateGeometry> {
        let sensors = self.sensors.iter().map(|s| Vector3::from(*s)).collect();
        Ok(PlateGeometry::new(sensors, self.distance_tolerance)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    /// Origin of the plate frame in the machine frame.
    pub position: [f64; 3],
    pub gamma: f64,
    pub carriage_height: f64,
}

fn default_raster_spacing() -> f64 {
    platecal::demo::RASTER_SPACING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub schema_version: u32,
    pub units: Units,
    pub poses: Vec<PoseEntry>,
    pub noise: NoiseModel,
    pub seed: u64,
    #[serde(default = "default_raster_spacing")]
    pub raster_spacing: f64,
}

impl CampaignFile {
    pub fn to_spec(&self, seed: u64) -> platecal::CampaignSpec {
        platecal::CampaignSpec {
            plate_poses: self
                .poses
                .iter()
                .map(|p| PlatePose::new(Vector3::from(p.position), p.gamma))
                .collect(),
            carriage_heights: self.poses.iter().map(|p| p.carriage_height).collect(),
            noise: self.noise,
            rng_seed: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub schema_version: u32,
    pub units: Units,
    pub bounds: BoundsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementsFile {
    pub schema_version: u32,
    pub units: Units,
    pub poses: Vec<PoseMeasurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterFile {
    pub schema_version: u32,
    pub units: Units,
    pub spacing: f64,
    pub grid_points: Vec<[f64; 3]>,
    pub true_positions: Vec<[f64; 3]>,
}

impl RasterFile {
    pub fn from_reference(r: &RasterReference, spacing: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            units: Units::default(),
            spacing,
            grid_points: r.grid_points.iter().map(|v| (*v).into()).collect(),
            true_positions: r.true_positions.iter().map(|v| (*v).into()).collect(),
        }
    }

    pub fn to_reference(&self) -> RasterReference {
        RasterReference {
            grid_points: self.grid_points.iter().map(|v| Vector3::from(*v)).collect(),
            true_positions: self
                .true_positions
                .iter()
                .map(|v| Vector3::from(*v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema_version: u32,
    pub units: Units,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    /// mm²
    pub final_cost: f64,
    pub condition_number: f64,
    pub intrinsics: ErrorParams,
    pub poses: Vec<PoseExtrinsics>,
    pub step_norms: Vec<f64>,
    pub active_bounds: Vec<String>,
    pub fixed_parameters: Vec<String>,
}

impl From<&SolveReport> for ReportFile {
    fn from(r: &SolveReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            units: Units::default(),
            method: r.method,
            converged: r.converged,
            iterations: r.iterations,
            final_cost: r.final_cost,
            condition_number: r.condition_number,
            intrinsics: r.p_id_hat.errors,
            poses: r.p_id_hat.poses.clone(),
            step_norms: r.step_norms.clone(),
            active_bounds: r.active_bounds.clone(),
            fixed_parameters: r.fixed_parameters.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSummary {
    pub label: String,
    pub delta_max: f64,
    pub delta_mean: f64,
    #[serde(default)]
    pub reduction_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationFile {
    pub schema_version: u32,
    pub units: Units,
    pub raster_points: usize,
    pub rows: Vec<FieldSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiabilityFile {
    pub schema_version: u32,
    pub units: Units,
    pub method: Method,
    pub report: platecal::IdentifiabilityReport,
}

versioned!(
    MachineFile,
    PlateFile,
    CampaignFile,
    BoundsFile,
    MeasurementsFile,
    RasterFile,
    ReportFile,
    ValidationFile,
    IdentifiabilityFile
);

fn check_header<T: Versioned>(value: &T, path: &Path) -> Result<()> {
    if value.schema_version() != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
            path.display(),
            value.schema_version()
        )));
    }
    if *value.units() != Units::default() {
        let u = value.units();
        return Err(CliError::Config(format!(
            "{}: units must be mm/rad, found {}/{}",
            path.display(),
            u.length,
            u.angle
        )));
    }
    Ok(())
}

/// Parses `text` reporting the offending field path, line and column.
pub fn parse<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." {
            String::new()
        } else {
            format!(" at `{path}`")
        };
        CliError::Config(format!("{}{field}: {inner}", origin.display()))
    })
}

pub fn read_file<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: T = parse(&text, path)?;
    check_header(&value, path)?;
    Ok(value)
}

pub fn write_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
