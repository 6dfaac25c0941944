//! Comparison of (corrected) kinematics against a reference raster.
//!
//! Only the planar error is scored; z errors are stored for diagnostics.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::model::{fk_end_effector, ErrorParams, GantryConfig};
use crate::simulate::RasterReference;

pub const CSV_HEADER: [&str; 4] = ["qx", "qy", "qz", "delta_xy_mm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorField {
    pub points: Vec<Vector3<f64>>,
    /// ‖Δr_xy‖ per point, mm.
    pub delta_xy: Vec<f64>,
    /// ‖Δr‖ per point, mm. Empty when re-imported from CSV.
    #[serde(default)]
    pub delta_3d: Vec<f64>,
    pub delta_max: f64,
    pub delta_mean: f64,
    /// Reduction of the mean error relative to an uncalibrated field, %.
    pub reduction_percent: Option<f64>,
}

impl ErrorField {
    pub fn from_deltas(points: Vec<Vector3<f64>>, delta_xy: Vec<f64>) -> Self {
        let delta_max = delta_xy.iter().copied().fold(0.0, f64::max);
        let delta_mean = if delta_xy.is_empty() {
            0.0
        } else {
            delta_xy.iter().sum::<f64>() / delta_xy.len() as f64
        };
        Self {
            points,
            delta_xy,
            delta_3d: Vec::new(),
            delta_max,
            delta_mean,
            reduction_percent: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Records the reduction relative to `uncalibrated`.
    pub fn with_reduction(mut self, uncalibrated: &ErrorField) -> Result<Self> {
        self.reduction_percent = Some(reduction_statistic(uncalibrated, &self)?);
        Ok(self)
    }
}

/// Planar deviation of the reference positions from `fk(q, errors)`.
pub fn raster_compare(
    raster: &RasterReference,
    errors: &ErrorParams,
    cfg: &GantryConfig,
) -> Result<ErrorField> {
    if raster.grid_points.is_empty() {
        return Err(CalibError::InvalidInput("reference raster is empty".into()));
    }
    if raster.grid_points.len() != raster.true_positions.len() {
        return Err(CalibError::DimensionMismatch(format!(
            "raster has {} grid points but {} reference positions",
            raster.grid_points.len(),
            raster.true_positions.len()
        )));
    }
    let mut delta_xy = Vec::with_capacity(raster.grid_points.len());
    let mut delta_3d = Vec::with_capacity(raster.grid_points.len());
    for (q, reference) in raster.grid_points.iter().zip(&raster.true_positions) {
        let (model, _) = fk_end_effector(q, errors, cfg)?;
        let d = reference - model;
        delta_xy.push(d.x.hypot(d.y));
        delta_3d.push(d.norm());
    }
    let mut field = ErrorField::from_deltas(raster.grid_points.clone(), delta_xy);
    field.delta_3d = delta_3d;
    Ok(field)
}

/// `100·(1 − cal.mean / uncal.mean)`.
pub fn reduction_statistic(uncal: &ErrorField, cal: &ErrorField) -> Result<f64> {
    if uncal.points.len() != cal.points.len() {
        return Err(CalibError::DimensionMismatch(format!(
            "fields cover {} and {} points",
            uncal.points.len(),
            cal.points.len()
        )));
    }
    if uncal.delta_mean == 0.0 {
        return Err(CalibError::AlreadyExact);
    }
    Ok(100.0 * (1.0 - cal.delta_mean / uncal.delta_mean))
}

/// `%g`-style rendering with six significant digits.
pub fn format_significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-5..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        format!("{}e{e}", trim(mantissa.to_string()))
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    }
}

pub fn export_error_field(field: &ErrorField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for (q, d) in field.points.iter().zip(&field.delta_xy) {
        w.write_record([q.x, q.y, q.z, *d].map(format_significant))?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_error_field(path: &Path) -> Result<ErrorField> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CalibError::InvalidInput(format!(
            "unexpected error-field header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut points = Vec::new();
    let mut deltas = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                CalibError::InvalidInput(format!(
                    "line {}: field `{}` is not a number",
                    line + 2,
                    CSV_HEADER[i]
                ))
            })
        };
        points.push(Vector3::new(parse(0)?, parse(1)?, parse(2)?));
        deltas.push(parse(3)?);
    }
    Ok(ErrorField::from_deltas(points, deltas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WorkVolume;
    use crate::simulate::generate_raster;
    use approx::assert_abs_diff_eq;

    fn cfg(errors: ErrorParams) -> GantryConfig {
        GantryConfig::new(
            Vector3::new(0.0, 0.0, 20.0),
            WorkVolume::new([0.0; 3], [1000.0, 500.0, 0.0]).unwrap(),
        )
        .with_true_errors(errors)
    }

    #[test]
    fn exact_parameters_give_zero_field() {
        let p = ErrorParams {
            alpha_xy: 5e-4,
            s_x: 1e-4,
            tau_y: 3e-4,
            ..Default::default()
        };
        let c = cfg(p);
        let raster = generate_raster(&c, 50.0).unwrap();
        let field = raster_compare(&raster, &p, &c).unwrap();
        assert!(field.delta_mean < 1e-9);
        assert!(field.delta_max < 1e-9);
    }

    #[test]
    fn squareness_only_field() {
        let p = ErrorParams {
            alpha_xy: 5e-4,
            ..Default::default()
        };
        let c = cfg(p);
        let raster = generate_raster(&c, 50.0).unwrap();
        let field = raster_compare(&raster, &ErrorParams::zero(), &c).unwrap();
        // worst point is at q_y = 500: error vector (500 sin α, 500 (cos α − 1))
        let expected = (500.0 * 5e-4f64.sin()).hypot(500.0 * (5e-4f64.cos() - 1.0));
        assert_abs_diff_eq!(field.delta_max, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(field.delta_max, 0.2500, epsilon = 1e-6);
        let worst = field
            .delta_xy
            .iter()
            .position(|d| *d == field.delta_max)
            .unwrap();
        assert_eq!(field.points[worst].y, 500.0);
        assert!(field.delta_max >= field.delta_mean && field.delta_mean >= 0.0);
    }

    #[test]
    fn reduction_examples() {
        let pts = vec![Vector3::zeros(); 2];
        let uncal = ErrorField::from_deltas(pts.clone(), vec![1.87, 1.87]);
        let cal = ErrorField::from_deltas(pts.clone(), vec![0.26, 0.26]);
        let r = reduction_statistic(&uncal, &cal).unwrap();
        assert_abs_diff_eq!(r, 86.096, epsilon = 1e-3);
        assert_eq!(format!("{r:.1}"), "86.1");
        assert_eq!(reduction_statistic(&uncal, &uncal).unwrap(), 0.0);
        let exact = ErrorField::from_deltas(pts.clone(), vec![0.0, 0.0]);
        assert_eq!(reduction_statistic(&uncal, &exact).unwrap(), 100.0);
        assert!(matches!(
            reduction_statistic(&exact, &uncal),
            Err(CalibError::AlreadyExact)
        ));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0), "0");
        assert_eq!(format_significant(1000.0), "1000");
        assert_eq!(format_significant(0.25), "0.25");
        assert_eq!(format_significant(1.234567891), "1.23457");
        assert_eq!(format_significant(123456.7), "123457");
        assert_eq!(format_significant(-2.5e-7), "-2.5e-7");
        assert_eq!(format_significant(0.000123456789), "0.000123457");
    }

    #[test]
    fn csv_round_trip_and_layout() {
        let p = ErrorParams {
            alpha_xy: 5e-4,
            s_y: -3e-4,
            ..Default::default()
        };
        let mut c = cfg(p);
        c.work_volume = WorkVolume::new([0.0; 3], [1000.0, 500.0, 0.0]).unwrap();
        let raster = generate_raster(&c, 250.0).unwrap();
        let field = raster_compare(&raster, &ErrorParams::zero(), &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        export_error_field(&field, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 16);
        assert_eq!(text.lines().next().unwrap(), "qx,qy,qz,delta_xy_mm");
        let back = import_error_field(&path).unwrap();
        assert_eq!(back.points, field.points);
        assert!((back.delta_mean - field.delta_mean).abs() < 1e-5);
        assert!((back.delta_max - field.delta_max).abs() < 1e-5);

        let empty = ErrorField::from_deltas(Vec::new(), Vec::new());
        let path = dir.path().join("empty.csv");
        export_error_field(&empty, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "qx,qy,qz,delta_xy_mm\n"
        );
    }
}
