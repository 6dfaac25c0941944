//! Gantry kinematics with geometric error parameters.
//!
//! The machine is a pure-translation Cartesian gantry. Its three linear axes
//! may be out of square and carry scale errors; the laser beam mounted on the
//! end effector may be tilted about the end-effector x and y axes. Inertial
//! frame `I` is the machine frame, `E` the end-effector frame and `M` the
//! calibration plate frame.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Sanity limit on squareness and tilt angles, rad.
pub const ANGLE_LIMIT: f64 = 0.1;
/// Sanity limit on axis scale errors.
pub const SCALE_LIMIT: f64 = 0.01;

/// Intrinsic geometric error parameters of the gantry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorParams {
    /// Squareness between x and y axes, rad.
    pub alpha_xy: f64,
    /// Tilt of the z axis toward x, rad.
    pub alpha_xz: f64,
    /// Tilt of the z axis toward y, rad.
    pub alpha_yz: f64,
    pub s_x: f64,
    pub s_y: f64,
    pub s_z: f64,
    /// Beam tilt about end-effector x, rad.
    pub tau_x: f64,
    /// Beam tilt about end-effector y, rad.
    pub tau_y: f64,
}

impl ErrorParams {
    pub const COUNT: usize = 8;
    pub const NAMES: [&'static str; 8] = [
        "alpha_xy", "alpha_xz", "alpha_yz", "s_x", "s_y", "s_z", "tau_x", "tau_y",
    ];
    /// Indices of the parameters that only act through z-axis travel.
    pub const Z_AXIS: [usize; 3] = [1, 2, 5];

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.alpha_xy,
            self.alpha_xz,
            self.alpha_yz,
            self.s_x,
            self.s_y,
            self.s_z,
            self.tau_x,
            self.tau_y,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            alpha_xy: a[0],
            alpha_xz: a[1],
            alpha_yz: a[2],
            s_x: a[3],
            s_y: a[4],
            s_z: a[5],
            tau_x: a[6],
            tau_y: a[7],
        }
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let a: [f64; 8] = s.try_into().map_err(|_| {
            CalibError::DimensionMismatch(format!("expected 8 error parameters, got {}", s.len()))
        })?;
        Ok(Self::from_array(a))
    }

    /// Elementwise scaling, used to generate error sets of a given magnitude.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * factor))
    }

    /// Checks the sanity ranges applied when parameters are loaded from a file.
    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        for (i, name) in Self::NAMES.iter().enumerate() {
            let limit = if name.starts_with("s_") {
                SCALE_LIMIT
            } else {
                ANGLE_LIMIT
            };
            if !a[i].is_finite() || a[i].abs() >= limit {
                return Err(CalibError::InvalidInput(format!(
                    "error parameter {name} = {} outside sanity range (-{limit}, {limit})",
                    a[i]
                )));
            }
        }
        let (sx, sy) = (self.alpha_xz.sin(), self.alpha_yz.sin());
        if sx * sx + sy * sy >= 1.0 {
            return Err(CalibError::Domain("z-axis direction undefined".into()));
        }
        Ok(())
    }
}

/// Axis-aligned box, mm. A degenerate axis (min == max) is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkVolume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkVolume {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let v = Self { min, max };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i].is_finite() && self.max[i].is_finite()) || self.min[i] > self.max[i] {
                return Err(CalibError::InvalidInput(format!(
                    "work volume axis {i}: min {} > max {}",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &Vector3<f64>, tol: f64) -> bool {
        (0..3).all(|i| q[i] >= self.min[i] - tol && q[i] <= self.max[i] + tol)
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GantryConfig {
    /// Nominal end-effector offset from the carriage, mm.
    pub tool_offset: Vector3<f64>,
    pub work_volume: WorkVolume,
    /// Ground truth for simulation only.
    pub true_errors: Option<ErrorParams>,
}

impl GantryConfig {
    pub fn new(tool_offset: Vector3<f64>, work_volume: WorkVolume) -> Self {
        Self {
            tool_offset,
            work_volume,
            true_errors: None,
        }
    }

    pub fn with_true_errors(mut self, errors: ErrorParams) -> Self {
        self.true_errors = Some(errors);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.work_volume.validate()?;
        if let Some(e) = &self.true_errors {
            e.validate()?;
        }
        Ok(())
    }
}

/// Sensor layout of the calibration plate in frame `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateGeometry {
    pub sensors: Vec<Vector3<f64>>,
    /// Certified uncertainty of the reference distances, mm.
    pub distance_tolerance: f64,
}

impl PlateGeometry {
    pub fn new(sensors: Vec<Vector3<f64>>, distance_tolerance: f64) -> Result<Self> {
        let p = Self {
            sensors,
            distance_tolerance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sensors.len();
        if n < 3 {
            return Err(CalibError::InvalidInput(format!(
                "calibration plate needs at least 3 sensors, got {n}"
            )));
        }
        for i in 0..n {
            for k in i + 1..n {
                if (self.sensors[k] - self.sensors[i]).norm() <= 1.0 {
                    return Err(CalibError::InvalidInput(format!(
                        "sensors {} and {} coincide",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        if !(self.distance_tolerance >= 0.0) {
            return Err(CalibError::InvalidInput(
                "distance_tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Certified distance vector from sensor `i` to sensor `k` in frame `M`.
    pub fn reference_distance(&self, i: usize, k: usize) -> Vector3<f64> {
        self.sensors[k] - self.sensors[i]
    }

    /// True when every sensor sits at the same height.
    pub fn is_flat(&self) -> bool {
        let z0 = self.sensors[0].z;
        self.sensors.iter().all(|s| (s.z - z0).abs() < 1e-9)
    }
}

/// Placement of the plate in the inertial frame. Rotation is yaw only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatePose {
    pub position: Vector3<f64>,
    pub gamma: f64,
}

impl PlatePose {
    pub fn new(position: Vector3<f64>, gamma: f64) -> Self {
        Self {
            position,
            gamma: wrap_angle(gamma),
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a).into_inner()
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a).into_inner()
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a).into_inner()
}

/// Unit direction vectors of the three machine axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFrame {
    pub x: Vector3<f64>,
    pub y: Vector3<f64>,
    pub z: Vector3<f64>,
}

pub fn axis_frame(p: &ErrorParams) -> Result<AxisFrame> {
    let (sxz, syz) = (p.alpha_xz.sin(), p.alpha_yz.sin());
    let arg = 1.0 - sxz * sxz - syz * syz;
    if !(arg > 0.0) {
        return Err(CalibError::Domain(format!(
            "z-axis direction undefined (1 - sin²α_xz - sin²α_yz = {arg})"
        )));
    }
    Ok(AxisFrame {
        x: Vector3::x(),
        y: Vector3::new(p.alpha_xy.sin(), p.alpha_xy.cos(), 0.0),
        z: Vector3::new(sxz, syz, arg.sqrt()),
    })
}

/// Maps encoder readings to carriage displacement: columns are the scaled
/// axis directions.
pub fn axis_matrix(p: &ErrorParams) -> Result<Matrix3<f64>> {
    let f = axis_frame(p)?;
    Ok(Matrix3::from_columns(&[
        f.x * (1.0 + p.s_x),
        f.y * (1.0 + p.s_y),
        f.z * (1.0 + p.s_z),
    ]))
}

/// Orientation of the end-effector frame, `R_IE = Rx(τx)·Ry(τy)`.
/// It does not depend on the axis positions.
pub fn beam_rotation(p: &ErrorParams) -> Matrix3<f64> {
    rot_x(p.tau_x) * rot_y(p.tau_y)
}

/// Unit beam direction in frame `I`.
pub fn beam_direction(p: &ErrorParams) -> Vector3<f64> {
    beam_rotation(p).column(2).into_owned()
}

/// Forward kinematics to the end effector: position in `I` and `R_IE`.
pub fn fk_end_effector(
    q: &Vector3<f64>,
    p: &ErrorParams,
    cfg: &GantryConfig,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    if !cfg.work_volume.contains(q, 1e-6) {
        log::warn!("encoder position {q:?} outside the work volume");
    }
    let position = axis_matrix(p)? * q + cfg.tool_offset;
    Ok((position, beam_rotation(p)))
}

/// Position of the laser spot after a beam of length `length` along `+z_E`.
pub fn impact_point(
    q: &Vector3<f64>,
    p: &ErrorParams,
    length: f64,
    cfg: &GantryConfig,
) -> Result<Vector3<f64>> {
    if !(length > 0.0) {
        return Err(CalibError::InvalidLaserLength(length));
    }
    let (position, rotation) = fk_end_effector(q, p, cfg)?;
    Ok(position + rotation * Vector3::new(0.0, 0.0, length))
}

pub fn plate_to_inertial(pose: &PlatePose, v_m: &Vector3<f64>) -> Vector3<f64> {
    pose.position + rot_z(pose.gamma) * v_m
}

pub fn inertial_to_plate(pose: &PlatePose, v_i: &Vector3<f64>) -> Vector3<f64> {
    rot_z(-pose.gamma) * (v_i - pose.position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cfg(offset: [f64; 3]) -> GantryConfig {
        GantryConfig::new(
            Vector3::from(offset),
            WorkVolume::new([0.0; 3], [1000.0, 1000.0, 200.0]).unwrap(),
        )
    }

    #[test]
    fn axis_frame_identity_at_zero() {
        let f = axis_frame(&ErrorParams::zero()).unwrap();
        assert_eq!(f.x, Vector3::x());
        assert_eq!(f.y, Vector3::y());
        assert_eq!(f.z, Vector3::z());
    }

    #[test]
    fn axis_frame_squareness_xy() {
        let p = ErrorParams {
            alpha_xy: 1e-3,
            ..Default::default()
        };
        let f = axis_frame(&p).unwrap();
        assert_abs_diff_eq!(f.y.x, 9.999998e-4, epsilon = 1e-10);
        assert_abs_diff_eq!(f.y.y, 0.9999995, epsilon = 1e-7);
        assert_eq!(f.y.z, 0.0);
    }

    #[test]
    fn axis_frame_z_tilts() {
        let p = ErrorParams {
            alpha_xz: 0.1,
            alpha_yz: 0.1,
            ..Default::default()
        };
        let f = axis_frame(&p).unwrap();
        assert_abs_diff_eq!(f.z.x, 0.0998334, epsilon = 1e-7);
        assert_abs_diff_eq!(f.z.y, 0.0998334, epsilon = 1e-7);
        // sqrt(1 - 2·sin²(0.1)), evaluated independently
        assert_abs_diff_eq!(f.z.z, 0.9899831, epsilon = 1e-7);
        assert_abs_diff_eq!(f.z.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn axis_frame_rejects_undefined_z() {
        let p = ErrorParams {
            alpha_xz: 1.0,
            alpha_yz: 1.2,
            ..Default::default()
        };
        assert!(matches!(axis_frame(&p), Err(CalibError::Domain(_))));
    }

    #[test]
    fn fk_examples() {
        let (pos, rot) = fk_end_effector(
            &Vector3::zeros(),
            &ErrorParams::zero(),
            &cfg([0.0, 0.0, -50.0]),
        )
        .unwrap();
        assert_eq!(pos, Vector3::new(0.0, 0.0, -50.0));
        assert_eq!(rot, Matrix3::identity());

        let p = ErrorParams {
            alpha_xy: 1e-3,
            ..Default::default()
        };
        let (pos, _) =
            fk_end_effector(&Vector3::new(100.0, 200.0, 0.0), &p, &cfg([0.0; 3])).unwrap();
        assert_abs_diff_eq!(pos.x, 100.0 + 200.0 * 1e-3f64.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(pos.x, 100.2000, epsilon = 1e-4);
        assert_abs_diff_eq!(pos.y, 199.9999, epsilon = 1e-4);

        let p = ErrorParams {
            s_z: 1e-4,
            ..Default::default()
        };
        let (pos, _) = fk_end_effector(&Vector3::new(0.0, 0.0, 100.0), &p, &cfg([0.0; 3])).unwrap();
        assert_abs_diff_eq!(pos, Vector3::new(0.0, 0.0, 100.01), epsilon = 1e-12);
    }

    #[test]
    fn impact_point_examples() {
        let c = cfg([0.0; 3]);
        let q = Vector3::new(10.0, 10.0, 0.0);
        let p0 = ErrorParams::zero();
        assert_eq!(
            impact_point(&q, &p0, 80.0, &c).unwrap(),
            Vector3::new(10.0, 10.0, 80.0)
        );
        let tiny = impact_point(&q, &p0, 1e-12, &c).unwrap();
        assert_abs_diff_eq!(tiny, q, epsilon = 1e-11);

        let p = ErrorParams {
            tau_y: 1e-3,
            ..Default::default()
        };
        let r = impact_point(&Vector3::zeros(), &p, 100.0, &c).unwrap();
        assert_abs_diff_eq!(r.x, 0.1000, epsilon = 1e-6);
        assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z, 99.99995, epsilon = 1e-6);

        assert!(matches!(
            impact_point(&q, &p0, 0.0, &c),
            Err(CalibError::InvalidLaserLength(_))
        ));
        assert!(impact_point(&q, &p0, -3.0, &c).is_err());
    }

    #[test]
    fn plate_transform_examples() {
        let id = PlatePose::new(Vector3::zeros(), 0.0);
        let v = Vector3::new(1.5, -2.0, 3.0);
        assert_eq!(plate_to_inertial(&id, &v), v);

        let quarter = PlatePose::new(Vector3::zeros(), FRAC_PI_2);
        let r = plate_to_inertial(&quarter, &Vector3::x());
        assert_abs_diff_eq!(r, Vector3::y(), epsilon = 1e-15);
        let back = inertial_to_plate(&quarter, &Vector3::x());
        assert_abs_diff_eq!(back, -Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn validate_sanity_ranges() {
        assert!(ErrorParams::zero().validate().is_ok());
        let bad = ErrorParams {
            s_y: 0.02,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ErrorParams {
            tau_x: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn plate_validation() {
        assert!(PlateGeometry::new(vec![Vector3::zeros(), Vector3::x() * 10.0], 0.0).is_err());
        let coincide = vec![
            Vector3::zeros(),
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::y() * 50.0,
        ];
        assert!(PlateGeometry::new(coincide, 0.0).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
    }
}
