//! Position-error vectors between pairs of plate sensors and the packed
//! identification vector.
//!
//! Every pose contributes the pairs `(1, k)` for `k = 2..n`, each giving a
//! three-component residual in the plate frame, so a pose yields `3(n-1)`
//! equations.

use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::model::{axis_matrix, beam_rotation, rot_z, ErrorParams, GantryConfig, PlateGeometry};

/// Encoder snapshots of one plate pose plus the operator's prior guesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseMeasurement {
    /// `q` recorded while the beam was centered on each sensor, mm.
    pub encoder_snapshots: Vec<Vector3<f64>>,
    /// Rough plate yaw, rad.
    pub gamma_guess: f64,
    /// Initial beam length per sensor, mm.
    pub laser_length_guess: Vec<f64>,
}

impl PoseMeasurement {
    pub fn validate(&self, sensors: usize) -> Result<()> {
        if self.encoder_snapshots.len() != sensors || self.laser_length_guess.len() != sensors {
            return Err(CalibError::DimensionMismatch(format!(
                "pose has {} snapshots and {} length guesses, plate has {sensors} sensors",
                self.encoder_snapshots.len(),
                self.laser_length_guess.len()
            )));
        }
        if let Some(l) = self.laser_length_guess.iter().find(|l| !(**l > 0.0)) {
            return Err(CalibError::InvalidLaserLength(*l));
        }
        if !self.gamma_guess.is_finite()
            || self
                .encoder_snapshots
                .iter()
                .any(|q| q.iter().any(|v| !v.is_finite()))
        {
            return Err(CalibError::InvalidInput(
                "non-finite measurement value".into(),
            ));
        }
        Ok(())
    }

    /// True when the z axis moved between sensors of this pose.
    pub fn has_z_travel(&self) -> bool {
        let z0 = self.encoder_snapshots[0].z;
        self.encoder_snapshots
            .iter()
            .any(|q| (q.z - z0).abs() > 1e-9)
    }
}

/// Unknowns belonging to one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseExtrinsics {
    pub laser_lengths: Vec<f64>,
    pub gamma: f64,
}

/// Flat index layout: `[p_e | L_1, γ_1 | … | L_m, γ_m]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub sensors: usize,
    pub poses: usize,
}

impl ParamLayout {
    pub fn new(sensors: usize, poses: usize) -> Self {
        Self { sensors, poses }
    }

    pub fn len(&self) -> usize {
        ErrorParams::COUNT + self.poses * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn block_len(&self) -> usize {
        self.sensors + 1
    }

    pub fn pose_offset(&self, pose: usize) -> usize {
        ErrorParams::COUNT + pose * self.block_len()
    }

    pub fn laser_length(&self, pose: usize, sensor: usize) -> usize {
        self.pose_offset(pose) + sensor
    }

    pub fn gamma(&self, pose: usize) -> usize {
        self.pose_offset(pose) + self.sensors
    }

    pub fn rows_per_pose(&self) -> usize {
        3 * (self.sensors - 1)
    }

    pub fn rows(&self) -> usize {
        self.poses * self.rows_per_pose()
    }

    /// Human-readable parameter name; poses and sensors are numbered from 1.
    pub fn name(&self, index: usize) -> String {
        if index < ErrorParams::COUNT {
            return ErrorParams::NAMES[index].to_string();
        }
        let rel = index - ErrorParams::COUNT;
        let (pose, slot) = (rel / self.block_len(), rel % self.block_len());
        if slot == self.sensors {
            format!("pose{}.gamma", pose + 1)
        } else {
            format!("pose{}.L{}", pose + 1, slot + 1)
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        (0..self.len()).find(|&i| self.name(i) == name)
    }
}

/// Everything the identifier estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentVector {
    pub errors: ErrorParams,
    pub poses: Vec<PoseExtrinsics>,
}

impl IdentVector {
    pub fn layout(&self) -> ParamLayout {
        let sensors = self.poses.first().map_or(0, |p| p.laser_lengths.len());
        ParamLayout::new(sensors, self.poses.len())
    }

    pub fn pack(&self) -> DVector<f64> {
        let layout = self.layout();
        let mut flat = DVector::zeros(layout.len());
        for (i, v) in self.errors.to_array().iter().enumerate() {
            flat[i] = *v;
        }
        for (j, pose) in self.poses.iter().enumerate() {
            for (k, l) in pose.laser_lengths.iter().enumerate() {
                flat[layout.laser_length(j, k)] = *l;
            }
            flat[layout.gamma(j)] = pose.gamma;
        }
        flat
    }

    pub fn unpack(flat: &DVector<f64>, layout: ParamLayout) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(CalibError::DimensionMismatch(format!(
                "identification vector has {} entries, layout expects {}",
                flat.len(),
                layout.len()
            )));
        }
        let errors = ErrorParams::from_slice(&flat.as_slice()[..ErrorParams::COUNT])?;
        let poses = (0..layout.poses)
            .map(|j| PoseExtrinsics {
                laser_lengths: (0..layout.sensors)
                    .map(|k| flat[layout.laser_length(j, k)])
                    .collect(),
                gamma: flat[layout.gamma(j)],
            })
            .collect();
        Ok(Self { errors, poses })
    }
}

/// Vector between the impact points of two sensors of one pose, frame `I`.
///
/// Equal to `impact_point(q_k, L_k) - impact_point(q_i, L_i)`. It is
/// evaluated as `A·(q_k - q_i) + R_IE·(0, 0, L_k - L_i)` so that terms shared
/// by both points cancel exactly instead of up to rounding.
pub fn pair_difference_inertial(
    q_i: &Vector3<f64>,
    q_k: &Vector3<f64>,
    errors: &ErrorParams,
    length_i: f64,
    length_k: f64,
    _cfg: &GantryConfig,
) -> Result<Vector3<f64>> {
    for l in [length_i, length_k] {
        if !(l > 0.0) {
            return Err(CalibError::InvalidLaserLength(l));
        }
    }
    let axes = axis_matrix(errors)?;
    let beam = beam_rotation(errors).column(2).into_owned();
    Ok(axes * (q_k - q_i) + beam * (length_k - length_i))
}

/// Length-free form: the end-effector difference rotated into frame `E`
/// with the z row (the only one containing the beam lengths) discarded.
pub fn pair_difference_ee_selected(
    q_i: &Vector3<f64>,
    q_k: &Vector3<f64>,
    errors: &ErrorParams,
    _cfg: &GantryConfig,
) -> Result<Vector2<f64>> {
    let axes = axis_matrix(errors)?;
    let in_e = beam_rotation(errors).transpose() * (axes * (q_k - q_i));
    Ok(Vector2::new(in_e.x, in_e.y))
}

/// Plate-frame residual of pair `(i, k)`; zero when the kinematic model,
/// beam lengths and plate yaw agree with the certified distance.
pub fn residual_plate_frame(
    meas: &PoseMeasurement,
    i: usize,
    k: usize,
    errors: &ErrorParams,
    ext: &PoseExtrinsics,
    plate: &PlateGeometry,
    cfg: &GantryConfig,
) -> Result<Vector3<f64>> {
    let n = plate.sensor_count();
    if i == k || i >= n || k >= n {
        return Err(CalibError::InvalidInput(format!(
            "invalid sensor pair ({}, {}) for {n} sensors",
            i + 1,
            k + 1
        )));
    }
    let diff = pair_difference_inertial(
        &meas.encoder_snapshots[i],
        &meas.encoder_snapshots[k],
        errors,
        ext.laser_lengths[i],
        ext.laser_lengths[k],
        cfg,
    )?;
    Ok(rot_z(-ext.gamma) * diff - plate.reference_distance(i, k))
}

/// The `3(n-1)` residuals of one pose, pairs `(1, k)` in order of `k`.
pub fn pose_residuals(
    meas: &PoseMeasurement,
    errors: &ErrorParams,
    ext: &PoseExtrinsics,
    plate: &PlateGeometry,
    _cfg: &GantryConfig,
) -> Result<DVector<f64>> {
    let n = plate.sensor_count();
    let axes = axis_matrix(errors)?;
    let beam = beam_rotation(errors).column(2).into_owned();
    let to_plate = rot_z(-ext.gamma);
    let q1 = &meas.encoder_snapshots[0];
    let l1 = ext.laser_lengths[0];
    let mut out = DVector::zeros(3 * (n - 1));
    for k in 1..n {
        let lk = ext.laser_lengths[k];
        if !(lk > 0.0 && l1 > 0.0) {
            return Err(CalibError::InvalidLaserLength(if l1 > 0.0 {
                lk
            } else {
                l1
            }));
        }
        let diff = axes * (meas.encoder_snapshots[k] - q1) + beam * (lk - l1);
        let r = to_plate * diff - plate.reference_distance(0, k);
        out.fixed_rows_mut::<3>(3 * (k - 1)).copy_from(&r);
    }
    Ok(out)
}

pub(crate) fn check_dimensions(
    measurements: &[PoseMeasurement],
    p_id: &IdentVector,
    plate: &PlateGeometry,
) -> Result<()> {
    let n = plate.sensor_count();
    if measurements.len() != p_id.poses.len() {
        return Err(CalibError::DimensionMismatch(format!(
            "{} measured poses but {} extrinsic blocks",
            measurements.len(),
            p_id.poses.len()
        )));
    }
    for (j, (m, e)) in measurements.iter().zip(&p_id.poses).enumerate() {
        m.validate(n)
            .map_err(|e| CalibError::DimensionMismatch(format!("pose {}: {e}", j + 1)))?;
        if e.laser_lengths.len() != n {
            return Err(CalibError::DimensionMismatch(format!(
                "pose {}: {} laser lengths for {n} sensors",
                j + 1,
                e.laser_lengths.len()
            )));
        }
    }
    Ok(())
}

/// Stacked residual vector of length `3·m·(n-1)`, pose-major.
pub fn stack_residuals(
    measurements: &[PoseMeasurement],
    p_id: &IdentVector,
    plate: &PlateGeometry,
    cfg: &GantryConfig,
) -> Result<DVector<f64>> {
    if measurements.is_empty() {
        return Err(CalibError::InvalidInput(
            "at least one pose is required".into(),
        ));
    }
    check_dimensions(measurements, p_id, plate)?;
    let rows = 3 * (plate.sensor_count() - 1);
    let mut out = DVector::zeros(rows * measurements.len());
    for (j, (meas, ext)) in measurements.iter().zip(&p_id.poses).enumerate() {
        let block = pose_residuals(meas, &p_id.errors, ext, plate, cfg)?;
        out.rows_mut(j * rows, rows).copy_from(&block);
    }
    Ok(out)
}
