//! Synthetic measurement campaigns and reference rasters.
//!
//! The physical act of centering the beam on a four-quadrant diode is replaced
//! by root finding on the true kinematics. Noise is injected as an offset of
//! the beam spot on the sensor surface plus encoder read noise.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::model::{
    axis_matrix, beam_direction, fk_end_effector, plate_to_inertial, rot_z, ErrorParams,
    GantryConfig, PlateGeometry, PlatePose,
};
use crate::residual::{PoseExtrinsics, PoseMeasurement};

const CENTERING_MAX_ITER: usize = 20;
const CENTERING_TOL: f64 = 1e-11;
const LENGTH_RANGE: (f64, f64) = (1.0, 10_000.0);
/// Quantization of the operator's beam-length guess, mm.
pub const LENGTH_GUESS_STEP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Std. dev. of the spot offset on the sensor surface, mm.
    pub centering_sigma: f64,
    /// Std. dev. of encoder read noise, mm.
    pub encoder_sigma: f64,
    /// Std. dev. of the operator's yaw guess, rad.
    pub gamma_guess_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub plate_poses: Vec<PlatePose>,
    /// Fixed carriage height `q_z` per pose, mm.
    pub carriage_heights: Vec<f64>,
    pub noise: NoiseModel,
    pub rng_seed: u64,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.plate_poses.is_empty() {
            return Err(CalibError::InvalidInput(
                "campaign needs at least one pose".into(),
            ));
        }
        if self.carriage_heights.len() != self.plate_poses.len() {
            return Err(CalibError::DimensionMismatch(format!(
                "{} plate poses but {} carriage heights",
                self.plate_poses.len(),
                self.carriage_heights.len()
            )));
        }
        let n = &self.noise;
        for (name, s) in [
            ("centering_sigma", n.centering_sigma),
            ("encoder_sigma", n.encoder_sigma),
            ("gamma_guess_sigma", n.gamma_guess_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CalibError::InvalidInput(format!(
                    "{name} must be >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Generated measurements together with the ground truth that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub measurements: Vec<PoseMeasurement>,
    /// Actual beam lengths and plate yaw of every pose.
    pub truth: Vec<PoseExtrinsics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterReference {
    pub grid_points: Vec<Vector3<f64>>,
    pub true_positions: Vec<Vector3<f64>>,
}

/// Axis positions `(q_x, q_y, q_z)` and beam length that place the laser
/// spot on `sensor_i` with the carriage held at `q_z`.
pub fn center_beam_on_sensor(
    sensor_i: &Vector3<f64>,
    q_z: f64,
    errors: &ErrorParams,
    cfg: &GantryConfig,
) -> Result<(Vector3<f64>, f64)> {
    let axes = axis_matrix(errors)?;
    let beam = beam_direction(errors);
    if beam.z <= 0.0 {
        return Err(CalibError::Domain("beam does not point along +z".into()));
    }

    // Offset of the sensor from the beam line, measured in the xy plane at
    // the sensor height, and the distance along the beam to reach it.
    let incidence = |u: &Vector2<f64>| {
        let ee = axes * Vector3::new(u.x, u.y, q_z) + cfg.tool_offset;
        let d = sensor_i - ee;
        let t = d.z / beam.z;
        (Vector2::new(d.x - beam.x * t, d.y - beam.y * t), t)
    };
    let column = |c: usize| {
        let a = axes.column(c);
        Vector2::new(
            -a[0] + beam.x * a[2] / beam.z,
            -a[1] + beam.y * a[2] / beam.z,
        )
    };
    let jac = Matrix2::from_columns(&[column(0), column(1)]);
    let jac_inv = jac
        .try_inverse()
        .ok_or_else(|| CalibError::Domain("centering Jacobian is singular".into()))?;

    let mut u = Vector2::new(
        sensor_i.x - cfg.tool_offset.x,
        sensor_i.y - cfg.tool_offset.y,
    );
    let (mut r, mut t) = incidence(&u);
    let mut converged = r.norm() < CENTERING_TOL;
    for _ in 0..CENTERING_MAX_ITER {
        if converged {
            break;
        }
        let step = -(jac_inv * r);
        let mut trial = u + step;
        let (mut r_new, mut t_new) = incidence(&trial);
        if r_new.norm() > r.norm() {
            trial = u + step * 0.5;
            (r_new, t_new) = incidence(&trial);
        }
        u = trial;
        r = r_new;
        t = t_new;
        converged = r.norm() < CENTERING_TOL;
    }
    if !converged {
        return Err(CalibError::NoConvergence(format!(
            "beam centering on {sensor_i:?} left {:.3e} mm after {CENTERING_MAX_ITER} iterations",
            r.norm()
        )));
    }

    let q = Vector3::new(u.x, u.y, q_z);
    if !cfg.work_volume.contains(&q, 1e-9) {
        return Err(CalibError::Unreachable(format!(
            "sensor at {sensor_i:?} needs q = {q:?} outside the work volume"
        )));
    }
    if !(t > LENGTH_RANGE.0 && t < LENGTH_RANGE.1) {
        return Err(CalibError::Unreachable(format!(
            "sensor at {sensor_i:?} needs beam length {t:.3} mm outside ({}, {})",
            LENGTH_RANGE.0, LENGTH_RANGE.1
        )));
    }
    Ok((q, t))
}

/// Beam length guess an operator would read off the nominal kinematics.
pub fn quantize_length(length: f64) -> f64 {
    ((length / LENGTH_GUESS_STEP).round() * LENGTH_GUESS_STEP).max(LENGTH_GUESS_STEP)
}

/// Random stream for one pose; independent of how poses are scheduled.
fn pose_rng(seed: u64, pose: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pose as u64);
    rng
}

pub fn generate_campaign(
    spec: &CampaignSpec,
    plate: &PlateGeometry,
    cfg: &GantryConfig,
) -> Result<Campaign> {
    spec.validate()?;
    plate.validate()?;
    let truth_errors = cfg.true_errors.ok_or_else(|| {
        CalibError::InvalidInput("simulation requires ground truth (true_errors)".into())
    })?;
    let noise = &spec.noise;
    let centering = Normal::new(0.0, noise.centering_sigma)
        .map_err(|e| CalibError::InvalidInput(e.to_string()))?;
    let encoder = Normal::new(0.0, noise.encoder_sigma)
        .map_err(|e| CalibError::InvalidInput(e.to_string()))?;
    let yaw = Normal::new(0.0, noise.gamma_guess_sigma)
        .map_err(|e| CalibError::InvalidInput(e.to_string()))?;

    let mut measurements = Vec::with_capacity(spec.plate_poses.len());
    let mut truth = Vec::with_capacity(spec.plate_poses.len());
    for (j, (pose, &q_z)) in spec
        .plate_poses
        .iter()
        .zip(&spec.carriage_heights)
        .enumerate()
    {
        let mut rng = pose_rng(spec.rng_seed, j);
        // The carriage stays put during a pose, so its z reading is shared.
        let z_read = encoder.sample(&mut rng);
        let gamma_noise = yaw.sample(&mut rng);

        let mut snapshots = Vec::with_capacity(plate.sensor_count());
        let mut lengths = Vec::with_capacity(plate.sensor_count());
        for sensor in &plate.sensors {
            let spot = Vector3::new(centering.sample(&mut rng), centering.sample(&mut rng), 0.0);
            let read = Vector3::new(encoder.sample(&mut rng), encoder.sample(&mut rng), z_read);
            let target = plate_to_inertial(pose, sensor) + rot_z(pose.gamma) * spot;
            let (q, length) =
                center_beam_on_sensor(&target, q_z, &truth_errors, cfg).map_err(|e| match e {
                    CalibError::Unreachable(m) => {
                        CalibError::Unreachable(format!("pose {}: {m}", j + 1))
                    }
                    other => other,
                })?;
            snapshots.push(q + read);
            lengths.push(length);
        }
        measurements.push(PoseMeasurement {
            encoder_snapshots: snapshots,
            gamma_guess: pose.gamma + gamma_noise,
            laser_length_guess: lengths.iter().map(|l| quantize_length(*l)).collect(),
        });
        truth.push(PoseExtrinsics {
            laser_lengths: lengths,
            gamma: pose.gamma,
        });
    }
    Ok(Campaign {
        measurements,
        truth,
    })
}

/// Regular grid over the work volume with true end-effector positions.
/// Points are ordered with x varying fastest, then y, then z.
pub fn generate_raster(cfg: &GantryConfig, spacing: f64) -> Result<RasterReference> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(CalibError::InvalidInput(format!(
            "raster spacing must be > 0, got {spacing}"
        )));
    }
    let truth = cfg.true_errors.ok_or_else(|| {
        CalibError::InvalidInput("reference raster requires ground truth (true_errors)".into())
    })?;
    let volume = &cfg.work_volume;
    let extent = volume.extent();
    if spacing > extent.max() {
        return Err(CalibError::InvalidInput(format!(
            "empty grid: spacing {spacing} mm exceeds the work volume extent"
        )));
    }
    let counts = extent.map(|e| (e / spacing + 1e-9).floor() as usize + 1);

    let mut grid_points = Vec::with_capacity(counts.product());
    for iz in 0..counts.z {
        for iy in 0..counts.y {
            for ix in 0..counts.x {
                grid_points.push(Vector3::new(
                    volume.min[0] + ix as f64 * spacing,
                    volume.min[1] + iy as f64 * spacing,
                    volume.min[2] + iz as f64 * spacing,
                ));
            }
        }
    }
    let true_positions = grid_points
        .iter()
        .map(|q| fk_end_effector(q, &truth, cfg).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    Ok(RasterReference {
        grid_points,
        true_positions,
    })
}
