//! Default desk-scale setup: a 1000 × 500 mm laser cutter, a four-sensor
//! plate with two sensor heights and eight plate poses.

use nalgebra::Vector3;

use crate::model::{rot_z, ErrorParams, GantryConfig, PlateGeometry, PlatePose, WorkVolume};
use crate::simulate::{CampaignSpec, NoiseModel};

pub const DEFAULT_SEED: u64 = 20_240_917;
pub const RASTER_SPACING: f64 = 50.0;
/// Height of the plate surface above the inertial origin, mm.
const PLATE_Z: f64 = 120.0;

/// Ground-truth errors used throughout the examples and tests.
pub fn true_errors() -> ErrorParams {
    ErrorParams {
        alpha_xy: 5e-4,
        alpha_xz: -3e-4,
        alpha_yz: 2e-4,
        s_x: 1e-4,
        s_y: -2e-4,
        s_z: 5e-5,
        tau_x: 4e-4,
        tau_y: -6e-4,
    }
}

pub fn machine() -> GantryConfig {
    GantryConfig::new(
        Vector3::new(0.0, 0.0, 20.0),
        WorkVolume {
            min: [0.0, 0.0, 0.0],
            max: [1000.0, 500.0, 50.0],
        },
    )
    .with_true_errors(true_errors())
}

/// Sensors at heights 0 and 40 mm on a 200 × 150 mm plate.
pub fn plate() -> PlateGeometry {
    PlateGeometry {
        sensors: vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(200.0, 0.0, 40.0),
            Vector3::new(200.0, 150.0, 0.0),
            Vector3::new(0.0, 150.0, 40.0),
        ],
        distance_tolerance: 0.002,
    }
}

/// Same outline as [`plate`] with every sensor at height 0.
pub fn flat_plate() -> PlateGeometry {
    let mut p = plate();
    for s in &mut p.sensors {
        s.z = 0.0;
    }
    p
}

/// Plate pose whose sensor centroid sits at `(cx, cy)` with yaw `gamma`.
pub fn pose_centered(plate: &PlateGeometry, cx: f64, cy: f64, gamma: f64) -> PlatePose {
    let n = plate.sensor_count() as f64;
    let centroid = plate.sensors.iter().fold(Vector3::zeros(), |a, s| a + s) / n;
    let c = Vector3::new(centroid.x, centroid.y, 0.0);
    PlatePose::new(Vector3::new(cx, cy, PLATE_Z) - rot_z(gamma) * c, gamma)
}

pub fn noise() -> NoiseModel {
    NoiseModel {
        centering_sigma: 0.05,
        encoder_sigma: 0.001,
        gamma_guess_sigma: 0.02,
    }
}

pub fn campaign(noise: NoiseModel, seed: u64) -> CampaignSpec {
    let plate = plate();
    let yaws = [-2.4, -1.6, -0.9, -0.3, 0.25, 0.8, 1.5, 2.3];
    let plate_poses = yaws
        .iter()
        .enumerate()
        .map(|(j, &g)| {
            let cx = 150.0 + 100.0 * j as f64;
            let cy = if j % 2 == 0 { 200.0 } else { 300.0 };
            pose_centered(&plate, cx, cy, g)
        })
        .collect();
    CampaignSpec {
        plate_poses,
        carriage_heights: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 25.0, 5.0],
        noise,
        rng_seed: seed,
    }
}

pub fn noiseless_campaign() -> CampaignSpec {
    campaign(NoiseModel::default(), DEFAULT_SEED)
}
