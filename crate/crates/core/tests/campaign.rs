use nalgebra::Vector3;
use platecal::demo;
use platecal::model::impact_point;
use platecal::residual::stack_residuals;
use platecal::simulate::{generate_campaign, generate_raster};
use platecal::{CalibError, CampaignSpec, ErrorParams, IdentVector, NoiseModel, PlatePose};
use proptest::prelude::*;

fn truth_vector(errors: ErrorParams, campaign: &platecal::Campaign) -> IdentVector {
    IdentVector {
        errors,
        poses: campaign.truth.clone(),
    }
}

/// Root mean square of the in-plane residual components at ground truth.
fn planar_rms_at_truth(spec: &CampaignSpec) -> (f64, usize) {
    let cfg = demo::machine();
    let plate = demo::plate();
    let c = generate_campaign(spec, &plate, &cfg).unwrap();
    let r = stack_residuals(
        &c.measurements,
        &truth_vector(demo::true_errors(), &c),
        &plate,
        &cfg,
    )
    .unwrap();
    let planar: Vec<f64> = r
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 3 != 2)
        .map(|(_, v)| *v)
        .collect();
    (planar.iter().map(|v| v * v).sum(), planar.len())
}

#[test]
fn same_seed_is_bit_identical() {
    let cfg = demo::machine();
    let plate = demo::plate();
    let spec = demo::campaign(demo::noise(), 7);
    let a = generate_campaign(&spec, &plate, &cfg).unwrap();
    let b = generate_campaign(&spec, &plate, &cfg).unwrap();
    assert_eq!(a, b);
    let c = generate_campaign(&demo::campaign(demo::noise(), 8), &plate, &cfg).unwrap();
    assert_ne!(a.measurements, c.measurements);
}

#[test]
fn noiseless_campaign_lands_on_sensors() {
    let cfg = demo::machine();
    let plate = demo::plate();
    let spec = demo::noiseless_campaign();
    let c = generate_campaign(&spec, &plate, &cfg).unwrap();
    let truth = demo::true_errors();
    assert_eq!(c.measurements.len(), 8);
    for ((m, ext), pose) in c.measurements.iter().zip(&c.truth).zip(&spec.plate_poses) {
        assert_eq!(m.encoder_snapshots.len(), 4);
        assert_eq!(m.gamma_guess, pose.gamma);
        for (k, sensor) in plate.sensors.iter().enumerate() {
            let target = platecal::model::plate_to_inertial(pose, sensor);
            let hit =
                impact_point(&m.encoder_snapshots[k], &truth, ext.laser_lengths[k], &cfg).unwrap();
            assert!((hit - target).norm() < 1e-9);
            let guess = m.laser_length_guess[k];
            assert_eq!(guess % 5.0, 0.0);
            assert!((guess - ext.laser_lengths[k]).abs() <= 2.5);
        }
    }
    let r = stack_residuals(&c.measurements, &truth_vector(truth, &c), &plate, &cfg).unwrap();
    assert_eq!(r.len(), 72);
    assert!(r.amax() < 1e-9);
}

#[test]
fn missing_ground_truth_is_rejected() {
    let mut cfg = demo::machine();
    cfg.true_errors = None;
    let err = generate_campaign(&demo::noiseless_campaign(), &demo::plate(), &cfg).unwrap_err();
    assert!(err.to_string().contains("simulation requires ground truth"));
}

#[test]
fn unreachable_pose_is_reported() {
    let cfg = demo::machine();
    let plate = demo::plate();
    let mut spec = demo::noiseless_campaign();
    spec.plate_poses[0] = demo::pose_centered(&plate, 2000.0, 200.0, 0.0);
    let err = generate_campaign(&spec, &plate, &cfg).unwrap_err();
    assert!(matches!(err, CalibError::Unreachable(_)), "{err}");
}

#[test]
fn centering_noise_gives_root_two_sigma() {
    let sigma = 0.05;
    let noise = NoiseModel {
        centering_sigma: sigma,
        ..Default::default()
    };
    let (mut sum, mut count) = (0.0, 0);
    for seed in 0..1000 {
        let (s, c) = planar_rms_at_truth(&demo::campaign(noise, seed));
        sum += s;
        count += c;
    }
    let rms = (sum / count as f64).sqrt();
    let expected = 2f64.sqrt() * sigma;
    assert!(
        (rms / expected - 1.0).abs() < 0.05,
        "rms {rms}, expected {expected}"
    );
}

#[test]
fn doubling_sigma_doubles_rms() {
    let rms = |sigma: f64| {
        let noise = NoiseModel {
            centering_sigma: sigma,
            ..Default::default()
        };
        let (mut sum, mut count) = (0.0, 0);
        for seed in 1000..2000 {
            let (s, c) = planar_rms_at_truth(&demo::campaign(noise, seed));
            sum += s;
            count += c;
        }
        (sum / count as f64).sqrt()
    };
    let ratio = rms(0.1) / rms(0.05);
    assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn raster_examples() {
    let mut cfg = demo::machine();
    cfg.work_volume = platecal::WorkVolume::new([0.0; 3], [1000.0, 500.0, 0.0]).unwrap();
    cfg.true_errors = Some(ErrorParams::zero());
    let raster = generate_raster(&cfg, 250.0).unwrap();
    assert_eq!(raster.grid_points.len(), 15);
    for (q, r) in raster.grid_points.iter().zip(&raster.true_positions) {
        assert!((r - (q + cfg.tool_offset)).norm() < 1e-12);
    }
    cfg.true_errors = Some(ErrorParams {
        alpha_xy: 1e-3,
        ..Default::default()
    });
    let raster = generate_raster(&cfg, 250.0).unwrap();
    let i = raster
        .grid_points
        .iter()
        .position(|q| *q == Vector3::new(0.0, 500.0, 0.0))
        .unwrap();
    assert!((raster.true_positions[i].x - 0.5).abs() < 1e-6);
    assert!(generate_raster(&cfg, 2000.0).is_err());
}

/// A small campaign in the middle of the work volume so it can be shifted.
fn central_spec(seed: u64, shift: Vector3<f64>) -> CampaignSpec {
    let plate = demo::plate();
    let poses = [
        (-1.2, 350.0, 180.0),
        (0.4, 450.0, 230.0),
        (2.0, 550.0, 200.0),
    ]
    .iter()
    .map(|&(g, cx, cy)| {
        let p = demo::pose_centered(&plate, cx, cy, g);
        PlatePose::new(p.position + shift, p.gamma)
    })
    .collect();
    CampaignSpec {
        plate_poses: poses,
        carriage_heights: vec![0.0, 30.0, 10.0],
        noise: NoiseModel::default(),
        rng_seed: seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn truth_residual_vanishes(
        seed in any::<u64>(),
        yaws in prop::collection::vec(-3.1..3.1f64, 2..9),
        scale in 0.0..3.0f64,
    ) {
        let cfg = demo::machine().with_true_errors(demo::true_errors().scaled(scale));
        let plate = demo::plate();
        let m = yaws.len();
        let spec = CampaignSpec {
            plate_poses: yaws
                .iter()
                .enumerate()
                .map(|(j, &g)| demo::pose_centered(&plate, 200.0 + 600.0 * j as f64 / m as f64, 250.0, g))
                .collect(),
            carriage_heights: (0..m).map(|j| (j * 7 % 50) as f64).collect(),
            noise: NoiseModel::default(),
            rng_seed: seed,
        };
        let c = generate_campaign(&spec, &plate, &cfg).unwrap();
        let truth = truth_vector(cfg.true_errors.unwrap(), &c);
        let r = stack_residuals(&c.measurements, &truth, &plate, &cfg).unwrap();
        prop_assert_eq!(r.len(), 9 * m);
        prop_assert!(r.amax() < 1e-9);
    }

    #[test]
    fn residual_invariant_under_plate_translation(
        forward in any::<bool>(),
        dy in -40.0..40.0f64,
        perturb in prop::array::uniform8(-1e-3..1e-3f64),
    ) {
        let cfg = demo::machine();
        let plate = demo::plate();
        let dx = (100.0f64.powi(2) - dy * dy).sqrt();
        let shift = Vector3::new(if forward { dx } else { -dx }, dy, 0.0);
        let a = generate_campaign(&central_spec(1, Vector3::zeros()), &plate, &cfg).unwrap();
        let b = generate_campaign(&central_spec(1, shift), &plate, &cfg).unwrap();
        let errors = ErrorParams::from_array(perturb);
        let ra = stack_residuals(&a.measurements, &truth_vector(errors, &a), &plate, &cfg).unwrap();
        let rb = stack_residuals(&b.measurements, &truth_vector(errors, &b), &plate, &cfg).unwrap();
        prop_assert!(rb.amax() > 0.0);
        prop_assert!((ra - rb).amax() < 1e-9);
    }
}
