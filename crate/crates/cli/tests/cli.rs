use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use platecal_cli::schema::{
    read_file, IdentifiabilityFile, MeasurementsFile, RasterFile, ReportFile, ValidationFile,
};
use serde_json::{json, Value};
use tempfile::TempDir;

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/demo");

/// Copy of the demo project in a scratch directory, output under `out/`.
struct Project {
    dir: TempDir,
}

impl Project {
    fn demo() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for name in ["machine", "plate", "campaign", "bounds", "platecal"] {
            fs::copy(
                Path::new(DEMO).join(format!("{name}.json")),
                dir.path().join(format!("{name}.json")),
            )
            .unwrap();
        }
        let p = Self { dir };
        p.edit("platecal", |v| v["output_dir"] = json!("out"));
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.path("out").join(name)
    }

    fn edit(&self, file: &str, f: impl FnOnce(&mut Value)) {
        let path = self.path(&format!("{file}.json"));
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        f(&mut v);
        fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.path("platecal.json");
        Command::new(env!("CARGO_BIN_EXE_platecal"))
            .args(args)
            .arg("--config")
            .arg(config)
            .output()
            .unwrap()
    }

    fn run_ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn demo_pipeline_end_to_end() {
    let p = Project::demo();
    let summary = p.run_ok(&["simulate"]);
    assert!(summary.contains("m=8 poses, n=4 sensors"));
    let m: MeasurementsFile = read_file(&p.out("measurements.json")).unwrap();
    assert_eq!(m.poses.len(), 8);
    assert!(m.poses.iter().all(|pose| pose.encoder_snapshots.len() == 4));
    read_file::<RasterFile>(&p.out("raster.json")).unwrap();

    p.run_ok(&["identify"]);
    let ls: ReportFile = read_file(&p.out("report_ls.json")).unwrap();
    let con: ReportFile = read_file(&p.out("report_constrained.json")).unwrap();
    assert!(ls.converged && con.converged);

    let table = p.run_ok(&["validate"]);
    assert!(table.contains("Uncalibrated machine"));
    assert!(table.contains("Calibration plate (ls)"));
    let v: ValidationFile = read_file(&p.out("validation.json")).unwrap();
    assert_eq!(v.rows.len(), 3);
    for row in &v.rows[1..] {
        assert!(row.reduction_percent.unwrap() >= 85.0, "{row:?}");
    }
    let csv = fs::read_to_string(p.out("error_field_uncalibrated.csv")).unwrap();
    assert_eq!(csv.lines().count(), v.raster_points + 1);
    assert!(p.out("error_field_constrained.csv").is_file());

    let text = p.run_ok(&["report"]);
    assert!(text.contains("not identifiable from this campaign: alpha_xz, alpha_yz, s_z"));
    read_file::<IdentifiabilityFile>(&p.out("identifiability_ls.json")).unwrap();
}

#[test]
fn seed_override_is_reproducible() {
    let p = Project::demo();
    p.run_ok(&["simulate", "--seed", "5"]);
    let a = fs::read(p.out("measurements.json")).unwrap();
    p.run_ok(&["simulate", "--seed", "5"]);
    assert_eq!(a, fs::read(p.out("measurements.json")).unwrap());
    p.run_ok(&["simulate", "--seed", "6"]);
    assert_ne!(a, fs::read(p.out("measurements.json")).unwrap());
}

#[test]
fn simulation_without_ground_truth_fails() {
    let p = Project::demo();
    p.edit("machine", |v| {
        v.as_object_mut().unwrap().remove("true_errors");
    });
    let out = p.run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("simulation requires ground truth"));
}

#[test]
fn noiseless_methods_agree() {
    let p = Project::demo();
    p.edit("campaign", |v| {
        v["noise"] =
            json!({"centering_sigma": 0.0, "encoder_sigma": 0.0, "gamma_guess_sigma": 0.0});
    });
    p.run_ok(&["simulate"]);
    p.run_ok(&["identify", "--method", "both"]);
    let ls: ReportFile = read_file(&p.out("report_ls.json")).unwrap();
    let con: ReportFile = read_file(&p.out("report_constrained.json")).unwrap();
    for (a, b) in ls
        .intrinsics
        .to_array()
        .iter()
        .zip(con.intrinsics.to_array())
    {
        assert!(
            (a - b).abs() <= 1e-6 * a.abs().max(b.abs()) + 1e-15,
            "{a} vs {b}"
        );
    }
}

#[test]
fn single_pose_is_underdetermined() {
    let p = Project::demo();
    p.edit("campaign", |v| {
        v["poses"].as_array_mut().unwrap().truncate(1);
    });
    p.run_ok(&["simulate"]);
    let out = p.run(&["identify", "--method", "ls"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("underdetermined: 9 equations < 13 unknowns"));
}

#[test]
fn corrupt_measurements_name_the_field() {
    let p = Project::demo();
    p.run_ok(&["simulate"]);
    let path = p.out("measurements.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["poses"][2]["gamma_guess"] = json!("north");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let out = p.run(&["identify"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("poses[2].gamma_guess"), "{msg}");
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let p = Project::demo();
    p.edit("plate", |v| v["color"] = json!("blue"));
    let out = p.run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("color"));

    let p = Project::demo();
    p.edit("campaign", |v| v["schema_version"] = json!(7));
    let out = p.run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("schema_version"));

    let p = Project::demo();
    p.edit("platecal", |v| v["plate_file"] = json!("nowhere.json"));
    assert_eq!(p.run(&["simulate"]).status.code(), Some(2));
}

#[test]
fn zero_estimate_reproduces_uncalibrated_field() {
    let p = Project::demo();
    p.run_ok(&["simulate"]);
    p.run_ok(&["identify", "--method", "ls"]);
    let path = p.out("report_ls.json");
    let mut r: ReportFile = read_file(&path).unwrap();
    r.intrinsics = platecal::ErrorParams::zero();
    platecal_cli::schema::write_file(&r, &path).unwrap();
    p.run_ok(&["validate", "--method", "ls"]);
    let v: ValidationFile = read_file(&p.out("validation.json")).unwrap();
    assert_eq!(v.rows[0].delta_mean, v.rows[1].delta_mean);
    assert_eq!(v.rows[0].delta_max, v.rows[1].delta_max);
    assert_eq!(v.rows[1].reduction_percent, Some(0.0));
}

#[test]
fn validate_without_raster_fails() {
    let p = Project::demo();
    fs::create_dir_all(p.path("out")).unwrap();
    let out = p.run(&["validate"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("reference raster"));
}

#[test]
fn outputs_reparse_under_their_schemas() {
    let p = Project::demo();
    for cmd in ["simulate", "identify", "validate", "report"] {
        p.run_ok(&[cmd]);
    }
    fn roundtrip<T>(path: &Path)
    where
        T: serde::de::DeserializeOwned + serde::Serialize + platecal_cli::schema::Versioned,
    {
        let text = fs::read_to_string(path).unwrap();
        let v: T = read_file(path).unwrap();
        assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text);
    }
    roundtrip::<MeasurementsFile>(&p.out("measurements.json"));
    roundtrip::<RasterFile>(&p.out("raster.json"));
    roundtrip::<ReportFile>(&p.out("report_ls.json"));
    roundtrip::<ReportFile>(&p.out("report_constrained.json"));
    roundtrip::<ValidationFile>(&p.out("validation.json"));
    roundtrip::<IdentifiabilityFile>(&p.out("identifiability_constrained.json"));
    let field = platecal::validate::import_error_field(&p.out("error_field_ls.csv")).unwrap();
    let v: ValidationFile = read_file(&p.out("validation.json")).unwrap();
    assert!((field.delta_mean - v.rows[1].delta_mean).abs() < 1e-5);
}
