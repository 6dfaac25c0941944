use std::fmt::Write as _;
use std::fs;

use platecal::simulate::{generate_campaign, generate_raster};
use platecal::validate::{export_error_field, raster_compare};
use platecal::{
    identifiability_report, solve_constrained, solve_ls, BoundsSpec, ErrorParams, IdentVector,
    Method,
};

use crate::config::ProjectConfig;
use crate::error::{CliError, Result};
use crate::schema::{
    read_file, write_file, BoundsFile, CampaignFile, FieldSummary, IdentifiabilityFile,
    MachineFile, MeasurementsFile, PlateFile, RasterFile, ReportFile, Units, ValidationFile,
    SCHEMA_VERSION,
};

pub const MEASUREMENTS: &str = "measurements.json";
pub const RASTER: &str = "raster.json";
pub const VALIDATION: &str = "validation.json";
pub const SUMMARY: &str = "summary.txt";
pub const UNCALIBRATED_CSV: &str = "error_field_uncalibrated.csv";

pub fn report_name(method: Method) -> String {
    format!("report_{}.json", method.as_str())
}

pub fn error_field_name(method: Method) -> String {
    format!("error_field_{}.csv", method.as_str())
}

fn identifiability_name(method: Method) -> String {
    format!("identifiability_{}.json", method.as_str())
}

fn ensure_output_dir(cfg: &ProjectConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))
}

/// Generates a campaign and the reference raster from the machine's ground truth.
pub fn simulate(cfg: &ProjectConfig) -> Result<String> {
    let machine = read_file::<MachineFile>(&cfg.machine_file)?.to_config()?;
    let plate = read_file::<PlateFile>(&cfg.plate_file)?.to_geometry()?;
    let campaign: CampaignFile = read_file(&cfg.campaign_file)?;
    let seed = cfg.seed.unwrap_or(campaign.seed);
    let spec = campaign.to_spec(seed);
    let generated = generate_campaign(&spec, &plate, &machine)?;
    let raster = generate_raster(&machine, campaign.raster_spacing)?;

    ensure_output_dir(cfg)?;
    write_file(
        &MeasurementsFile {
            schema_version: SCHEMA_VERSION,
            units: Units::default(),
            poses: generated.measurements.clone(),
        },
        &cfg.output(MEASUREMENTS),
    )?;
    write_file(
        &RasterFile::from_reference(&raster, campaign.raster_spacing),
        &cfg.output(RASTER),
    )?;

    let n = &spec.noise;
    Ok(format!(
        "campaign: m={} poses, n={} sensors, seed={seed}\n\
         noise: centering {} mm, encoder {} mm, yaw guess {} rad\n\
         raster: {} points at {} mm spacing\n",
        generated.measurements.len(),
        plate.sensor_count(),
        n.centering_sigma,
        n.encoder_sigma,
        n.gamma_guess_sigma,
        raster.grid_points.len(),
        campaign.raster_spacing,
    ))
}

fn load_bounds(cfg: &ProjectConfig) -> Result<BoundsSpec> {
    match &cfg.bounds_file {
        Some(p) => Ok(read_file::<BoundsFile>(p)?.bounds),
        None => Ok(BoundsSpec::default()),
    }
}

/// Runs the selected estimator(s) on the simulated or recorded measurements.
pub fn identify(cfg: &ProjectConfig) -> Result<String> {
    let machine = read_file::<MachineFile>(&cfg.machine_file)?.to_config()?;
    let plate = read_file::<PlateFile>(&cfg.plate_file)?.to_geometry()?;
    let measurements = read_file::<MeasurementsFile>(&cfg.output(MEASUREMENTS))?.poses;
    let opts = cfg.solve_options();
    ensure_output_dir(cfg)?;

    let mut out = String::new();
    let mut failed = Vec::new();
    for method in cfg.method.methods() {
        let report = match method {
            Method::Ls => solve_ls(&measurements, &plate, &machine, &opts)?,
            Method::Constrained => {
                solve_constrained(&measurements, &plate, &machine, &load_bounds(cfg)?, &opts)?
            }
        };
        write_file(
            &ReportFile::from(&report),
            &cfg.output(&report_name(method)),
        )?;
        let _ = writeln!(
            out,
            "{}: converged={} iterations={} cost={:.6e} mm² condition={:.4}",
            method.as_str(),
            report.converged,
            report.iterations,
            report.final_cost,
            report.condition_number
        );
        for (name, v) in ErrorParams::NAMES
            .iter()
            .zip(report.p_id_hat.errors.to_array())
        {
            let _ = writeln!(out, "  {name:<9} {v:>+.6e}");
        }
        if !report.active_bounds.is_empty() {
            let _ = writeln!(out, "  active bounds: {}", report.active_bounds.join(", "));
        }
        if !report.converged {
            failed.push(method.as_str());
        }
    }
    if failed.is_empty() {
        Ok(out)
    } else {
        print!("{out}");
        Err(CliError::Solver(format!(
            "no convergence within {} iterations: {}",
            opts.max_iter,
            failed.join(", ")
        )))
    }
}

fn label(method: Method) -> String {
    format!("Calibration plate ({})", method.as_str())
}

pub fn format_summary(file: &ValidationFile) -> String {
    let mut s = format!(
        "Planar end-effector error over {} raster points\n\n",
        file.raster_points
    );
    let _ = writeln!(
        s,
        "{:<34} {:>12} {:>12} {:>14}",
        "", "max [mm]", "mean [mm]", "reduction [%]"
    );
    for row in &file.rows {
        let reduction = row
            .reduction_percent
            .map_or_else(|| "-".to_string(), |r| format!("{r:.1}"));
        let _ = writeln!(
            s,
            "{:<34} {:>12.3} {:>12.3} {:>14}",
            row.label, row.delta_max, row.delta_mean, reduction
        );
    }
    s
}

/// Compares uncorrected and corrected kinematics against the reference raster.
pub fn validate(cfg: &ProjectConfig) -> Result<String> {
    let machine = read_file::<MachineFile>(&cfg.machine_file)?.to_config()?;
    let raster_path = cfg.output(RASTER);
    if !raster_path.is_file() {
        return Err(CliError::Io(format!(
            "reference raster `{}` not found; run `simulate` first or supply one",
            raster_path.display()
        )));
    }
    let raster = read_file::<RasterFile>(&raster_path)?.to_reference();

    let uncal = raster_compare(&raster, &ErrorParams::zero(), &machine)?;
    export_error_field(&uncal, &cfg.output(UNCALIBRATED_CSV))?;
    let mut rows = vec![FieldSummary {
        label: "Uncalibrated machine".into(),
        delta_max: uncal.delta_max,
        delta_mean: uncal.delta_mean,
        reduction_percent: None,
    }];
    for method in cfg.method.methods() {
        let report_path = cfg.output(&report_name(method));
        if !report_path.is_file() {
            return Err(CliError::Io(format!(
                "solve report `{}` not found; run `identify` first",
                report_path.display()
            )));
        }
        let report: ReportFile = read_file(&report_path)?;
        let field =
            raster_compare(&raster, &report.intrinsics, &machine)?.with_reduction(&uncal)?;
        export_error_field(&field, &cfg.output(&error_field_name(method)))?;
        rows.push(FieldSummary {
            label: label(method),
            delta_max: field.delta_max,
            delta_mean: field.delta_mean,
            reduction_percent: field.reduction_percent,
        });
    }
    let file = ValidationFile {
        schema_version: SCHEMA_VERSION,
        units: Units::default(),
        raster_points: raster.grid_points.len(),
        rows,
    };
    write_file(&file, &cfg.output(VALIDATION))?;
    let summary = format_summary(&file);
    fs::write(cfg.output(SUMMARY), &summary).map_err(|e| CliError::io(&cfg.output(SUMMARY), e))?;
    Ok(summary)
}

/// Identifiability diagnostics at each stored estimate plus the estimates
/// next to the ground truth when the machine file has one.
pub fn report(cfg: &ProjectConfig) -> Result<String> {
    let machine = read_file::<MachineFile>(&cfg.machine_file)?.to_config()?;
    let plate = read_file::<PlateFile>(&cfg.plate_file)?.to_geometry()?;
    let measurements = read_file::<MeasurementsFile>(&cfg.output(MEASUREMENTS))?.poses;
    let mut out = String::new();
    for method in cfg.method.methods() {
        let path = cfg.output(&report_name(method));
        let r: ReportFile = read_file(&path)?;
        let p_id = IdentVector {
            errors: r.intrinsics,
            poses: r.poses.clone(),
        };
        let ident = identifiability_report(&measurements, &plate, &machine, &p_id)?;
        let _ = writeln!(
            out,
            "{}: {} equations, {} unknowns, condition {}",
            method.as_str(),
            ident.equations,
            ident.unknowns,
            ident
                .condition_number
                .map_or_else(|| "inf".to_string(), |c| format!("{c:.4}"))
        );
        let _ = writeln!(
            out,
            "  {:<9} {:>14} {:>14}",
            "parameter", "estimate", "truth"
        );
        let truth = machine.true_errors.map(|t| t.to_array());
        for (i, (name, v)) in ErrorParams::NAMES
            .iter()
            .zip(r.intrinsics.to_array())
            .enumerate()
        {
            let t = truth.map_or_else(|| "-".to_string(), |t| format!("{:+.6e}", t[i]));
            let _ = writeln!(out, "  {name:<9} {v:>+14.6e} {t:>14}");
        }
        let fixed: Vec<&str> = r
            .fixed_parameters
            .iter()
            .filter(|n| !n.contains(".L1"))
            .map(String::as_str)
            .collect();
        if !fixed.is_empty() {
            let _ = writeln!(
                out,
                "  not identifiable from this campaign: {}",
                fixed.join(", ")
            );
        }
        for d in &ident.flagged {
            let _ = writeln!(
                out,
                "  weak direction σ={:.3e}: {:?}",
                d.singular_value, d.components
            );
        }
        write_file(
            &IdentifiabilityFile {
                schema_version: SCHEMA_VERSION,
                units: Units::default(),
                method,
                report: ident,
            },
            &cfg.output(&identifiability_name(method)),
        )?;
    }
    Ok(out)
}
