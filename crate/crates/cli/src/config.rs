use std::fs;
use std::path::{Path, PathBuf};

use platecal::{Method, SolveOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::schema::{parse, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Ls,
    Constrained,
    #[default]
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Ls => vec![Method::Ls],
            MethodChoice::Constrained => vec![Method::Constrained],
            MethodChoice::Both => vec![Method::Ls, Method::Constrained],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            step_tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

/// Project file as written on disk; paths are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub schema_version: u32,
    pub machine_file: PathBuf,
    pub plate_file: PathBuf,
    pub campaign_file: PathBuf,
    #[serde(default)]
    pub bounds_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Project configuration with absolute paths and command-line overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub machine_file: PathBuf,
    pub plate_file: PathBuf,
    pub campaign_file: PathBuf,
    pub bounds_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub method: MethodChoice,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<MethodChoice>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ProjectConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let file: ProjectFile = parse(&text, path)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                file.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| base.join(p);
        let cfg = Self {
            machine_file: resolve(&file.machine_file),
            plate_file: resolve(&file.plate_file),
            campaign_file: resolve(&file.campaign_file),
            bounds_file: file.bounds_file.as_deref().map(resolve),
            output_dir: overrides
                .out
                .clone()
                .unwrap_or_else(|| resolve(&file.output_dir)),
            method: overrides.method.unwrap_or(file.method),
            tolerances: file.tolerances,
            seed: overrides.seed,
        };
        cfg.check_inputs()?;
        Ok(cfg)
    }

    fn check_inputs(&self) -> Result<()> {
        let mut required = vec![
            ("machine_file", &self.machine_file),
            ("plate_file", &self.plate_file),
            ("campaign_file", &self.campaign_file),
        ];
        if let Some(b) = &self.bounds_file {
            required.push(("bounds_file", b));
        }
        for (name, p) in required {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "{name} `{}` does not exist",
                    p.display()
                )));
            }
        }
        let t = &self.tolerances;
        if !(t.step_tol > 0.0) || t.max_iter == 0 {
            return Err(CliError::Config(
                "tolerances: step_tol must be > 0 and max_iter >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tolerances.step_tol,
            max_iter: self.tolerances.max_iter,
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
