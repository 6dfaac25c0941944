use serde::{Deserialize, Serialize};

use super::solver::{condition_from, describe_direction, LeastSquaresProblem, ScaledJacobian};
use super::CalibrationProblem;
use crate::error::Result;
use crate::model::{GantryConfig, PlateGeometry};
use crate::residual::{IdentVector, PoseMeasurement};

/// Singular values below this fraction of the largest are flagged.
pub const WEAK_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakDirection {
    pub singular_value: f64,
    /// Dominant parameters with their weight in the unit singular vector.
    pub components: Vec<(String, f64)>,
}

impl WeakDirection {
    pub fn involves(&self, prefix: &str) -> bool {
        self.components.iter().any(|(n, _)| n.contains(prefix))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub equations: usize,
    /// Size of the full parameter layout, `8 + m(n+1)`.
    pub unknowns: usize,
    pub underdetermined: bool,
    /// Descending, of the column-scaled Jacobian over the free parameters.
    pub singular_values: Vec<f64>,
    /// `None` when the smallest singular value is zero.
    pub condition_number: Option<f64>,
    pub flagged: Vec<WeakDirection>,
    pub fixed_parameters: Vec<String>,
}

/// SVD diagnostics of the linearized problem at `p_id`.
pub fn identifiability_report(
    measurements: &[PoseMeasurement],
    plate: &PlateGeometry,
    cfg: &GantryConfig,
    p_id: &IdentVector,
) -> Result<IdentifiabilityReport> {
    let problem = CalibrationProblem::new(measurements, plate, cfg)?;
    let layout = problem.layout();
    let (equations, unknowns) = (layout.rows(), layout.len());
    let free = problem.free_indices();
    let fixed_parameters = problem.fixed_parameters();

    if equations < unknowns || equations < free.len() {
        return Ok(IdentifiabilityReport {
            equations,
            unknowns,
            underdetermined: true,
            singular_values: Vec::new(),
            condition_number: None,
            flagged: Vec::new(),
            fixed_parameters,
        });
    }

    let jac = problem.jacobian(&p_id.pack())?;
    let scaled = ScaledJacobian::new(&jac, &free);
    let (singular_values, vectors) = scaled.singular_system();
    let condition = condition_from(&singular_values);
    let max = singular_values.first().copied().unwrap_or(0.0);
    let flagged = singular_values
        .iter()
        .zip(&vectors)
        .filter(|(s, _)| **s < WEAK_RATIO * max)
        .map(|(s, v)| WeakDirection {
            singular_value: *s,
            components: describe_direction(&problem, &free, v),
        })
        .collect();

    Ok(IdentifiabilityReport {
        equations,
        unknowns,
        underdetermined: false,
        singular_values,
        condition_number: condition.is_finite().then_some(condition),
        flagged,
        fixed_parameters,
    })
}
