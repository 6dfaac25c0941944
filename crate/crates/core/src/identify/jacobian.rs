//! Block-structured finite-difference Jacobian of the stacked residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::model::{ErrorParams, GantryConfig, PlateGeometry};
use crate::residual::{
    check_dimensions, pose_residuals, IdentVector, ParamLayout, PoseExtrinsics, PoseMeasurement,
};

/// Residuals and Jacobian split into intrinsic and per-pose extrinsic blocks.
///
/// The full Jacobian has the block pattern
///
/// ```text
/// [ Θint¹  Θext¹   0    …   0   ]
/// [ Θint²   0    Θext²  …   0   ]
/// [  ⋮                  ⋱       ]
/// [ Θintᵐ   0     …       Θextᵐ ]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedSystem {
    /// Q, mm.
    pub residuals: DVector<f64>,
    /// rows × 8
    pub intrinsic: DMatrix<f64>,
    /// One `3(n-1) × (n+1)` block per pose, columns `L_1..L_n, γ`.
    pub extrinsic: Vec<DMatrix<f64>>,
}

impl StackedSystem {
    pub fn rows_per_pose(&self) -> usize {
        self.extrinsic.first().map_or(0, |b| b.nrows())
    }

    pub fn layout(&self) -> ParamLayout {
        let sensors = self.extrinsic.first().map_or(0, |b| b.ncols() - 1);
        ParamLayout::new(sensors, self.extrinsic.len())
    }

    /// Dense Θ in the flat parameter order.
    pub fn assemble(&self) -> DMatrix<f64> {
        let layout = self.layout();
        let rows = self.residuals.len();
        let block_rows = self.rows_per_pose();
        let mut theta = DMatrix::zeros(rows, layout.len());
        theta
            .view_mut((0, 0), (rows, ErrorParams::COUNT))
            .copy_from(&self.intrinsic);
        for (j, block) in self.extrinsic.iter().enumerate() {
            theta
                .view_mut(
                    (j * block_rows, layout.pose_offset(j)),
                    (block_rows, layout.block_len()),
                )
                .copy_from(block);
        }
        theta
    }
}

/// Central-difference step for a parameter currently at `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-5_f64.max(1e-5 * x.abs())
}

fn finite_or(name: impl FnOnce() -> String, v: DVector<f64>) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(CalibError::NonFinite(name()))
    }
}

/// Θ by central differences. Extrinsic columns are probed only on the rows
/// of their own pose; everything else is a structural zero.
pub fn jacobian_fd(
    p_id: &IdentVector,
    measurements: &[PoseMeasurement],
    plate: &PlateGeometry,
    cfg: &GantryConfig,
) -> Result<StackedSystem> {
    check_dimensions(measurements, p_id, plate)?;
    let layout = p_id.layout();
    let n = plate.sensor_count();
    let block_rows = 3 * (n - 1);
    let rows = block_rows * measurements.len();

    let stacked = |errors: &ErrorParams| -> Result<DVector<f64>> {
        let mut out = DVector::zeros(rows);
        for (j, (m, e)) in measurements.iter().zip(&p_id.poses).enumerate() {
            out.rows_mut(j * block_rows, block_rows)
                .copy_from(&pose_residuals(m, errors, e, plate, cfg)?);
        }
        Ok(out)
    };

    let residuals = finite_or(|| "initial point".into(), stacked(&p_id.errors)?)?;

    let base = p_id.errors.to_array();
    let mut intrinsic = DMatrix::zeros(rows, ErrorParams::COUNT);
    for (c, name) in ErrorParams::NAMES.iter().enumerate() {
        let h = fd_step(base[c]);
        let (mut plus, mut minus) = (base, base);
        plus[c] += h;
        minus[c] -= h;
        let rp = finite_or(
            || name.to_string(),
            stacked(&ErrorParams::from_array(plus))?,
        )?;
        let rm = finite_or(
            || name.to_string(),
            stacked(&ErrorParams::from_array(minus))?,
        )?;
        intrinsic.set_column(c, &((rp - rm) / (2.0 * h)));
    }

    let mut extrinsic = Vec::with_capacity(measurements.len());
    for (j, (m, ext)) in measurements.iter().zip(&p_id.poses).enumerate() {
        let mut block = DMatrix::zeros(block_rows, n + 1);
        for slot in 0..=n {
            let probe = |delta: f64| -> Result<DVector<f64>> {
                let mut e: PoseExtrinsics = ext.clone();
                if slot == n {
                    e.gamma += delta;
                } else {
                    e.laser_lengths[slot] += delta;
                }
                let name = || layout.name(layout.pose_offset(j) + slot);
                finite_or(name, pose_residuals(m, &p_id.errors, &e, plate, cfg)?)
            };
            let x = if slot == n {
                ext.gamma
            } else {
                ext.laser_lengths[slot]
            };
            let h = fd_step(x);
            block.set_column(slot, &((probe(h)? - probe(-h)?) / (2.0 * h)));
        }
        extrinsic.push(block);
    }

    Ok(StackedSystem {
        residuals,
        intrinsic,
        extrinsic,
    })
}
