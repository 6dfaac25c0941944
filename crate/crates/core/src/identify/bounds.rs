use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::solver::Box;
use crate::error::{CalibError, Result};
use crate::model::ErrorParams;
use crate::residual::{IdentVector, ParamLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

/// Parameter limits for the constrained identification.
///
/// Anything not mentioned is unbounded. Beam lengths and plate yaw are
/// usually limited relative to their initial guesses; explicit entries in
/// `parameters` (e.g. `"pose3.L2"`) override those windows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// Keyed by intrinsic name (`alpha_xy`, …, `tau_y`).
    #[serde(default)]
    pub intrinsic: BTreeMap<String, Interval>,
    /// Allowed deviation of every beam length from its guess, mm.
    #[serde(default)]
    pub laser_length_window: Option<f64>,
    /// Allowed deviation of every plate yaw from its guess, rad.
    #[serde(default)]
    pub gamma_window: Option<f64>,
    #[serde(default)]
    pub parameters: BTreeMap<String, Interval>,
}

impl BoundsSpec {
    /// `|angle| ≤ angle`, `|scale| ≤ scale` on every intrinsic plus windows
    /// on lengths and yaw.
    pub fn symmetric(angle: f64, scale: f64, length_window: f64, gamma_window: f64) -> Self {
        let intrinsic = ErrorParams::NAMES
            .iter()
            .map(|name| {
                let b = if name.starts_with("s_") { scale } else { angle };
                (name.to_string(), Interval { min: -b, max: b })
            })
            .collect();
        Self {
            intrinsic,
            laser_length_window: Some(length_window),
            gamma_window: Some(gamma_window),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with_parameter(mut self, name: &str, min: f64, max: f64) -> Self {
        self.parameters
            .insert(name.to_string(), Interval { min, max });
        self
    }

    /// Per-index box for the given layout, windows centred on `guess`.
    pub fn resolve(&self, guess: &IdentVector) -> Result<Box> {
        let layout: ParamLayout = guess.layout();
        let mut lower = DVector::from_element(layout.len(), f64::NEG_INFINITY);
        let mut upper = DVector::from_element(layout.len(), f64::INFINITY);

        for (name, iv) in &self.intrinsic {
            let i = ErrorParams::NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| CalibError::InvalidInput(format!("unknown intrinsic `{name}`")))?;
            lower[i] = iv.min;
            upper[i] = iv.max;
        }
        for (j, pose) in guess.poses.iter().enumerate() {
            if let Some(w) = self.laser_length_window {
                for (k, l) in pose.laser_lengths.iter().enumerate() {
                    let i = layout.laser_length(j, k);
                    lower[i] = l - w;
                    upper[i] = l + w;
                }
            }
            if let Some(w) = self.gamma_window {
                let i = layout.gamma(j);
                lower[i] = pose.gamma - w;
                upper[i] = pose.gamma + w;
            }
        }
        for (name, iv) in &self.parameters {
            let i = layout
                .index_of(name)
                .ok_or_else(|| CalibError::InvalidInput(format!("unknown parameter `{name}`")))?;
            lower[i] = iv.min;
            upper[i] = iv.max;
        }
        let b = Box { lower, upper };
        b.validate(|i| layout.name(i))?;
        Ok(b)
    }
}
