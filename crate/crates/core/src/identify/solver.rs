//! Gauss–Newton iterations on column-scaled Jacobians.
//!
//! Both solvers work on an abstract [`LeastSquaresProblem`]. Parameters the
//! problem marks as not free keep their initial value. Jacobian columns are
//! divided by their norms so that mm-per-rad and mm-per-mm columns are
//! comparable; step norms, gradients and condition numbers all refer to the
//! scaled problem.

use nalgebra::{DMatrix, DVector};

use crate::error::{CalibError, Result};

/// Floor on column norms before scaling.
pub const COLUMN_NORM_FLOOR: f64 = 1e-12;
/// Scaled condition number above which the system is reported singular.
pub const SINGULAR_CONDITION: f64 = 1e10;
/// Consecutive cost increases tolerated by plain Gauss–Newton.
pub const DIVERGENCE_RUN: usize = 5;

pub trait LeastSquaresProblem {
    fn parameter_count(&self) -> usize;

    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn is_free(&self, _index: usize) -> bool {
        true
    }

    fn parameter_name(&self, index: usize) -> String {
        format!("p{index}")
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.parameter_count())
            .filter(|&i| self.is_free(i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Convergence threshold on the scaled step (and scaled projected gradient).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub params: DVector<f64>,
    /// Parameter updates larger than the tolerance.
    pub iterations: usize,
    pub converged: bool,
    /// `½·‖r‖²`.
    pub final_cost: f64,
    pub step_norms: Vec<f64>,
    /// Cost after every accepted update, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub condition_number: f64,
    pub active: Vec<usize>,
}

pub fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Column-scaled Jacobian restricted to the free parameters.
#[derive(Debug, Clone)]
pub struct ScaledJacobian {
    pub matrix: DMatrix<f64>,
    pub norms: Vec<f64>,
    pub free: Vec<usize>,
}

impl ScaledJacobian {
    pub fn new(jacobian: &DMatrix<f64>, free: &[usize]) -> Self {
        let mut matrix = DMatrix::zeros(jacobian.nrows(), free.len());
        let mut norms = Vec::with_capacity(free.len());
        for (c, &i) in free.iter().enumerate() {
            let col = jacobian.column(i);
            let n = col.norm().max(COLUMN_NORM_FLOOR);
            matrix.set_column(c, &(col / n));
            norms.push(n);
        }
        Self {
            matrix,
            norms,
            free: free.to_vec(),
        }
    }

    /// Singular values in descending order with matching right singular vectors.
    pub fn singular_system(&self) -> (Vec<f64>, Vec<DVector<f64>>) {
        let svd = self.matrix.clone().svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let values = order.iter().map(|&i| svd.singular_values[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| v_t.row(i).transpose().into_owned())
            .collect();
        (values, vectors)
    }

    pub fn condition_number(&self) -> f64 {
        let (values, _) = self.singular_system();
        condition_from(&values)
    }
}

pub fn condition_from(singular_values: &[f64]) -> f64 {
    match (singular_values.first(), singular_values.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        _ => f64::INFINITY,
    }
}

/// Names the dominant parameters of a unit direction in scaled space.
pub fn describe_direction<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    free: &[usize],
    v: &DVector<f64>,
) -> Vec<(String, f64)> {
    let mut parts: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
    parts.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    let mut out = Vec::new();
    let mut captured = 0.0;
    for (c, w) in parts {
        if captured >= 0.95 || w.abs() < 0.05 {
            break;
        }
        captured += w * w;
        out.push((problem.parameter_name(free[c]), w));
    }
    out
}

pub fn format_direction(parts: &[(String, f64)]) -> String {
    parts
        .iter()
        .map(|(n, w)| format!("{w:+.3}·{n}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn singular_error<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    scaled: &ScaledJacobian,
) -> CalibError {
    let (values, vectors) = scaled.singular_system();
    let condition = condition_from(&values);
    let max = values.first().copied().unwrap_or(0.0);
    let directions = values
        .iter()
        .zip(&vectors)
        .filter(|(s, _)| **s * SINGULAR_CONDITION <= max || **s == 0.0)
        .map(|(_, v)| format_direction(&describe_direction(problem, &scaled.free, v)))
        .collect();
    CalibError::SingularSystem {
        condition,
        directions,
    }
}

fn check_counts<P: LeastSquaresProblem + ?Sized>(problem: &P, rows: usize) -> Result<Vec<usize>> {
    let free = problem.free_indices();
    if rows < free.len() {
        return Err(CalibError::Underdetermined {
            equations: rows,
            unknowns: free.len(),
        });
    }
    Ok(free)
}

/// Iterated linearized least squares: `p ← p − Θ⁺·Q`, with `Θ⁺` applied by
/// a QR factorisation of the column-scaled Jacobian.
pub fn gauss_newton<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    initial: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<Solution> {
    let mut params = initial.clone();
    let mut r = problem.residuals(&params)?;
    let free = check_counts(problem, r.len())?;
    let mut f = cost(&r);
    let mut cost_history = vec![f];
    let mut step_norms = Vec::new();
    let mut iterations = 0;
    let mut growth_run = 0;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let jac = problem.jacobian(&params)?;
        let scaled = ScaledJacobian::new(&jac, &free);
        if scaled.condition_number() > SINGULAR_CONDITION {
            return Err(singular_error(problem, &scaled));
        }
        let qr = scaled.matrix.clone().qr();
        let rhs = qr.q().transpose() * (-&r);
        let step = qr
            .r()
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| singular_error(problem, &scaled))?;

        for (c, &i) in free.iter().enumerate() {
            params[i] += step[c] / scaled.norms[c];
        }
        let step_norm = step.norm();
        step_norms.push(step_norm);
        r = problem.residuals(&params)?;
        let f_new = cost(&r);
        cost_history.push(f_new);
        growth_run = if f_new > f { growth_run + 1 } else { 0 };
        f = f_new;
        if growth_run >= DIVERGENCE_RUN {
            return Err(CalibError::Diverged(growth_run));
        }
        if step_norm < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
    }

    let condition_number =
        ScaledJacobian::new(&problem.jacobian(&params)?, &free).condition_number();
    Ok(Solution {
        params,
        iterations,
        converged,
        final_cost: f,
        step_norms,
        cost_history,
        condition_number,
        active: Vec::new(),
    })
}

/// Box constraints per parameter; infinite entries mean unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Box {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Box {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn validate(&self, names: impl Fn(usize) -> String) -> Result<()> {
        for i in 0..self.lower.len() {
            if !(self.lower[i] < self.upper[i]) {
                return Err(CalibError::BoundInfeasible(format!(
                    "{}: min {} >= max {}",
                    names(i),
                    self.lower[i],
                    self.upper[i]
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, i: usize, v: f64) -> f64 {
        v.max(self.lower[i]).min(self.upper[i])
    }

    pub fn project(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            p.len(),
            p.iter().enumerate().map(|(i, v)| self.clamp(i, *v)),
        )
    }

    pub fn is_active(&self, i: usize, v: f64) -> bool {
        let near = |b: f64| b.is_finite() && (v - b).abs() <= 1e-12 * b.abs().max(1.0);
        near(self.lower[i]) || near(self.upper[i])
    }
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_DOWN: f64 = 0.3;
const LAMBDA_UP: f64 = 3.0;
const LAMBDA_MAX: f64 = 1e16;

/// Damped Gauss–Newton with projection onto a box.
///
/// Trial steps solve `(ΘᵀΘ + λ·diag(ΘᵀΘ))·Δp = −ΘᵀQ`, are projected onto the
/// box and accepted when the cost does not increase.
pub fn projected_gauss_newton<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    initial: &DVector<f64>,
    bounds: &Box,
    opts: &SolveOptions,
) -> Result<Solution> {
    let n = problem.parameter_count();
    if bounds.lower.len() != n || bounds.upper.len() != n {
        return Err(CalibError::DimensionMismatch(format!(
            "bounds cover {} parameters, problem has {n}",
            bounds.lower.len()
        )));
    }
    bounds.validate(|i| problem.parameter_name(i))?;

    let mut params = bounds.project(initial);
    let mut r = problem.residuals(&params)?;
    let free = check_counts(problem, r.len())?;
    let mut f = cost(&r);
    let mut cost_history = vec![f];
    let mut step_norms = Vec::new();
    let mut iterations = 0;
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let jac = problem.jacobian(&params)?;
        let scaled = ScaledJacobian::new(&jac, &free);
        if scaled.condition_number() > SINGULAR_CONDITION {
            return Err(singular_error(problem, &scaled));
        }
        let js = &scaled.matrix;
        let gradient = js.transpose() * &r;

        let projected_gradient = DVector::from_iterator(
            free.len(),
            free.iter().enumerate().map(|(c, &i)| {
                let s = scaled.norms[c];
                let moved = bounds.clamp(i, params[i] - gradient[c] / s);
                (params[i] - moved) * s
            }),
        );
        let gradient_small = projected_gradient.norm() < opts.tol * (1.0 + f);

        let normal = js.transpose() * js;
        let mut accepted = None;
        while lambda <= LAMBDA_MAX {
            let mut damped = normal.clone();
            for c in 0..free.len() {
                damped[(c, c)] += lambda * normal[(c, c)].max(COLUMN_NORM_FLOOR);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= LAMBDA_UP;
                continue;
            };
            let step = chol.solve(&(-&gradient));
            let mut trial = params.clone();
            for (c, &i) in free.iter().enumerate() {
                trial[i] = bounds.clamp(i, params[i] + step[c] / scaled.norms[c]);
            }
            let r_trial = problem.residuals(&trial)?;
            let f_trial = cost(&r_trial);
            if f_trial <= f {
                let taken = free
                    .iter()
                    .enumerate()
                    .map(|(c, &i)| ((trial[i] - params[i]) * scaled.norms[c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                accepted = Some((trial, r_trial, f_trial, taken));
                lambda = (lambda * LAMBDA_DOWN).max(1e-12);
                break;
            }
            lambda *= LAMBDA_UP;
        }

        let Some((trial, r_trial, f_trial, taken)) = accepted else {
            // No descent left at any damping: stationary up to rounding.
            step_norms.push(0.0);
            converged = gradient_small;
            break;
        };
        params = trial;
        r = r_trial;
        f = f_trial;
        cost_history.push(f);
        step_norms.push(taken);
        if taken < opts.tol || gradient_small {
            converged = true;
            if taken >= opts.tol {
                iterations += 1;
            }
            break;
        }
        iterations += 1;
    }

    let active = free
        .iter()
        .copied()
        .filter(|&i| bounds.is_active(i, params[i]))
        .collect();
    let condition_number =
        ScaledJacobian::new(&problem.jacobian(&params)?, &free).condition_number();
    Ok(Solution {
        params,
        iterations,
        converged,
        final_cost: f,
        step_norms,
        cost_history,
        condition_number,
        active,
    })
}
