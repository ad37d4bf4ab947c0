//! Gauss–Newton with Armijo backtracking on a variable-projection objective.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::varpro::{linearize, objective_and_coeffs, JacobianKind, LinearSolve, SeparableModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    /// Stop as soon as `F < target` (after at least `min_iterations` steps).
    pub target: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Stop when the accepted step has Euclidean norm below this.
    pub step_tol: f64,
    /// A step whose relative decrease of `F` falls below this counts as slow...
    pub stagnation_rel_decrease: f64,
    /// ...and this many slow steps in a row count as stagnation.
    pub stagnation_patience: usize,
    pub jacobian: JacobianKind,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        GaussNewtonOptions {
            target: 0.0,
            min_iterations: 0,
            max_iterations: 50,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            step_tol: 1e-12,
            stagnation_rel_decrease: 1e-3,
            stagnation_patience: 2,
            jacobian: JacobianKind::Kaufman,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussNewtonStatus {
    /// `F < target`.
    Converged,
    /// Consecutive steps made too little progress.
    Stagnated,
    /// No step length satisfied the Armijo condition.
    BacktrackingExhausted,
    StepTooSmall,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub params: Vec<f64>,
    pub solve: LinearSolve,
    pub backtracks: usize,
    pub step_norm: f64,
    /// False when backtracking was exhausted; `params` and `solve` are then unchanged.
    pub accepted: bool,
}

/// Gauss–Newton direction `d = -G⁺ ∇F` with Jacobi scaling and an eigenvalue
/// cutoff, so rank-deficient normal matrices (duplicated Gaussians, frozen
/// directions) still produce a descent direction.
pub fn gauss_newton_direction(normal: &DMatrix<f64>, gradient: &DVector<f64>) -> DVector<f64> {
    let n = gradient.len();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = normal[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| normal[(i, j)] * scale[i] * scale[j]);
    let rhs = DVector::from_fn(n, |i, _| -gradient[i] * scale[i]);
    let eig = SymmetricEigen::new(scaled);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let proj = eig.eigenvectors.transpose() * rhs;
    let inv = DVector::from_fn(n, |i, _| {
        let l = eig.eigenvalues[i];
        if l > 1e-14 * lmax {
            proj[i] / l
        } else {
            0.0
        }
    });
    let z = &eig.eigenvectors * inv;
    DVector::from_fn(n, |i, _| z[i] * scale[i])
}

/// One Gauss–Newton iteration from `params`, whose objective data is `current`.
pub fn gauss_newton_step<M: SeparableModel + ?Sized>(
    model: &M,
    params: &[f64],
    y: &DVector<Complex64>,
    opts: &GaussNewtonOptions,
) -> StepResult {
    let lin = linearize(model, params, y, opts.jacobian);
    let f0 = lin.solve.objective;
    let dir = gauss_newton_direction(&lin.normal, &lin.gradient);
    let slope = lin.gradient.dot(&dir);
    let rejected = |backtracks| StepResult {
        params: params.to_vec(),
        solve: lin.solve.clone(),
        backtracks,
        step_norm: 0.0,
        accepted: false,
    };
    if !(slope < 0.0) {
        return rejected(0);
    }
    let mut lambda = 1.0;
    for backtracks in 0..=opts.max_backtracks {
        let trial: Vec<f64> = params
            .iter()
            .zip(dir.iter())
            .map(|(p, d)| p + lambda * d)
            .collect();
        if model.admissible(&trial) {
            let solve = objective_and_coeffs(model, &trial, y);
            if solve.objective.is_finite() && solve.objective <= f0 + opts.armijo_c1 * lambda * slope {
                return StepResult {
                    params: trial,
                    solve,
                    backtracks,
                    step_norm: lambda * dir.norm(),
                    accepted: true,
                };
            }
        }
        lambda *= opts.backtrack_factor;
    }
    rejected(opts.max_backtracks)
}

#[derive(Debug, Clone)]
pub struct GaussNewtonOutcome {
    pub params: Vec<f64>,
    pub solve: LinearSolve,
    pub iterations: usize,
    pub backtracks: usize,
    pub status: GaussNewtonStatus,
    /// Objective after every iteration, starting with the initial value.
    pub history: Vec<f64>,
}

impl GaussNewtonOutcome {
    pub fn objective(&self) -> f64 {
        self.solve.objective
    }
}

/// Iterates [`gauss_newton_step`] until convergence, stagnation or the
/// iteration cap.
pub fn minimize<M: SeparableModel + ?Sized>(
    model: &M,
    initial: &[f64],
    y: &DVector<Complex64>,
    opts: &GaussNewtonOptions,
) -> GaussNewtonOutcome {
    let mut params = initial.to_vec();
    let mut solve = objective_and_coeffs(model, &params, y);
    let mut history = vec![solve.objective];
    let mut iterations = 0;
    let mut backtracks = 0;
    let mut slow = 0;
    let status = loop {
        if solve.objective < opts.target && iterations >= opts.min_iterations {
            break GaussNewtonStatus::Converged;
        }
        if iterations >= opts.max_iterations {
            break GaussNewtonStatus::MaxIterations;
        }
        let step = gauss_newton_step(model, &params, y, opts);
        iterations += 1;
        backtracks += step.backtracks;
        if !step.accepted {
            history.push(solve.objective);
            break if solve.objective < opts.target {
                GaussNewtonStatus::Converged
            } else {
                GaussNewtonStatus::BacktrackingExhausted
            };
        }
        let f_old = solve.objective;
        params = step.params;
        solve = step.solve;
        history.push(solve.objective);
        if solve.objective < opts.target && iterations >= opts.min_iterations {
            break GaussNewtonStatus::Converged;
        }
        if step.step_norm < opts.step_tol {
            break GaussNewtonStatus::StepTooSmall;
        }
        let rel = if f_old > 0.0 {
            (f_old - solve.objective) / f_old
        } else {
            0.0
        };
        if rel < opts.stagnation_rel_decrease {
            slow += 1;
            if slow >= opts.stagnation_patience {
                break GaussNewtonStatus::Stagnated;
            }
        } else {
            slow = 0;
        }
    };
    GaussNewtonOutcome {
        params,
        solve,
        iterations,
        backtracks,
        status,
        history,
    }
}
