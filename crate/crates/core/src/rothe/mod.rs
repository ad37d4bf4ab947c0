//! Rothe propagation of LCG wave functions.
//!
//! Each time step replaces the Crank–Nicolson update by the nonlinear least
//! squares problem
//!
//! ```text
//! min_{α,c} ½‖A_n ψ(α, c) - A_{n-1}^† ψⁿ⁻¹‖²,   A_n = I + i h/2 H(t_n)
//! ```
//!
//! The coefficients are projected out, the reduced objective is minimized by
//! Gauss–Newton with Armijo backtracking warm-started from the previous step,
//! and Gaussians matched to the moments of the residual are added whenever the
//! optimizer stalls above the tolerance.

mod gauss_newton;
mod operator;
mod propagate;
mod varpro;

pub use gauss_newton::{
    gauss_newton_direction, gauss_newton_step, minimize, GaussNewtonOptions, GaussNewtonOutcome,
    GaussNewtonStatus, StepResult,
};
pub use operator::{
    apply_a_gaussian, apply_a_grid, apply_a_state, hamiltonian_on_gaussian, CayleyFactor, Freedom,
};
pub use propagate::{
    augment_basis, rothe_propagate, solve_step, RotheObserver, RotheOptions, RotheRun,
    RotheStepProblem, RotheStepReport,
};
pub use varpro::{
    linearize, objective_and_coeffs, solve_linear, GaussianBasis, JacobianKind, LinearSolve,
    Linearization, SeparableModel, RANK_CUTOFF,
};
