use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gauss_newton::{minimize, GaussNewtonOptions, GaussNewtonStatus};
use super::operator::{apply_a_state, CayleyFactor, Freedom};
use super::varpro::{objective_and_coeffs, GaussianBasis, LinearSolve};
use crate::error::{Error, Result};
use crate::fit::LcgState;
use crate::gaussians::{Gaussian1D, MomentSet};
use crate::grid::GridHamiltonian;

#[derive(Debug, Clone, PartialEq)]
pub struct RotheOptions {
    pub h: f64,
    pub t_end: f64,
    /// Per-step tolerance on the reduced objective.
    pub epsilon: f64,
    /// Gaussians that may be added in a single step before it is declared failed.
    pub max_additions: usize,
    /// `target` and `min_iterations` are overridden per step.
    pub gauss_newton: GaussNewtonOptions,
}

impl Default for RotheOptions {
    fn default() -> Self {
        RotheOptions {
            h: 1e-3,
            t_end: 100.0,
            epsilon: 1e-7,
            max_additions: 5,
            gauss_newton: GaussNewtonOptions::default(),
        }
    }
}

impl RotheOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Config(format!("h must be > 0, got {}", self.h)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        Ok(())
    }

    fn step_optimizer(&self) -> GaussNewtonOptions {
        GaussNewtonOptions {
            target: self.epsilon,
            min_iterations: 1,
            ..self.gauss_newton
        }
    }
}

/// One time layer: find `ψⁿ` with `½‖A_n ψⁿ - y‖² < ε`, `y = A_{n-1}^† ψⁿ⁻¹`.
pub struct RotheStepProblem<'a> {
    pub ham: &'a GridHamiltonian,
    pub t_prev: f64,
    pub h: f64,
    pub target: DVector<Complex64>,
    pub epsilon: f64,
}

impl<'a> RotheStepProblem<'a> {
    pub fn new(ham: &'a GridHamiltonian, previous: &LcgState, h: f64, epsilon: f64) -> Result<Self> {
        let y = apply_a_state(previous, ham, previous.time, h, -1.0)?;
        Ok(RotheStepProblem {
            ham,
            t_prev: previous.time,
            h,
            target: DVector::from_vec(y),
            epsilon,
        })
    }

    pub fn t_next(&self) -> f64 {
        self.t_prev + self.h
    }

    /// Columns `A_n g_k` for the given Gaussians, all parameters free.
    pub fn model(&self, gaussians: Vec<Gaussian1D>) -> GaussianBasis<'a> {
        GaussianBasis::new(
            self.ham,
            CayleyFactor::forward(self.t_next(), self.h),
            Freedom::ALL,
            gaussians,
        )
    }

    /// `F`, optimal coefficients and residual for fixed Gaussians.
    pub fn evaluate(&self, gaussians: &[Gaussian1D]) -> LinearSolve {
        let model = self.model(gaussians.to_vec());
        objective_and_coeffs(&model, &model.pack(gaussians), &self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotheStepReport {
    /// Time of the new layer.
    pub t: f64,
    /// Final `F(αⁿ)`.
    #[serde(rename = "F")]
    pub objective: f64,
    /// `F` at the warm start, before any optimization.
    #[serde(rename = "F0")]
    pub initial_objective: f64,
    #[serde(rename = "gn_iters")]
    pub gn_iterations: usize,
    pub backtracks: usize,
    #[serde(rename = "K_before")]
    pub k_before: usize,
    #[serde(rename = "K")]
    pub k_after: usize,
    pub added: Vec<Gaussian1D>,
}

/// Gaussian whose first and second moments match those of `residual`.
///
/// If the residual's moments admit no Gaussian (possible only through
/// rounding), the chirp `b` is dropped and position/momentum data kept.
pub fn augment_basis(residual: &[Complex64], ham: &GridHamiltonian) -> Result<Gaussian1D> {
    let m = MomentSet::of(residual, ham.spectral())?;
    match Gaussian1D::from_moments(&m) {
        Ok(g) => Ok(g),
        Err(Error::InfeasibleMoments { .. }) => Gaussian1D::new(0.5 / m.var_x, 0.0, m.mean_x, m.mean_p),
        Err(e) => Err(e),
    }
}

/// Best state found by a failed step, for diagnostics.
struct StepFailed {
    best: LcgState,
    objective: f64,
}

fn solve_step_inner(
    prob: &RotheStepProblem<'_>,
    previous: &LcgState,
    opts: &RotheOptions,
) -> std::result::Result<(LcgState, RotheStepReport), (StepFailed, Error)> {
    let gn = opts.step_optimizer();
    let mut gaussians = previous.gaussians.clone();
    let mut added = Vec::new();
    let mut iterations = 0;
    let mut backtracks = 0;
    let mut initial_objective = None;
    loop {
        let model = prob.model(gaussians.clone());
        let out = minimize(&model, &model.pack(&gaussians), &prob.target, &gn);
        initial_objective.get_or_insert(out.history[0]);
        iterations += out.iterations;
        backtracks += out.backtracks;
        gaussians = model.gaussians(&out.params);
        let state = LcgState {
            gaussians: gaussians.clone(),
            coeffs: out.solve.coeffs.iter().copied().collect(),
            time: prob.t_next(),
        };
        if out.status == GaussNewtonStatus::Converged {
            let report = RotheStepReport {
                t: prob.t_next(),
                objective: out.objective(),
                initial_objective: initial_objective.unwrap_or(f64::NAN),
                gn_iterations: iterations,
                backtracks,
                k_before: previous.len(),
                k_after: gaussians.len(),
                added,
            };
            return Ok((state, report));
        }
        let fail = |state: LcgState, error: Error| {
            (
                StepFailed {
                    best: state,
                    objective: out.objective(),
                },
                error,
            )
        };
        if added.len() >= opts.max_additions {
            let err = Error::StepFailure {
                step: 0,
                t: prob.t_next(),
                best_objective: out.objective(),
                epsilon: prob.epsilon,
                k: gaussians.len(),
            };
            return Err(fail(state, err));
        }
        let residual: Vec<Complex64> = out.solve.residual.iter().copied().collect();
        match augment_basis(&residual, prob.ham) {
            Ok(g) => {
                gaussians.push(g);
                added.push(g);
            }
            Err(e) => return Err(fail(state, e)),
        }
    }
}

/// Solves one Rothe step warm-started from `previous`.
pub fn solve_step(
    ham: &GridHamiltonian,
    previous: &LcgState,
    opts: &RotheOptions,
) -> Result<(LcgState, RotheStepReport)> {
    let prob = RotheStepProblem::new(ham, previous, opts.h, opts.epsilon)?;
    solve_step_inner(&prob, previous, opts).map_err(|(_, e)| e)
}

/// Hooks into a propagation run.
pub trait RotheObserver {
    fn on_step(&mut self, _step: usize, _state: &LcgState, _report: &RotheStepReport) -> Result<()> {
        Ok(())
    }

    /// Called once before a failed run returns its error.
    fn on_failure(&mut self, _step: usize, _last_accepted: &LcgState, _best_attempt: &LcgState, _objective: f64) {}
}

impl RotheObserver for () {}

#[derive(Debug, Clone)]
pub struct RotheRun {
    pub final_state: LcgState,
    pub reports: Vec<RotheStepReport>,
}

/// Propagates `initial` from its own time label to `opts.t_end`.
pub fn rothe_propagate(
    initial: &LcgState,
    ham: &GridHamiltonian,
    opts: &RotheOptions,
    observer: &mut dyn RotheObserver,
) -> Result<RotheRun> {
    opts.validate()?;
    initial.validate()?;
    let t_start = initial.time;
    if opts.t_end < t_start {
        return Err(Error::Config(format!(
            "t_end={} precedes the initial time {t_start}",
            opts.t_end
        )));
    }
    let steps = crate::grid::step_count(opts.h, opts.t_end - t_start)?;
    let mut state = initial.clone();
    let mut reports = Vec::with_capacity(steps);
    for n in 1..=steps {
        // Pin the time label to the lattice to avoid drift from repeated additions.
        state.time = t_start + (n - 1) as f64 * opts.h;
        let prob = RotheStepProblem::new(ham, &state, opts.h, opts.epsilon)?;
        match solve_step_inner(&prob, &state, opts) {
            Ok((mut next, report)) => {
                next.time = t_start + n as f64 * opts.h;
                observer.on_step(n, &next, &report)?;
                reports.push(report);
                state = next;
            }
            Err((failed, mut err)) => {
                if let Error::StepFailure { step, .. } = &mut err {
                    *step = n;
                }
                observer.on_failure(n, &state, &failed.best, failed.objective);
                return Err(err);
            }
        }
    }
    Ok(RotheRun {
        final_state: state,
        reports,
    })
}
