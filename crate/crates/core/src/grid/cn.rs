use num_complex::Complex64;

use super::krylov::{conjugate_gradient, CgReport};
use super::{GridHamiltonian, GridWavefunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnOptions {
    /// Relative residual tolerance of the inner Krylov solve.
    pub solver_tol: f64,
    pub max_solver_iterations: usize,
}

impl Default for CnOptions {
    fn default() -> Self {
        CnOptions {
            solver_tol: 1e-12,
            max_solver_iterations: 500,
        }
    }
}

/// One Crank–Nicolson step from `t_prev` to `t_prev + h`:
/// `(I + i h/2 H(t_n)) ψⁿ = (I - i h/2 H(t_{n-1})) ψⁿ⁻¹`.
///
/// The implicit system is solved matrix-free by conjugate gradients on the
/// normal equations `B^H B ψ = B^H rhs`, which are Hermitian positive definite
/// and, for `B = I + i h/2 H`, very well conditioned.
pub fn cn_step(
    ham: &GridHamiltonian,
    psi: &GridWavefunction,
    t_prev: f64,
    h: f64,
    opts: &CnOptions,
) -> Result<(GridWavefunction, CgReport)> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("time step must be > 0, got {h}")));
    }
    ham.grid().ensure_same(&psi.grid)?;
    let t_next = t_prev + h;
    let rhs = ham.apply_cayley_factor(&psi.values, t_prev, h, -1.0);
    let normal_rhs = ham.apply_cayley_factor(&rhs, t_next, h, -1.0);
    // First-order explicit predictor ψ - i h H ψ = 2·rhs - ψ.
    let mut x: Vec<Complex64> = rhs
        .iter()
        .zip(&psi.values)
        .map(|(r, p)| 2.0 * r - p)
        .collect();
    let report = conjugate_gradient(
        |v| {
            let bv = ham.apply_cayley_factor(v, t_next, h, 1.0);
            ham.apply_cayley_factor(&bv, t_next, h, -1.0)
        },
        &normal_rhs,
        &mut x,
        opts.solver_tol,
        opts.max_solver_iterations,
    )?;
    Ok((
        GridWavefunction {
            grid: psi.grid,
            values: x,
        },
        report,
    ))
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub psi: GridWavefunction,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: GridWavefunction,
    pub final_time: f64,
    pub steps: usize,
    /// Largest |‖ψⁿ‖ - ‖ψ⁰‖| seen during the run.
    pub max_norm_drift: f64,
    pub solver_iterations: usize,
}

/// Number of steps of size `h` that cover `[0, t_end]`; `t_end` must be a
/// whole multiple of `h` up to rounding.
pub(crate) fn step_count(h: f64, t_end: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("time step must be > 0, got {h}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Config(format!("t_end must be >= 0, got {t_end}")));
    }
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::Config(format!(
            "t_end={t_end} is not a multiple of h={h}"
        )));
    }
    Ok(n as usize)
}

/// Crank–Nicolson propagation from `t = 0` to `t_end`.
///
/// `on_snapshot` receives the initial state, every `snapshot_every`-th state
/// and the final state.
pub fn propagate_reference(
    ham: &GridHamiltonian,
    initial: &GridWavefunction,
    h: f64,
    t_end: f64,
    snapshot_every: usize,
    opts: &CnOptions,
    mut on_snapshot: impl FnMut(&Snapshot) -> Result<()>,
) -> Result<Trajectory> {
    let steps = step_count(h, t_end)?;
    let every = snapshot_every.max(1);
    let norm0 = initial.norm();
    let mut psi = initial.clone();
    on_snapshot(&Snapshot {
        step: 0,
        t: 0.0,
        psi: psi.clone(),
    })?;
    let mut drift: f64 = 0.0;
    let mut iters = 0;
    for n in 1..=steps {
        let t_prev = (n - 1) as f64 * h;
        let (next, rep) = cn_step(ham, &psi, t_prev, h, opts)?;
        psi = next;
        iters += rep.iterations;
        drift = drift.max((psi.norm() - norm0).abs());
        if n % every == 0 || n == steps {
            on_snapshot(&Snapshot {
                step: n,
                t: n as f64 * h,
                psi: psi.clone(),
            })?;
        }
    }
    Ok(Trajectory {
        final_state: psi,
        final_time: steps as f64 * h,
        steps,
        max_norm_drift: drift,
        solver_iterations: iters,
    })
}
