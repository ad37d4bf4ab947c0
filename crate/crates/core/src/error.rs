use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("residual has zero norm on the quadrature grid")]
    DegenerateResidual,

    #[error(
        "moments violate the uncertainty bound: var_x={var_x:e}, var_p={var_p:e}, cov_xp={cov_xp:e}"
    )]
    InfeasibleMoments { var_x: f64, var_p: f64, cov_xp: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {last_residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(
        "Rothe step {step} (t={t}) failed: objective {best_objective:e} >= epsilon {epsilon:e} with K={k}"
    )]
    StepFailure {
        step: usize,
        t: f64,
        best_objective: f64,
        epsilon: f64,
        k: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed {kind} data: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::DegenerateResidual
                | Error::InfeasibleMoments { .. }
                | Error::NonConvergence { .. }
                | Error::StepFailure { .. }
        )
    }
}
