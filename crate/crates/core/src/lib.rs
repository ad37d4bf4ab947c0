//! Linear combinations of complex Gaussians propagated with Rothe's method,
//! checked against a grid Crank–Nicolson reference, for a one-dimensional
//! soft-Coulomb atom in a strong laser pulse.

pub mod cli;
pub mod error;
pub mod fit;
pub mod gaussians;
pub mod grid;
pub mod model;
pub mod rothe;

pub use error::{Error, Result};
pub use fit::{fit_lcg, published_ground_state_fit, FitInit, FitOptions, FitResult, LcgState};
pub use gaussians::{Gaussian1D, MomentSet};
pub use grid::{GridHamiltonian, GridWavefunction, UniformGrid};
pub use model::{ModelConfig, PulseConfig};
pub use rothe::{rothe_propagate, RotheOptions, RotheRun, RotheStepReport};
