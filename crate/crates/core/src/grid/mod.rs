//! Uniform periodic spatial grid.
//!
//! The grid carries the reference Crank–Nicolson propagator and the ground-state
//! eigensolver, and it doubles as the quadrature rule for every Gaussian matrix
//! element elsewhere in the crate: the periodic trapezoid rule is spectrally
//! accurate for smooth integrands that decay well inside the box.

mod cn;
mod eigen;
pub mod io;
mod krylov;

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, PulseConfig};

pub use cn::{cn_step, propagate_reference, CnOptions, Snapshot, Trajectory};
pub(crate) use cn::step_count;
pub use eigen::{ground_state, EigenOptions, GroundState};
pub use krylov::{conjugate_gradient, preconditioned_conjugate_gradient, CgReport};

/// Points `x_j = -l + j·2l/n`, `j = 0..n`, with periodic wrap-around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    half_length: f64,
    n: usize,
}

impl UniformGrid {
    pub const DEFAULT: UniformGrid = UniformGrid {
        half_length: 500.0,
        n: 4096,
    };

    pub fn new(half_length: f64, n: usize) -> Result<Self> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::Config(format!(
                "grid half-length must be finite and > 0, got {half_length}"
            )));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size must be a power of two >= 2, got {n}"
            )));
        }
        Ok(UniformGrid { half_length, n })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Angular wavenumbers in the standard DFT layout (non-negative frequencies
    /// first, Nyquist stored as negative).
    /// Indices of all points with `lo <= x_j <= hi`, padded by one point on each side.
    pub fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let n = self.n as f64;
        let j0 = ((lo + self.half_length) / self.dx()).floor() - 1.0;
        let j1 = ((hi + self.half_length) / self.dx()).ceil() + 2.0;
        let clamp = |v: f64| v.clamp(0.0, n) as usize;
        clamp(j0)..clamp(j1).max(clamp(j0))
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = PI / self.half_length;
        let half = self.n / 2;
        (0..self.n)
            .map(|j| {
                if j < half {
                    j as f64 * dk
                } else {
                    (j as f64 - self.n as f64) * dk
                }
            })
            .collect()
    }

    pub fn ensure_same(&self, other: &UniformGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "(l={}, n={}) vs (l={}, n={})",
                self.half_length, self.n, other.half_length, other.n
            )));
        }
        Ok(())
    }

    /// Quadrature `dx·Σ conj(f_j) g_j`.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        debug_assert_eq!(f.len(), g.len());
        let s: Complex64 = f.iter().zip(g).map(|(a, b)| a.conj() * b).sum();
        s * self.dx()
    }

    pub fn norm_sq(&self, f: &[Complex64]) -> f64 {
        f.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx()
    }
}

impl Default for UniformGrid {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Complex samples of a wave function on a [`UniformGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub grid: UniformGrid,
    pub values: Vec<Complex64>,
}

impl GridWavefunction {
    pub fn new(grid: UniformGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridWavefunction { grid, values })
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        GridWavefunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: UniformGrid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.point(j))).collect();
        GridWavefunction { grid, values }
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.norm_sq(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let s = 1.0 / n;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &GridWavefunction) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.grid.inner(&self.values, &other.values))
    }

    /// Squared L² distance on the shared grid.
    pub fn distance_sq(&self, other: &GridWavefunction) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok(s * self.grid.dx())
    }
}

/// FFT plans for one grid, plus its wavenumbers.
#[derive(Clone)]
pub struct Spectral {
    grid: UniformGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: UniformGrid) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            grid,
            forward: planner.plan_fft_forward(grid.len()),
            inverse: planner.plan_fft_inverse(grid.len()),
            k: grid.wavenumbers(),
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Applies the Fourier multiplier `symbol(k)` to `values` in place.
    pub fn apply_multiplier(&self, values: &mut [Complex64], symbol: impl Fn(f64) -> Complex64) {
        self.forward.process(values);
        let scale = 1.0 / self.grid.len() as f64;
        for (v, &k) in values.iter_mut().zip(&self.k) {
            *v *= symbol(k) * scale;
        }
        self.inverse.process(values);
    }

    /// First derivative. The Nyquist mode is dropped so real input stays real.
    pub fn derivative(&self, f: &[Complex64]) -> Vec<Complex64> {
        let nyquist = PI / self.grid.dx();
        let mut out = f.to_vec();
        self.apply_multiplier(&mut out, |k| {
            if (k.abs() - nyquist).abs() < 1e-9 * nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        });
        out
    }

    pub fn second_derivative(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut out = f.to_vec();
        self.apply_multiplier(&mut out, |k| Complex64::new(-k * k, 0.0));
        out
    }
}

/// A contiguous block of grid rows with the data needed to apply the
/// Hamiltonian to functions known in closed form.
#[derive(Debug, Clone, Copy)]
pub struct GridRows<'a> {
    points: &'a [f64],
    potential: &'a [f64],
    pulse: &'a PulseConfig,
}

impl<'a> GridRows<'a> {
    pub fn points(&self) -> &'a [f64] {
        self.points
    }

    pub fn potential(&self) -> &'a [f64] {
        self.potential
    }

    pub fn field(&self, t: f64) -> f64 {
        self.pulse.field(t)
    }
}

/// The model Hamiltonian discretized on a grid: spectral kinetic energy plus
/// pointwise potential and dipole coupling.
#[derive(Debug, Clone)]
pub struct GridHamiltonian {
    spectral: Spectral,
    x: Vec<f64>,
    potential: Vec<f64>,
    pulse: PulseConfig,
}

impl GridHamiltonian {
    pub fn new(model: &ModelConfig, grid: UniformGrid) -> Self {
        Self::with_potential(grid, model.pulse, |x| model.potential(x))
    }

    /// Arbitrary static potential, e.g. a harmonic trap for testing.
    pub fn with_potential(grid: UniformGrid, pulse: PulseConfig, v: impl Fn(f64) -> f64) -> Self {
        let x = grid.points();
        let potential = x.iter().map(|&x| v(x)).collect();
        GridHamiltonian {
            spectral: Spectral::new(grid),
            x,
            potential,
            pulse,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        self.spectral.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn points(&self) -> &[f64] {
        &self.x
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn pulse(&self) -> &PulseConfig {
        &self.pulse
    }

    pub fn field(&self, t: f64) -> f64 {
        self.pulse.field(t)
    }

    /// Points and potential values of the rows `rows` only.
    pub fn restricted(&self, rows: Range<usize>) -> GridRows<'_> {
        GridRows {
            points: &self.x[rows.clone()],
            potential: &self.potential[rows],
            pulse: &self.pulse,
        }
    }

    pub fn all_rows(&self) -> GridRows<'_> {
        self.restricted(0..self.x.len())
    }

    /// `-½ ψ''` via FFT.
    pub fn kinetic(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = psi.to_vec();
        self.spectral
            .apply_multiplier(&mut out, |k| Complex64::new(0.5 * k * k, 0.0));
        out
    }

    /// Field-free Hamiltonian `T + V`.
    pub fn apply_static(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.apply_with_field(psi, 0.0)
    }

    /// `H(t) ψ = T ψ + (V + x E(t)) ψ`.
    pub fn apply(&self, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        self.apply_with_field(psi, self.field(t))
    }

    fn apply_with_field(&self, psi: &[Complex64], e: f64) -> Vec<Complex64> {
        let mut out = self.kinetic(psi);
        for ((o, p), (&v, &x)) in out.iter_mut().zip(psi).zip(self.potential.iter().zip(&self.x)) {
            *o += p * (v + x * e);
        }
        out
    }

    pub fn apply_hamiltonian(&self, psi: &GridWavefunction, t: f64) -> Result<GridWavefunction> {
        self.grid().ensure_same(&psi.grid)?;
        Ok(GridWavefunction {
            grid: psi.grid,
            values: self.apply(&psi.values, t),
        })
    }

    /// `(I + sign·i·h/2·H(t)) ψ`; `sign = -1` gives the adjoint of `sign = +1`.
    pub fn apply_cayley_factor(&self, psi: &[Complex64], t: f64, h: f64, sign: f64) -> Vec<Complex64> {
        let hpsi = self.apply(psi, t);
        let z = Complex64::new(0.0, sign * 0.5 * h);
        psi.iter().zip(hpsi).map(|(p, hp)| p + z * hp).collect()
    }
}
