//! Complex one-dimensional Gaussians
//!
//! ```text
//! g(x) = exp(-½ (a + i b) (x - q)² + i p (x - q))
//! ```
//!
//! with `a > 0`. They are deliberately unnormalized (`g(q) = 1`); the linear
//! coefficients of an expansion carry the norms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Spectral;

/// Samples with `ln|g| < LOG_CUTOFF` are stored as exact zeros, which gives
/// every Gaussian a compact support on the grid.
pub const LOG_CUTOFF: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub p: f64,
}

impl Gaussian1D {
    pub fn new(a: f64, b: f64, q: f64, p: f64) -> Result<Self> {
        let g = Gaussian1D { a, b, q, p };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Domain(format!(
                "Gaussian width a must be finite and > 0, got {}",
                self.a
            )));
        }
        if !(self.b.is_finite() && self.q.is_finite() && self.p.is_finite()) {
            return Err(Error::Domain("Gaussian parameters must be finite".into()));
        }
        Ok(())
    }

    /// Complex width `C = a + i b`.
    pub fn width(&self) -> Complex64 {
        Complex64::new(self.a, self.b)
    }

    /// Value at one point. Callers are responsible for `a > 0`.
    #[inline]
    pub fn value_at(&self, x: f64) -> Complex64 {
        let u = x - self.q;
        let re = -0.5 * self.a * u * u;
        if re < LOG_CUTOFF {
            return Complex64::new(0.0, 0.0);
        }
        let im = -0.5 * self.b * u * u + self.p * u;
        let m = re.exp();
        let (s, c) = im.sin_cos();
        Complex64::new(m * c, m * s)
    }

    /// `g` vanishes identically (as stored) for `|x - q|` beyond this.
    pub fn support_radius(&self) -> f64 {
        (-2.0 * LOG_CUTOFF / self.a).sqrt()
    }

    pub fn evaluate(&self, xs: &[f64]) -> Result<Vec<Complex64>> {
        self.check()?;
        Ok(xs.iter().map(|&x| self.value_at(x)).collect())
    }

    /// `[∂g/∂a, ∂g/∂b, ∂g/∂q, ∂g/∂p]` at every point of `xs`.
    pub fn parameter_derivatives(&self, xs: &[f64]) -> Result<[Vec<Complex64>; 4]> {
        self.check()?;
        let n = xs.len();
        let mut out: [Vec<Complex64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
        let w = self.width();
        for &x in xs {
            let g = self.value_at(x);
            let u = x - self.q;
            out[0].push(g * (-0.5 * u * u));
            out[1].push(g * Complex64::new(0.0, -0.5 * u * u));
            out[2].push(g * (w * u - Complex64::new(0.0, self.p)));
            out[3].push(g * Complex64::new(0.0, u));
        }
        Ok(out)
    }

    /// Analytic moments of `|g|²`.
    pub fn moments(&self) -> MomentSet {
        let var_x = 0.5 / self.a;
        MomentSet {
            norm_sq: (std::f64::consts::PI / self.a).sqrt(),
            mean_x: self.q,
            mean_p: self.p,
            var_x,
            var_p: (self.a * self.a + self.b * self.b) / (2.0 * self.a),
            cov_xp: -self.b / (2.0 * self.a),
        }
    }

    /// The Gaussian whose position mean and variance, momentum mean and
    /// position–momentum covariance equal those of `m`.
    ///
    /// A Gaussian has `var_x·var_p = ¼ + cov_xp²` exactly, so `var_p` only
    /// enters as a feasibility check: any genuine state satisfies
    /// `var_x·var_p ≥ ¼ + cov_xp²`.
    pub fn from_moments(m: &MomentSet) -> Result<Self> {
        let infeasible = || Error::InfeasibleMoments {
            var_x: m.var_x,
            var_p: m.var_p,
            cov_xp: m.cov_xp,
        };
        if !(m.var_x > 0.0) || !m.var_x.is_finite() || !m.var_p.is_finite() || !m.cov_xp.is_finite()
        {
            return Err(infeasible());
        }
        let bound = 0.25 + m.cov_xp * m.cov_xp;
        if m.var_x * m.var_p < bound * (1.0 - 1e-9) {
            return Err(infeasible());
        }
        let a = 0.5 / m.var_x;
        Gaussian1D::new(a, -2.0 * a * m.cov_xp, m.mean_x, m.mean_p)
    }
}

/// Position/momentum statistics of a (not necessarily normalized) function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub norm_sq: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    /// `Re <f|(x - <x>)(p̂ - <p>)|f> / ‖f‖²`, the symmetrized covariance.
    pub cov_xp: f64,
}

impl MomentSet {
    /// Moments of grid samples `f`; momentum statistics use spectral derivatives.
    pub fn of(f: &[Complex64], spectral: &Spectral) -> Result<Self> {
        let grid = spectral.grid();
        if f.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} points",
                f.len(),
                grid.len()
            )));
        }
        let dx = grid.dx();
        let norm_sq = grid.norm_sq(f);
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(Error::DegenerateResidual);
        }
        let xs = grid.points();
        let density = |j: usize| f[j].norm_sqr();
        let mean_x = (0..f.len()).map(|j| xs[j] * density(j)).sum::<f64>() * dx / norm_sq;
        let var_x = (0..f.len())
            .map(|j| (xs[j] - mean_x).powi(2) * density(j))
            .sum::<f64>()
            * dx
            / norm_sq;

        // p̂ f = -i f'
        let df = spectral.derivative(f);
        let p_f: Vec<Complex64> = df.iter().map(|d| Complex64::new(d.im, -d.re)).collect();
        let mean_p = grid.inner(f, &p_f).re / norm_sq;
        let centered_p: Vec<Complex64> = p_f.iter().zip(f).map(|(pf, v)| pf - v * mean_p).collect();
        let var_p = grid.norm_sq(&centered_p) / norm_sq;
        let cov_xp = (0..f.len())
            .map(|j| (f[j].conj() * (xs[j] - mean_x) * centered_p[j]).re)
            .sum::<f64>()
            * dx
            / norm_sq;
        Ok(MomentSet {
            norm_sq,
            mean_x,
            mean_p,
            var_x,
            var_p,
            cov_xp,
        })
    }
}

pub fn moments_of(f: &[Complex64], spectral: &Spectral) -> Result<MomentSet> {
    MomentSet::of(f, spectral)
}

pub fn gaussian_from_moments(m: &MomentSet) -> Result<Gaussian1D> {
    Gaussian1D::from_moments(m)
}
