//! Physical model: soft-core Coulomb potential driven by a sin²-envelope laser
//! pulse in the length gauge,
//!
//! ```text
//! H(t) = -½ d²/dx² + V(x) + x·E(t),    V(x) = -Z / sqrt(x² + s)
//! E(t) = E0 sin²(π (t - t0) / (t1 - t0)) cos(ω (t - t̄)),   t0 < t < t1
//! ```
//!
//! All quantities are in atomic units.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    /// Peak field amplitude.
    pub e0: f64,
    /// Carrier frequency.
    pub omega: f64,
    /// Envelope switch-on time.
    pub t0: f64,
    /// Envelope switch-off time.
    pub t1: f64,
}

impl PulseConfig {
    pub const DEFAULT: PulseConfig = PulseConfig {
        e0: 0.225,
        omega: 0.25,
        t0: 20.0,
        t1: 80.0,
    };

    /// A pulse with zero amplitude; the Hamiltonian is then time independent.
    pub fn off() -> Self {
        PulseConfig {
            e0: 0.0,
            ..Self::DEFAULT
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.e0, self.omega, self.t0, self.t1]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("pulse parameters must be finite".into()));
        }
        if !(self.t1 > self.t0) {
            return Err(Error::Config(format!(
                "pulse requires t1 > t0 (got t0={}, t1={})",
                self.t0, self.t1
            )));
        }
        if self.e0 < 0.0 {
            return Err(Error::Config("pulse amplitude e0 must be >= 0".into()));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config("pulse frequency omega must be > 0".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.t0 + self.t1)
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Electric field E(t); identically zero outside the open interval (t0, t1).
    pub fn field(&self, t: f64) -> f64 {
        if t <= self.t0 || t >= self.t1 {
            return 0.0;
        }
        let envelope = (PI * (t - self.t0) / self.duration()).sin().powi(2);
        self.e0 * envelope * (self.omega * (t - self.center())).cos()
    }

    /// dE/dt, used to locate field extrema.
    pub fn field_derivative(&self, t: f64) -> f64 {
        if t <= self.t0 || t >= self.t1 {
            return 0.0;
        }
        let w = PI / self.duration();
        let phase = w * (t - self.t0);
        let carrier = self.omega * (t - self.center());
        self.e0
            * (w * (2.0 * phase).sin() * carrier.cos()
                - self.omega * phase.sin().powi(2) * carrier.sin())
    }

    /// Times of the local extrema of E(t) within `[from, to]`, in increasing order.
    ///
    /// Sign changes of dE/dt are bracketed on a grid fine compared with both the
    /// carrier period and the envelope, then refined by bisection.
    pub fn field_extrema(&self, from: f64, to: f64) -> Vec<f64> {
        let from = from.max(self.t0);
        let to = to.min(self.t1);
        if !(to > from) || self.e0 == 0.0 {
            return Vec::new();
        }
        let period = (2.0 * PI / self.omega).min(self.duration());
        let samples = (((to - from) / period) * 400.0).ceil().max(400.0) as usize;
        let dt = (to - from) / samples as f64;
        let mut out = Vec::new();
        let mut t_lo = from;
        let mut d_lo = self.field_derivative(t_lo);
        let end = to + 1e-9 * to.abs().max(1.0);
        // One extra sample so an extremum sitting exactly on `to` is bracketed.
        for i in 1..=samples + 1 {
            let t_hi = (from + i as f64 * dt).min(self.t1);
            let d_hi = self.field_derivative(t_hi);
            if d_lo != 0.0 && d_lo.signum() != d_hi.signum() {
                let (mut a, mut b, mut da) = (t_lo, t_hi, d_lo);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    let dm = self.field_derivative(m);
                    if dm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if dm.signum() == da.signum() {
                        a = m;
                        da = dm;
                    } else {
                        b = m;
                    }
                }
                let t = 0.5 * (a + b);
                // Envelope endpoints are double zeros, not physical extrema.
                if t > self.t0 + 1e-9 && t < self.t1 - 1e-9 && t <= end {
                    out.push(t);
                }
            }
            t_lo = t_hi;
            d_lo = d_hi;
        }
        out
    }

    pub fn diagnostics(&self, ionization_potential: f64) -> StrongFieldDiagnostics {
        StrongFieldDiagnostics {
            ponderomotive: self.e0 * self.e0 / (4.0 * self.omega * self.omega),
            keldysh: self.omega * (2.0 * ionization_potential).sqrt() / self.e0,
        }
    }
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongFieldDiagnostics {
    /// U_p = E0² / (4ω²)
    pub ponderomotive: f64,
    /// γ = ω sqrt(2 I_p) / E0
    pub keldysh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub pulse: PulseConfig,
    /// The constant under the square root of the soft-core potential.
    pub softening: f64,
    /// Prefactor of the soft-core potential.
    pub coulomb_strength: f64,
}

impl ModelConfig {
    pub const DEFAULT: ModelConfig = ModelConfig {
        pulse: PulseConfig::DEFAULT,
        softening: 0.25,
        coulomb_strength: 0.5,
    };

    pub fn field_free() -> Self {
        ModelConfig {
            pulse: PulseConfig::off(),
            ..Self::DEFAULT
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        if !(self.softening > 0.0) || !self.softening.is_finite() {
            return Err(Error::Config("softening must be finite and > 0".into()));
        }
        if !self.coulomb_strength.is_finite() {
            return Err(Error::Config("coulomb_strength must be finite".into()));
        }
        Ok(())
    }

    pub fn potential(&self, x: f64) -> f64 {
        -self.coulomb_strength / (x * x + self.softening).sqrt()
    }

    pub fn field(&self, t: f64) -> f64 {
        self.pulse.field(t)
    }

    /// V(x) + x·E(t), the potential felt by the electron in the length gauge.
    pub fn effective_potential(&self, x: f64, t: f64) -> f64 {
        self.potential(x) + x * self.field(t)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn potential_values() {
        let m = ModelConfig::DEFAULT;
        assert_eq!(m.potential(0.0), -1.0);
        assert_relative_eq!(m.potential(3f64.sqrt() / 2.0), -0.5, epsilon = 1e-15);
        assert!(m.potential(1e8) < 0.0 && m.potential(1e8) > -1e-7);
    }

    #[test]
    fn potential_is_even_negative_increasing() {
        let m = ModelConfig::DEFAULT;
        let mut prev = m.potential(0.0);
        for i in 1..2000 {
            let x = i as f64 * 0.05;
            let v = m.potential(x);
            assert_eq!(v, m.potential(-x));
            assert!(v < 0.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn field_peak_and_support() {
        let p = PulseConfig::DEFAULT;
        assert_relative_eq!(p.field(50.0), 0.225, epsilon = 1e-15);
        assert_eq!(p.field(20.0), 0.0);
        assert_eq!(p.field(80.0), 0.0);
        assert_eq!(p.field(10.0), 0.0);
        assert_eq!(p.field(95.0), 0.0);
    }

    #[test]
    fn field_is_continuous_and_even_about_center() {
        let p = PulseConfig::DEFAULT;
        for eps in [1e-3, 1e-5, 1e-7] {
            assert!(p.field(20.0 + eps).abs() < 0.225 * 1e-3 * (eps / 1e-3));
            assert!(p.field(80.0 - eps).abs() < 0.225 * 1e-3 * (eps / 1e-3));
        }
        for i in 0..400 {
            let s = i as f64 * 0.1;
            assert_relative_eq!(
                p.field(50.0 + s),
                p.field(50.0 - s),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn field_derivative_matches_finite_difference() {
        let p = PulseConfig::DEFAULT;
        for i in 1..60 {
            let t = 20.0 + i as f64;
            let fd = (p.field(t + 1e-6) - p.field(t - 1e-6)) / 2e-6;
            assert_relative_eq!(p.field_derivative(t), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn field_extrema_include_peak() {
        let p = PulseConfig::DEFAULT;
        let ext = p.field_extrema(p.t0, p.center());
        assert!(!ext.is_empty());
        let last = *ext.last().unwrap();
        assert_relative_eq!(last, 50.0, epsilon = 1e-9);
        for t in &ext {
            assert!(p.field_derivative(*t).abs() < 1e-10);
        }
        // extrema alternate in sign
        for w in ext.windows(2) {
            assert!(p.field(w[0]) * p.field(w[1]) < 0.0);
        }
    }

    #[test]
    fn effective_potential_cases() {
        let m = ModelConfig::DEFAULT;
        assert_eq!(m.effective_potential(3.0, 10.0), m.potential(3.0));
        for t in [0.0, 25.0, 50.0, 77.0] {
            assert_eq!(m.effective_potential(0.0, t), -1.0);
        }
        assert_relative_eq!(
            m.effective_potential(10.0, 50.0),
            -0.5 / 100.25f64.sqrt() + 2.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn diagnostics_defaults_and_scaling() {
        let p = PulseConfig::DEFAULT;
        let d = p.diagnostics(0.5);
        assert_relative_eq!(d.ponderomotive, 0.2025, epsilon = 1e-12);
        assert!((d.keldysh - 1.111).abs() < 1e-3);
        let p2 = PulseConfig { e0: 0.45, ..p };
        let d2 = p2.diagnostics(0.5);
        assert_relative_eq!(d2.ponderomotive, 4.0 * d.ponderomotive, epsilon = 1e-12);
        assert_relative_eq!(d2.keldysh, 0.5 * d.keldysh, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::DEFAULT.validate().is_ok());
        let bad = PulseConfig { t1: 10.0, ..PulseConfig::DEFAULT };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { softening: 0.0, ..ModelConfig::DEFAULT };
        assert!(bad.validate().is_err());
    }
}
