//! Cayley factors `A = I + σ·i·h/2·H(t)` applied to Gaussians and grid functions.
//!
//! For a Gaussian `g` with `u = x - q`, `C = a + i b` and `s = -C u + i p` we
//! have `g' = s g` and `g'' = (s² - C) g`, so `H g = φ g` with
//! `φ = -½(s² - C) + V(x) + x E(t)`. Everything is a polynomial times `g` and is
//! evaluated pointwise on the quadrature grid.

use num_complex::Complex64;

use crate::error::Result;
use crate::fit::LcgState;
use crate::gaussians::Gaussian1D;
use crate::grid::{GridHamiltonian, GridRows, GridWavefunction};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which nonlinear parameters of each Gaussian are optimized. The width `a` is
/// always free (and optimized as `ln a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Freedom {
    pub b: bool,
    pub q: bool,
    pub p: bool,
}

impl Freedom {
    pub const ALL: Freedom = Freedom {
        b: true,
        q: true,
        p: true,
    };
    pub const WIDTH_ONLY: Freedom = Freedom {
        b: false,
        q: false,
        p: false,
    };

    pub fn per_gaussian(&self) -> usize {
        1 + self.b as usize + self.q as usize + self.p as usize
    }

    /// Packs Gaussians into the optimizer's parameter vector `[ln a, b?, q?, p?]*`.
    pub fn pack(&self, gaussians: &[Gaussian1D]) -> Vec<f64> {
        let mut out = Vec::with_capacity(gaussians.len() * self.per_gaussian());
        for g in gaussians {
            out.push(g.a.ln());
            if self.b {
                out.push(g.b);
            }
            if self.q {
                out.push(g.q);
            }
            if self.p {
                out.push(g.p);
            }
        }
        out
    }

    /// Inverse of [`Freedom::pack`]; frozen fields are taken from `template`.
    pub fn unpack(&self, params: &[f64], template: &[Gaussian1D]) -> Vec<Gaussian1D> {
        let m = self.per_gaussian();
        template
            .iter()
            .zip(params.chunks_exact(m))
            .map(|(t, chunk)| {
                let mut it = chunk.iter().copied();
                let mut g = *t;
                g.a = it.next().unwrap().exp();
                if self.b {
                    g.b = it.next().unwrap();
                }
                if self.q {
                    g.q = it.next().unwrap();
                }
                if self.p {
                    g.p = it.next().unwrap();
                }
                g
            })
            .collect()
    }
}

/// A Cayley factor `I + z·H(t)` with `z = sign·i·h/2`; `h = 0` gives the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CayleyFactor {
    pub t: f64,
    pub h: f64,
    pub sign: f64,
}

impl CayleyFactor {
    pub const IDENTITY: CayleyFactor = CayleyFactor {
        t: 0.0,
        h: 0.0,
        sign: 1.0,
    };

    /// `A_n = I + i h/2 H(t_n)`.
    pub fn forward(t: f64, h: f64) -> Self {
        CayleyFactor { t, h, sign: 1.0 }
    }

    /// `A_n^† = I - i h/2 H(t_n)`.
    pub fn adjoint(t: f64, h: f64) -> Self {
        CayleyFactor { t, h, sign: -1.0 }
    }

    fn z(&self) -> Complex64 {
        Complex64::new(0.0, self.sign * 0.5 * self.h)
    }
}

/// Writes `A g` into `out`.
pub(crate) fn cayley_column(
    g: &Gaussian1D,
    ham: &GridRows<'_>,
    factor: &CayleyFactor,
    out: &mut [Complex64],
) {
    let z = factor.z();
    let e = ham.field(factor.t);
    let w = g.width();
    let ip = Complex64::new(0.0, g.p);
    for ((o, &x), &v) in out.iter_mut().zip(ham.points()).zip(ham.potential()) {
        let val = g.value_at(x);
        if val.re == 0.0 && val.im == 0.0 {
            *o = val;
            continue;
        }
        let u = x - g.q;
        let s = -w * u + ip;
        let phi = -0.5 * (s * s - w) + (v + x * e);
        *o = (1.0 + z * phi) * val;
    }
}

/// Writes `A g` into `col` and `∂(A g)/∂θ` for each free parameter into `derivs`
/// (in packing order; the width derivative is taken with respect to `ln a`).
pub(crate) fn cayley_column_with_derivatives(
    g: &Gaussian1D,
    ham: &GridRows<'_>,
    factor: &CayleyFactor,
    freedom: &Freedom,
    col: &mut [Complex64],
    derivs: &mut [&mut [Complex64]],
) {
    let z = factor.z();
    let e = ham.field(factor.t);
    let w = g.width();
    let ip = Complex64::new(0.0, g.p);
    let zero = Complex64::new(0.0, 0.0);
    for (j, (&x, &v)) in ham.points().iter().zip(ham.potential()).enumerate() {
        let val = g.value_at(x);
        if val.re == 0.0 && val.im == 0.0 {
            col[j] = zero;
            derivs.iter_mut().for_each(|d| d[j] = zero);
            continue;
        }
        let u = x - g.q;
        let s = -w * u + ip;
        let phi = -0.5 * (s * s - w) + (v + x * e);
        let a_factor = 1.0 + z * phi;
        col[j] = a_factor * val;

        // ∂(A g) = z (∂φ) g + (1 + z φ) ∂g
        let mut slot = 0;
        let mut put = |dphi: Complex64, dg_over_g: Complex64| {
            derivs[slot][j] = (z * dphi + a_factor * dg_over_g) * val;
            slot += 1;
        };
        // d/d(ln a) = a d/da; ∂s/∂a = -u, ∂C/∂a = 1
        put((s * u + 0.5) * g.a, Complex64::new(-0.5 * u * u * g.a, 0.0));
        if freedom.b {
            put(I * s * u + 0.5 * I, Complex64::new(0.0, -0.5 * u * u));
        }
        if freedom.q {
            put(-s * w, -s);
        }
        if freedom.p {
            put(-I * s, Complex64::new(0.0, u));
        }
    }
}

/// `H(t) g` evaluated analytically on the Hamiltonian's grid.
pub fn hamiltonian_on_gaussian(g: &Gaussian1D, ham: &GridHamiltonian, t: f64) -> Result<Vec<Complex64>> {
    g.check()?;
    let e = ham.field(t);
    let w = g.width();
    let ip = Complex64::new(0.0, g.p);
    Ok(ham
        .points()
        .iter()
        .zip(ham.potential())
        .map(|(&x, &v)| {
            let u = x - g.q;
            let s = -w * u + ip;
            (-0.5 * (s * s - w) + (v + x * e)) * g.value_at(x)
        })
        .collect())
}

/// `(I + sign·i·h/2·H(t)) g` for a single Gaussian.
pub fn apply_a_gaussian(
    g: &Gaussian1D,
    ham: &GridHamiltonian,
    t: f64,
    h: f64,
    sign: f64,
) -> Result<Vec<Complex64>> {
    g.check()?;
    let mut out = vec![Complex64::new(0.0, 0.0); ham.grid().len()];
    cayley_column(g, &ham.all_rows(), &CayleyFactor { t, h, sign }, &mut out);
    Ok(out)
}

/// `(I + sign·i·h/2·H(t)) ψ` for an LCG state, summed on the grid.
pub fn apply_a_state(
    state: &LcgState,
    ham: &GridHamiltonian,
    t: f64,
    h: f64,
    sign: f64,
) -> Result<Vec<Complex64>> {
    let factor = CayleyFactor { t, h, sign };
    let grid = ham.grid();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut col = Vec::new();
    for (g, c) in state.gaussians.iter().zip(&state.coeffs) {
        g.check()?;
        // Only the Gaussian's support contributes.
        let r = g.support_radius();
        let rows = grid.index_range(g.q - r, g.q + r);
        col.resize(rows.len(), Complex64::new(0.0, 0.0));
        cayley_column(g, &ham.restricted(rows.clone()), &factor, &mut col);
        for (o, v) in out[rows].iter_mut().zip(&col) {
            *o += c * v;
        }
    }
    Ok(out)
}

/// `(I + sign·i·h/2·H(t)) ψ` for a grid function, using the spectral kinetic term.
pub fn apply_a_grid(
    psi: &GridWavefunction,
    ham: &GridHamiltonian,
    t: f64,
    h: f64,
    sign: f64,
) -> Result<GridWavefunction> {
    ham.grid().ensure_same(&psi.grid)?;
    Ok(GridWavefunction {
        grid: psi.grid,
        values: ham.apply_cayley_factor(&psi.values, t, h, sign),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ground_state, EigenOptions, UniformGrid};
    use crate::model::ModelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn zero_step_is_identity() {
        let ham = GridHamiltonian::new(&ModelConfig::DEFAULT, UniformGrid::DEFAULT);
        let g = Gaussian1D::new(0.7, 0.2, 3.0, -1.0).unwrap();
        let a = apply_a_gaussian(&g, &ham, 40.0, 0.0, 1.0).unwrap();
        assert_eq!(a, g.evaluate(ham.points()).unwrap());
        let psi = GridWavefunction::new(*ham.grid(), a.clone()).unwrap();
        assert_eq!(apply_a_grid(&psi, &ham, 40.0, 0.0, -1.0).unwrap().values, a);
    }

    #[test]
    fn analytic_hamiltonian_matches_spectral() {
        let ham = GridHamiltonian::new(&ModelConfig::DEFAULT, UniformGrid::DEFAULT);
        for g in [
            Gaussian1D::new(1.0, 0.0, 0.0, 0.0).unwrap(),
            Gaussian1D::new(0.3, -0.5, 12.0, 2.0).unwrap(),
            Gaussian1D::new(1.5, 0.5, -40.0, -2.0).unwrap(),
        ] {
            let samples = g.evaluate(ham.points()).unwrap();
            for t in [10.0, 47.3] {
                let analytic = hamiltonian_on_gaussian(&g, &ham, t).unwrap();
                let spectral = ham.apply(&samples, t);
                let e = max_rel(&analytic, &spectral);
                assert!(e < 1e-10, "{g:?} t={t}: {e:e}");
                let h = 1e-2;
                let a = apply_a_gaussian(&g, &ham, t, h, -1.0).unwrap();
                let b = ham.apply_cayley_factor(&samples, t, h, -1.0);
                assert!(max_rel(&a, &b) < 1e-10);
            }
        }
    }

    #[test]
    fn ground_state_is_scaled_by_cayley_factor() {
        let ham = GridHamiltonian::new(&ModelConfig::DEFAULT, UniformGrid::DEFAULT);
        let gs = ground_state(&ham, &EigenOptions::default()).unwrap();
        let h = 1e-3;
        let out = apply_a_grid(&gs.psi, &ham, 5.0, h, 1.0).unwrap();
        let factor = Complex64::new(1.0, 0.5 * h * gs.energy);
        for (o, p) in out.values.iter().zip(&gs.psi.values) {
            assert!((o - p * factor).norm() < 1e-12);
        }
    }

    #[test]
    fn product_of_factor_and_adjoint() {
        let grid = UniformGrid::DEFAULT;
        let ham = GridHamiltonian::new(&ModelConfig::DEFAULT, grid);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = GridWavefunction::from_fn(grid, |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let (t, h) = (45.0, 1e-2);
        let once = apply_a_grid(&psi, &ham, t, h, 1.0).unwrap();
        let twice = apply_a_grid(&once, &ham, t, h, -1.0).unwrap();
        let h1 = ham.apply(&psi.values, t);
        let h2 = ham.apply(&h1, t);
        let expect: Vec<Complex64> = psi
            .values
            .iter()
            .zip(&h2)
            .map(|(p, hh)| p + hh * (h * h / 4.0))
            .collect();
        assert!(max_rel(&twice.values, &expect) < 1e-12);
    }

    #[test]
    fn column_derivatives_match_finite_differences() {
        let ham = GridHamiltonian::new(&ModelConfig::DEFAULT, UniformGrid::new(60.0, 2048).unwrap());
        let g = Gaussian1D::new(0.8, 0.4, 1.5, -0.7).unwrap();
        let factor = CayleyFactor::forward(48.0, 0.05);
        let n = ham.grid().len();
        let mut col = vec![Complex64::default(); n];
        let mut store = vec![vec![Complex64::default(); n]; 4];
        {
            let mut views: Vec<&mut [Complex64]> = store.iter_mut().map(|v| v.as_mut_slice()).collect();
            cayley_column_with_derivatives(&g, &ham.all_rows(), &factor, &Freedom::ALL, &mut col, &mut views);
        }
        let theta = Freedom::ALL.pack(&[g]);
        for (i, analytic) in store.iter().enumerate() {
            let eval = |delta: f64| {
                let mut th = theta.clone();
                th[i] += delta;
                let gg = Freedom::ALL.unpack(&th, &[g])[0];
                let mut out = vec![Complex64::default(); n];
                cayley_column(&gg, &ham.all_rows(), &factor, &mut out);
                out
            };
            let step = 1e-6;
            let (p, m) = (eval(step), eval(-step));
            let fd: Vec<Complex64> = p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * step)).collect();
            assert!(max_rel(analytic, &fd) < 1e-6, "param {i}: {}", max_rel(analytic, &fd));
        }
    }

    #[test]
    fn pack_unpack() {
        let gs = vec![
            Gaussian1D::new(0.5, 1.0, 2.0, 3.0).unwrap(),
            Gaussian1D::new(2.0, -1.0, -2.0, 0.5).unwrap(),
        ];
        let th = Freedom::ALL.pack(&gs);
        assert_eq!(th.len(), 8);
        let back = Freedom::ALL.unpack(&th, &gs);
        for (a, b) in back.iter().zip(&gs) {
            assert!((a.a - b.a).abs() < 1e-15 && a.b == b.b && a.q == b.q && a.p == b.p);
        }
        let th = Freedom::WIDTH_ONLY.pack(&gs);
        assert_eq!(th.len(), 2);
        let moved = Freedom::WIDTH_ONLY.unpack(&[0.0, 0.0], &gs);
        assert_eq!(moved[0].a, 1.0);
        assert_eq!(moved[1].q, -2.0);
    }
}
