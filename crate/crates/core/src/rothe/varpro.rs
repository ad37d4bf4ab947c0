//! Variable projection for `min_{θ,c} ½‖y - M(θ) c‖²` on a uniform quadrature
//! grid. The linear coefficients are eliminated by an SVD-truncated least
//! squares solve, leaving `F(θ) = ½‖(I - P(θ)) y‖²` with `P` the orthogonal
//! projector onto the column span of `M(θ)`.
//!
//! Gaussian columns vanish identically outside a compact support, so all dense
//! work is restricted to the window of rows where the target or any column is
//! nonzero. Outside it the residual equals `y`, which is zero there too.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::operator::{cayley_column, cayley_column_with_derivatives, CayleyFactor, Freedom};
use crate::gaussians::Gaussian1D;
use crate::grid::GridHamiltonian;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// A model whose columns depend nonlinearly on real parameters.
pub trait SeparableModel: Sync {
    fn n_rows(&self) -> usize;
    fn n_params(&self) -> usize;
    fn n_columns(&self) -> usize;
    /// Uniform quadrature weight of every sample.
    fn weight(&self) -> f64;
    /// Rows outside this range are zero in every column and derivative.
    fn support(&self, _params: &[f64]) -> Range<usize> {
        0..self.n_rows()
    }
    /// Column matrix restricted to `rows`.
    fn columns(&self, params: &[f64], rows: Range<usize>) -> DMatrix<Complex64>;
    /// Columns plus `∂M/∂θ_i`, restricted to `rows`. Since each parameter moves
    /// exactly one column, the derivative of parameter `i` is a single vector
    /// stored as column `i` of the second matrix, and `owner[i]` names the
    /// column it moves.
    fn columns_and_derivatives(
        &self,
        params: &[f64],
        rows: Range<usize>,
    ) -> (DMatrix<Complex64>, DMatrix<Complex64>, Vec<usize>);
    /// Rejects parameter vectors outside the model's domain.
    fn admissible(&self, params: &[f64]) -> bool {
        params.iter().all(|p| p.is_finite())
    }
}

/// Gaussian columns, optionally transformed by a Cayley factor `A = I + z H(t)`.
pub struct GaussianBasis<'a> {
    ham: &'a GridHamiltonian,
    factor: CayleyFactor,
    freedom: Freedom,
    template: Vec<Gaussian1D>,
}

impl<'a> GaussianBasis<'a> {
    pub fn new(
        ham: &'a GridHamiltonian,
        factor: CayleyFactor,
        freedom: Freedom,
        template: Vec<Gaussian1D>,
    ) -> Self {
        GaussianBasis {
            ham,
            factor,
            freedom,
            template,
        }
    }

    pub fn freedom(&self) -> Freedom {
        self.freedom
    }

    pub fn gaussians(&self, params: &[f64]) -> Vec<Gaussian1D> {
        self.freedom.unpack(params, &self.template)
    }

    pub fn pack(&self, gaussians: &[Gaussian1D]) -> Vec<f64> {
        self.freedom.pack(gaussians)
    }

    /// Full-length column matrix.
    pub fn full_columns(&self, params: &[f64]) -> DMatrix<Complex64> {
        self.columns(params, 0..self.n_rows())
    }
}

impl SeparableModel for GaussianBasis<'_> {
    fn n_rows(&self) -> usize {
        self.ham.grid().len()
    }

    fn n_params(&self) -> usize {
        self.template.len() * self.freedom.per_gaussian()
    }

    fn n_columns(&self) -> usize {
        self.template.len()
    }

    fn weight(&self) -> f64 {
        self.ham.grid().dx()
    }

    fn support(&self, params: &[f64]) -> Range<usize> {
        let grid = self.ham.grid();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for g in self.gaussians(params) {
            let r = g.support_radius();
            lo = lo.min(g.q - r);
            hi = hi.max(g.q + r);
        }
        if lo > hi {
            return 0..0;
        }
        grid.index_range(lo, hi)
    }

    fn columns(&self, params: &[f64], rows: Range<usize>) -> DMatrix<Complex64> {
        let gs = self.gaussians(params);
        let w = rows.len();
        let mut m = DMatrix::zeros(w, gs.len());
        if w == 0 {
            return m;
        }
        let sub = self.ham.restricted(rows);
        m.as_mut_slice()
            .par_chunks_mut(w)
            .zip(gs.par_iter())
            .for_each(|(col, g)| cayley_column(g, &sub, &self.factor, col));
        m
    }

    fn columns_and_derivatives(
        &self,
        params: &[f64],
        rows: Range<usize>,
    ) -> (DMatrix<Complex64>, DMatrix<Complex64>, Vec<usize>) {
        let gs = self.gaussians(params);
        let per = self.freedom.per_gaussian();
        let w = rows.len();
        let mut m = DMatrix::zeros(w, gs.len());
        let mut d = DMatrix::zeros(w, gs.len() * per);
        let owner = (0..gs.len()).flat_map(|k| std::iter::repeat_n(k, per)).collect();
        if w == 0 {
            return (m, d, owner);
        }
        let sub = self.ham.restricted(rows);
        m.as_mut_slice()
            .par_chunks_mut(w)
            .zip(d.as_mut_slice().par_chunks_mut(w * per))
            .zip(gs.par_iter())
            .for_each(|((col, dblock), g)| {
                let mut views: Vec<&mut [Complex64]> = dblock.chunks_mut(w).collect();
                cayley_column_with_derivatives(g, &sub, &self.factor, &self.freedom, col, &mut views);
            });
        (m, d, owner)
    }

    fn admissible(&self, params: &[f64]) -> bool {
        let per = self.freedom.per_gaussian();
        let l = self.ham.grid().half_length();
        params.iter().all(|p| p.is_finite())
            && params.chunks_exact(per).all(|c| {
                // ln a bounded so exp stays finite; centers stay inside the box
                let ok_a = c[0].abs() < 300.0;
                let ok_q = !self.freedom.q || c[1 + self.freedom.b as usize].abs() < l;
                ok_a && ok_q
            })
    }
}

/// `Σ conj(a_j) b_j`, with independent accumulators so the loop vectorizes.
pub(crate) fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(2);
    let mut cb = b.chunks_exact(2);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0].re * y[0].re;
        acc[1] += x[0].im * y[0].im;
        acc[2] += x[0].re * y[0].im;
        acc[3] += x[0].im * y[0].re;
        acc[4] += x[1].re * y[1].re;
        acc[5] += x[1].im * y[1].im;
        acc[6] += x[1].re * y[1].im;
        acc[7] += x[1].im * y[1].re;
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        acc[0] += x.re * y.re;
        acc[1] += x.im * y.im;
        acc[2] += x.re * y.im;
        acc[3] += x.im * y.re;
    }
    Complex64::new(acc[0] + acc[1] + acc[4] + acc[5], acc[2] - acc[3] + acc[6] - acc[7])
}

/// `y += alpha x`.
fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn column(m: &DMatrix<Complex64>, j: usize) -> &[Complex64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

/// `a^H b` for column-major blocks, computed column pair by column pair.
fn ad_mul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| dotc(column(a, i), column(b, j)))
}

/// `a x` accumulated column by column.
fn mul_vec(a: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        axpy(xj, column(a, j), &mut out);
    }
    out
}

/// Thin QR by classical Gram–Schmidt with one full reorthogonalization pass.
/// Columns that are numerically zero get a zero `Q` column and a zero row in `R`.
fn thin_qr(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let (n, k) = m.shape();
    let mut q = m.clone();
    let mut r = DMatrix::zeros(k, k);
    for j in 0..k {
        let (done, rest) = q.as_mut_slice().split_at_mut(j * n);
        let v = &mut rest[..n];
        for _ in 0..2 {
            for i in 0..j {
                let qi = &done[i * n..(i + 1) * n];
                let h = dotc(qi, v);
                r[(i, j)] += h;
                axpy(-h, qi, v);
            }
        }
        let norm = dotc(v, v).re.sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            v.iter_mut().for_each(|x| *x *= inv);
        }
        r[(j, j)] = Complex64::new(norm, 0.0);
    }
    (q, r)
}

/// Truncated-SVD solution of the linear subproblem for fixed nonlinear parameters.
#[derive(Debug, Clone)]
pub struct LinearSolve {
    /// Rows of the full grid that `basis` covers.
    pub rows: Range<usize>,
    /// Orthonormal basis of the numerical column span, restricted to `rows`.
    pub basis: DMatrix<Complex64>,
    pub singular_values: Vec<f64>,
    /// Right singular vectors restricted to the numerical rank (`K × rank`).
    pub right: DMatrix<Complex64>,
    pub coeffs: DVector<Complex64>,
    /// `y - P y` on the full grid.
    pub residual: DVector<Complex64>,
    /// `½·w·‖residual‖²`.
    pub objective: f64,
}

impl LinearSolve {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// Solves `min_c ‖M c - y‖` where `m` holds the rows `rows` of the full column
/// matrix and vanishes elsewhere.
fn solve_on_rows(m: &DMatrix<Complex64>, y: &DVector<Complex64>, rows: Range<usize>, weight: f64) -> LinearSolve {
    let k = m.ncols();
    let (q, r) = thin_qr(m);
    let svd = r.svd(true, true);
    let u_r = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..k)
        .filter(|&i| svd.singular_values[i] > RANK_CUTOFF * s_max && s_max > 0.0)
        .collect();
    let rank = keep.len();
    let mut u_keep = DMatrix::zeros(k, rank);
    let mut v_keep = DMatrix::zeros(k, rank);
    let mut sv = Vec::with_capacity(rank);
    for (c, &i) in keep.iter().enumerate() {
        u_keep.set_column(c, &u_r.column(i));
        v_keep.set_column(c, &v_t.row(i).adjoint());
        sv.push(svd.singular_values[i]);
    }
    let mut basis = DMatrix::zeros(m.nrows(), rank);
    for c in 0..rank {
        let col = mul_vec(&q, u_keep.column(c).as_slice());
        basis.set_column(c, &DVector::from_vec(col));
    }
    let y_w = &y.as_slice()[rows.clone()];
    let proj: Vec<Complex64> = (0..rank).map(|c| dotc(column(&basis, c), y_w)).collect();
    let scaled = DVector::from_iterator(rank, proj.iter().zip(&sv).map(|(p, s)| p / *s));
    let coeffs = &v_keep * scaled;
    let fitted = mul_vec(&basis, &proj);
    let mut residual = y.clone();
    for (r, f) in residual.as_mut_slice()[rows.clone()].iter_mut().zip(&fitted) {
        *r -= f;
    }
    let objective = 0.5 * weight * residual.norm_squared();
    LinearSolve {
        rows,
        basis,
        singular_values: sv,
        right: v_keep,
        coeffs,
        residual,
        objective,
    }
}

/// Least squares for an explicit full-length column matrix.
pub fn solve_linear(m: &DMatrix<Complex64>, y: &DVector<Complex64>, weight: f64) -> LinearSolve {
    solve_on_rows(m, y, 0..y.len(), weight)
}

/// Rows needed to represent both `y` and every column at `params`.
fn active_rows<M: SeparableModel + ?Sized>(model: &M, params: &[f64], y: &DVector<Complex64>) -> Range<usize> {
    let zero = Complex64::new(0.0, 0.0);
    let support = model.support(params);
    let first = y.iter().position(|v| *v != zero);
    let last = y.iter().rposition(|v| *v != zero);
    match (first, last) {
        (Some(f), Some(l)) if !support.is_empty() => f.min(support.start)..(l + 1).max(support.end),
        (Some(f), Some(l)) => f..l + 1,
        _ => support,
    }
}

/// Objective, optimal coefficients and pointwise residual at `params`.
pub fn objective_and_coeffs<M: SeparableModel + ?Sized>(
    model: &M,
    params: &[f64],
    y: &DVector<Complex64>,
) -> LinearSolve {
    let rows = active_rows(model, params, y);
    solve_on_rows(&model.columns(params, rows.clone()), y, rows, model.weight())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianKind {
    /// `J_i = -(I - P) ∂_i M c`.
    #[default]
    Kaufman,
    /// Kaufman plus the projector-derivative term `-(M⁺)^H (∂_i M)^H r`.
    GolubPereyra,
}

/// Linearization of the reduced residual at one parameter point.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub solve: LinearSolve,
    /// Complex Jacobian of the residual, rows `solve.rows` (zero elsewhere).
    pub jacobian: DMatrix<Complex64>,
    /// `w·Re(J^H r)`, the gradient of `F`.
    pub gradient: DVector<f64>,
    /// `w·Re(J^H J)`, the Gauss–Newton matrix.
    pub normal: DMatrix<f64>,
}

pub fn linearize<M: SeparableModel + ?Sized>(
    model: &M,
    params: &[f64],
    y: &DVector<Complex64>,
    kind: JacobianKind,
) -> Linearization {
    let rows = active_rows(model, params, y);
    let (m, mut d, owner) = model.columns_and_derivatives(params, rows.clone());
    let w = model.weight();
    let solve = solve_on_rows(&m, y, rows.clone(), w);
    let r_w = &solve.residual.as_slice()[rows];

    // Golub–Pereyra extra term needs <∂_i M col, r> before d is overwritten.
    let gp_dots: Option<Vec<Complex64>> = match kind {
        JacobianKind::Kaufman => None,
        JacobianKind::GolubPereyra => Some((0..d.ncols()).map(|i| dotc(column(&d, i), r_w)).collect()),
    };

    let n_w = d.nrows();
    let rank = solve.rank();
    for (i, &k) in owner.iter().enumerate() {
        let c = solve.coeffs[k];
        d.as_mut_slice()[i * n_w..(i + 1) * n_w].iter_mut().for_each(|v| *v *= -c);
    }
    // J = -(I - P) D c = (D c) projected out, with d now holding -D c.
    let proj = ad_mul(&solve.basis, &d);
    let mut jac = d;
    for i in 0..owner.len() {
        let col = &mut jac.as_mut_slice()[i * n_w..(i + 1) * n_w];
        for j in 0..rank {
            axpy(-proj[(j, i)], column(&solve.basis, j), col);
        }
    }

    if let Some(dots) = gp_dots {
        // (M⁺)^H e_k = U Σ⁻¹ (V^H)[:, k]
        for (i, &k) in owner.iter().enumerate() {
            let col = &mut jac.as_mut_slice()[i * n_w..(i + 1) * n_w];
            for j in 0..rank {
                let weight = solve.right[(k, j)].conj() / solve.singular_values[j] * dots[i];
                axpy(-weight, column(&solve.basis, j), col);
            }
        }
    }

    let p = owner.len();
    let mut normal = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = w * dotc(column(&jac, i), column(&jac, j)).re;
            normal[(i, j)] = v;
            normal[(j, i)] = v;
        }
    }
    let gradient = DVector::from_fn(p, |i, _| w * dotc(column(&jac, i), r_w).re);
    Linearization {
        solve,
        jacobian: jac,
        gradient,
        normal,
    }
}
