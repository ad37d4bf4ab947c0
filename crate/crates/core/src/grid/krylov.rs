use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Final relative residual `‖b - A x‖ / ‖b‖`, recomputed from scratch.
    pub relative_residual: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Matrix-free conjugate gradients for a Hermitian positive definite operator.
///
/// `x` holds the initial guess on entry and the solution on exit. Iterates until
/// the true residual satisfies `‖b - A x‖ ≤ rel_tol·‖b‖`.
pub fn conjugate_gradient<A>(
    apply: A,
    b: &[Complex64],
    x: &mut [Complex64],
    rel_tol: f64,
    max_iterations: usize,
) -> Result<CgReport>
where
    A: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    preconditioned_conjugate_gradient(apply, |r| r.to_vec(), b, x, rel_tol, max_iterations)
}

/// Conjugate gradients with a Hermitian positive definite preconditioner
/// `precondition(r) ≈ A⁻¹ r`.
pub fn preconditioned_conjugate_gradient<A, P>(
    mut apply: A,
    mut precondition: P,
    b: &[Complex64],
    x: &mut [Complex64],
    rel_tol: f64,
    max_iterations: usize,
) -> Result<CgReport>
where
    A: FnMut(&[Complex64]) -> Vec<Complex64>,
    P: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let residual = |apply: &mut A, x: &[Complex64]| -> Vec<Complex64> {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(b, a)| b - a).collect()
    };
    let mut r = residual(&mut apply, x);
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut r_norm = norm(&r);
    let target = rel_tol * b_norm;
    let mut history = Vec::new();

    let mut iterations = 0;
    loop {
        if r_norm <= target {
            // The recurrence drifts from the true residual; confirm before returning.
            let true_r = residual(&mut apply, x);
            let true_norm = norm(&true_r);
            if true_norm <= target || iterations >= max_iterations {
                return finish(iterations, true_norm / b_norm, rel_tol, history);
            }
            r = true_r;
            z = precondition(&r);
            p.copy_from_slice(&z);
            rz = dot(&r, &z).re;
            r_norm = true_norm;
        }
        if iterations >= max_iterations {
            return finish(iterations, r_norm / b_norm, rel_tol, history);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap).re;
        if !(pap > 0.0) || !(rz > 0.0) {
            return Err(Error::NonConvergence {
                what: "conjugate gradient (operator not positive definite)",
                iterations,
                last_residual: r_norm / b_norm,
                history,
            });
        }
        let alpha = rz / pap;
        for ((xi, pi), (ri, api)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
            *xi += pi * alpha;
            *ri -= api * alpha;
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
        rz = rz_new;
        r_norm = norm(&r);
        iterations += 1;
        history.push(r_norm / b_norm);
    }
}

fn finish(iterations: usize, rel: f64, rel_tol: f64, history: Vec<f64>) -> Result<CgReport> {
    if rel <= rel_tol {
        Ok(CgReport {
            iterations,
            relative_residual: rel,
        })
    } else {
        Err(Error::NonConvergence {
            what: "conjugate gradient",
            iterations,
            last_residual: rel,
            history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_diagonal_system() {
        let d: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let b: Vec<Complex64> = (0..50).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
        let mut x = vec![Complex64::new(0.0, 0.0); 50];
        let rep = conjugate_gradient(
            |v| v.iter().zip(&d).map(|(a, d)| a * d).collect(),
            &b,
            &mut x,
            1e-13,
            200,
        )
        .unwrap();
        assert!(rep.relative_residual <= 1e-13);
        for ((xi, bi), di) in x.iter().zip(&b).zip(&d) {
            assert!((xi * di - bi).norm() < 1e-11);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let d: Vec<f64> = (1..=200).map(|i| (i as f64).powi(3)).collect();
        let b = vec![Complex64::new(1.0, 0.0); 200];
        let mut x = vec![Complex64::new(0.0, 0.0); 200];
        let err = conjugate_gradient(
            |v| v.iter().zip(&d).map(|(a, d)| a * d).collect(),
            &b,
            &mut x,
            1e-14,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let d: Vec<f64> = (1..=200).map(|i| (i as f64).powi(3)).collect();
        let b = vec![Complex64::new(1.0, -2.0); 200];
        let mut x = vec![Complex64::new(0.0, 0.0); 200];
        let rep = preconditioned_conjugate_gradient(
            |v| v.iter().zip(&d).map(|(a, d)| a * d).collect(),
            |r| r.iter().zip(&d).map(|(a, d)| a / d).collect(),
            &b,
            &mut x,
            1e-13,
            5,
        )
        .unwrap();
        assert!(rep.iterations <= 1);
    }
}
