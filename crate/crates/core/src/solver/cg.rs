//! Jacobi-preconditioned conjugate gradient for SPD systems.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final relative residual `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` in place, starting from the current contents of `x`.
///
/// `matvec(v, out)` must write `A v` into `out`; `diag` is the diagonal of `A`
/// and is used as the preconditioner. Stops once `‖r‖ <= tol ‖b‖`.
pub fn pcg<F>(matvec: F, diag: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iters: usize) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    assert_eq!(x.len(), n);
    assert_eq!(diag.len(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    matvec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = dot(&r, &r).sqrt();
    if res <= tol * b_norm {
        return Ok(CgOutcome {
            iterations: 0,
            residual: res / b_norm,
        });
    }

    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=max_iters {
        matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        res = dot(&r, &r).sqrt();
        if res <= tol * b_norm {
            return Ok(CgOutcome {
                iterations: it,
                residual: res / b_norm,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let ratio = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + ratio * p[i];
        }
    }
    Err(Error::SolverStall {
        residual: res / b_norm,
        iterations: max_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    #[test]
    fn solves_small_spd_system() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)],
        );
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let out = pcg(|v, o| a.mul_vec_into(v, o), &a.diagonal(), &b, &mut x, 1e-12, 50).unwrap();
        assert!(out.residual <= 1e-12);
        let ax = a.mul_vec(&x);
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = [1.0, 2.0];
        let out = pcg(|v, o| o.copy_from_slice(v), &[1.0, 1.0], &[0.0, 0.0], &mut x, 1e-8, 10).unwrap();
        assert_eq!(x, [0.0, 0.0]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn reports_stall() {
        // ill-conditioned system with a single iteration allowed
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 0.999), (1, 0, 0.999), (1, 1, 1.0)]);
        let mut x = [0.0; 2];
        let err = pcg(|v, o| a.mul_vec_into(v, o), &a.diagonal(), &[1.0, -1.0 + 1e-3], &mut x, 1e-14, 1);
        assert!(matches!(err, Err(Error::SolverStall { iterations: 1, .. })));
    }
}
