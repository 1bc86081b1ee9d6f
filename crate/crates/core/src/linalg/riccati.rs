use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Matrix sign function by the scaled Newton iteration.
pub fn matrix_sign<T: Real>(h: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = h.nrows();
    let mut z = h.clone();
    let nf = T::from_usize(n).unwrap();
    for _ in 0..100 {
        let lu = z.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::numerical("sign iteration hit a singular iterate (imaginary-axis eigenvalue)"))?;
        // determinant scaling |det Z|^(-1/n), computed in log form
        let lu = z.clone().lu();
        let u = lu.u();
        let logdet = (0..n).map(|i| u[(i, i)].abs().ln()).fold(T::zero(), |a, b| a + b);
        let c = (-logdet / nf).exp();
        let c = if c.is_finite_val() && c > T::zero() { c } else { T::one() };
        let next = (&z * c + inv / c) * T::lit(0.5);
        let diff = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !scale.is_finite_val() {
            return Err(Error::numerical("sign iteration diverged"));
        }
        if diff <= T::lit(1e3) * T::eps() * scale {
            return Ok(z);
        }
    }
    Err(Error::numerical("sign iteration did not converge"))
}

/// Stabilizing solution of `A'X + XA - X B R^-1 B' X + Q = 0`.
pub fn solve_care<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("CARE: R is singular"))?;
    let g = b * rinv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;
    let id = DMatrix::<T>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    // least squares on the stacked 2n x n system
    let qr = lhs.qr();
    let qt_rhs = qr.q().transpose() * rhs;
    let x = qr
        .r()
        .solve_upper_triangular(&qt_rhs)
        .ok_or_else(|| Error::numerical("CARE: stable subspace is not a graph (pair not stabilizable?)"))?;
    let x = (&x + x.transpose()) * T::lit(0.5);
    if !crate::scalar::all_finite(x.iter().copied()) {
        return Err(Error::numerical("CARE: non-finite solution"));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_care() {
        // 2 a x - x^2 b^2 / r + q = 0 with a=1,b=1,q=1,r=1: x = 1 + sqrt 2
        let x = solve_care(&mat![1.0], &mat![1.0], &mat![1.0], &mat![1.0]).unwrap();
        assert!((x[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_residual() {
        let a = mat![0.0, 1.0; 0.0, 0.0];
        let b = mat![0.0; 1.0];
        let q = DMatrix::identity(2, 2);
        let r = mat![1.0];
        let x = solve_care(&a, &b, &q, &r).unwrap();
        let res = a.transpose() * &x + &x * &a - &x * &b * b.transpose() * &x + &q;
        assert!(res.norm() < 1e-11);
    }

    #[test]
    fn sign_of_diagonal() {
        let s = matrix_sign(&mat![3.0, 1.0; 0.0, -2.0]).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12 && (s[(1, 1)] + 1.0).abs() < 1e-12);
    }
}
