use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// Default threshold for declaring exact tracking from the gradient identity.
pub const TRACKING_TOL: f64 = 1e-9;

/// `(Pi, Gamma)` with residuals of `Pi S = A Pi + B Gamma + P` and `0 = R Gamma + T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegulatorSolution<T: Real> {
    pub pi: DMatrix<T>,
    pub gamma: DMatrix<T>,
    pub residual_sylvester: T,
    pub residual_gradient: T,
    pub non_unique: bool,
}

impl<T: Real> LinearRegulatorSolution<T> {
    /// Builds the solution and recomputes both residuals from the raw data.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        a: &DMatrix<T>,
        b: &DMatrix<T>,
        p: &DMatrix<T>,
        s: &DMatrix<T>,
        r: &DMatrix<T>,
        t: &DMatrix<T>,
        pi: DMatrix<T>,
        gamma: DMatrix<T>,
        non_unique: bool,
    ) -> Self {
        let residual_sylvester = (&pi * s - a * &pi - b * &gamma - p).norm();
        let residual_gradient = (r * &gamma + t).norm();
        LinearRegulatorSolution { pi, gamma, residual_sylvester, residual_gradient, non_unique }
    }
}

fn consistency_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::eps() * T::lit(1e4))
}

/// Minimum-norm solution of `M x = b`. Returns `(x, rank_deficient)` or
/// `NoSolution` when the system is inconsistent.
pub(crate) fn min_norm_solve<T: Real>(m: &DMatrix<T>, b: &DVector<T>, what: &str) -> Result<(DVector<T>, bool)> {
    let cols = m.ncols();
    if cols == 0 {
        return Ok((DVector::zeros(0), false));
    }
    if m.nrows() == 0 {
        return Ok((DVector::zeros(cols), true));
    }
    let svd = SVD::new(m.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(T::zero(), |a, v| a.max(v));
    let cut = T::lit(1e-12).max(T::eps() * T::lit(100.0)) * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let x = svd
        .solve(b, cut)
        .map_err(|e| Error::numerical(format!("{what}: {e}")))?;
    if !all_finite(x.iter().copied()) {
        return Err(Error::numerical(format!("{what}: non-finite solution")));
    }
    let res = (m * &x - b).norm();
    let scale = T::one() + smax * x.norm() + b.norm();
    if res > consistency_tol::<T>() * scale {
        return Err(Error::NoSolution(format!(
            "{what} is inconsistent (residual {:e})",
            res.to_f64_lossy()
        )));
    }
    Ok((x, rank < cols))
}

/// `kron(X, Y)`.
pub fn kron<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    let (xr, xc) = x.shape();
    let (yr, yc) = y.shape();
    let mut out = DMatrix::zeros(xr * yr, xc * yc);
    for i in 0..xr {
        for j in 0..xc {
            out.view_mut((i * yr, j * yc), (yr, yc)).copy_from(&(y * x[(i, j)]));
        }
    }
    out
}

/// Sylvester operator `X -> X S - A X` acting on `vec X` (column-major).
pub fn sylvester_operator<T: Real>(a: &DMatrix<T>, s: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let p = s.nrows();
    kron(&s.transpose(), &DMatrix::identity(n, n)) - kron(&DMatrix::identity(p, p), a)
}

fn vec_of<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec<T: Real>(v: &[T], rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v)
}

pub fn solve_regulator_linear<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    p: &DMatrix<T>,
    s: &DMatrix<T>,
    r: &DMatrix<T>,
    t: &DMatrix<T>,
) -> Result<LinearRegulatorSolution<T>> {
    let n = a.nrows();
    let m = b.ncols();
    let pd = s.nrows();
    let shapes_ok = a.is_square()
        && s.is_square()
        && b.nrows() == n
        && p.shape() == (n, pd)
        && r.shape() == (m, m)
        && t.shape() == (m, pd);
    if !shapes_ok {
        return Err(Error::invalid("solve_regulator_linear: inconsistent dimensions"));
    }
    let mut non_unique = false;
    let gamma = if m == 0 || pd == 0 {
        DMatrix::zeros(m, pd)
    } else {
        // R Gamma = -T column by column through one factorization
        let big = kron(&DMatrix::identity(pd, pd), r);
        let (g, nu) = min_norm_solve(&big, &(-vec_of(t)), "gradient identity R Gamma = -T")?;
        non_unique |= nu;
        unvec(g.as_slice(), m, pd)
    };
    let pi = if n == 0 || pd == 0 {
        DMatrix::zeros(n, pd)
    } else {
        let op = sylvester_operator(a, s);
        let rhs = vec_of(&(b * &gamma + p));
        let (x, nu) = min_norm_solve(&op, &rhs, "Sylvester equation Pi S - A Pi = B Gamma + P")?;
        non_unique |= nu;
        unvec(x.as_slice(), n, pd)
    };
    Ok(LinearRegulatorSolution::from_parts(a, b, p, s, r, t, pi, gamma, non_unique))
}

/// Solution `(Pi, Sigma)` of the coupled plant/controller invariance equations
/// plus the residual of the gradient identity `R C_c Sigma + T = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTrackingCheck<T: Real> {
    pub pi: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub residual_plant: T,
    pub residual_controller: T,
    pub residual_gradient: T,
    pub non_unique: bool,
    pub exact_tracking: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn verify_linear_dynamic_tracking<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    p: &DMatrix<T>,
    q: &DMatrix<T>,
    s: &DMatrix<T>,
    a_c: &DMatrix<T>,
    b_c: &DMatrix<T>,
    c_c: &DMatrix<T>,
    r: &DMatrix<T>,
    t: &DMatrix<T>,
) -> Result<DynamicTrackingCheck<T>> {
    verify_linear_dynamic_tracking_tol(a, b, c, p, q, s, a_c, b_c, c_c, r, t, T::lit(TRACKING_TOL))
}

#[allow(clippy::too_many_arguments)]
pub fn verify_linear_dynamic_tracking_tol<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    p: &DMatrix<T>,
    q: &DMatrix<T>,
    s: &DMatrix<T>,
    a_c: &DMatrix<T>,
    b_c: &DMatrix<T>,
    c_c: &DMatrix<T>,
    r: &DMatrix<T>,
    t: &DMatrix<T>,
    tol: T,
) -> Result<DynamicTrackingCheck<T>> {
    let n = a.nrows();
    let m = b.ncols();
    let qd = c.nrows();
    let pd = s.nrows();
    let nc = a_c.nrows();
    let shapes_ok = a.is_square()
        && s.is_square()
        && a_c.is_square()
        && b.nrows() == n
        && c.ncols() == n
        && p.shape() == (n, pd)
        && q.shape() == (qd, pd)
        && b_c.shape() == (nc, qd)
        && c_c.shape() == (m, nc)
        && r.shape() == (m, m)
        && t.shape() == (m, pd);
    if !shapes_ok {
        return Err(Error::invalid("verify_linear_dynamic_tracking: inconsistent dimensions"));
    }
    let ip = DMatrix::<T>::identity(pd, pd);
    let dim = (n + nc) * pd;
    let mut op = DMatrix::zeros(dim, dim);
    op.view_mut((0, 0), (n * pd, n * pd)).copy_from(&sylvester_operator(a, s));
    op.view_mut((0, n * pd), (n * pd, nc * pd)).copy_from(&(-kron(&ip, &(b * c_c))));
    op.view_mut((n * pd, 0), (nc * pd, n * pd)).copy_from(&(-kron(&ip, &(b_c * c))));
    op.view_mut((n * pd, n * pd), (nc * pd, nc * pd)).copy_from(&sylvester_operator(a_c, s));
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n * pd).copy_from(&vec_of(p));
    rhs.rows_mut(n * pd, nc * pd).copy_from(&vec_of(&(b_c * q)));
    let (x, non_unique) = min_norm_solve(&op, &rhs, "coupled invariance equations")?;
    let pi = unvec(&x.as_slice()[..n * pd], n, pd);
    let sigma = unvec(&x.as_slice()[n * pd..], nc, pd);
    let residual_plant = (&pi * s - a * &pi - b * c_c * &sigma - p).norm();
    let residual_controller = (&sigma * s - a_c * &sigma - b_c * (c * &pi + q)).norm();
    let residual_gradient = (r * c_c * &sigma + t).norm();
    let exact_tracking = residual_gradient <= tol * (T::one() + t.norm());
    Ok(DynamicTrackingCheck {
        pi,
        sigma,
        residual_plant,
        residual_controller,
        residual_gradient,
        non_unique,
        exact_tracking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_instance() {
        // Gamma = -T/R = -1; Pi*0 = -Pi + (-1) + 1 => Pi = 0
        let sol = solve_regulator_linear(
            &mat![-1.0],
            &mat![1.0],
            &mat![1.0],
            &mat![0.0],
            &mat![1.0],
            &mat![1.0],
        )
        .unwrap();
        assert!((sol.gamma[(0, 0)] + 1.0).abs() < 1e-15);
        assert!(sol.pi[(0, 0)].abs() < 1e-15);
        assert!(!sol.non_unique);
    }

    #[test]
    fn homogeneous_is_zero() {
        let a = mat![-1.0, 0.3; 0.0, -2.0];
        let s = mat![0.0, 1.0; -1.0, 0.0];
        let sol = solve_regulator_linear(
            &a,
            &mat![1.0; 0.5],
            &DMatrix::zeros(2, 2),
            &s,
            &mat![2.0],
            &DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert_eq!(sol.pi.norm(), 0.0);
        assert_eq!(sol.gamma.norm(), 0.0);
    }

    #[test]
    fn harmonic_substitute_back() {
        let a = mat![-1.0, 0.5; 0.2, -2.0];
        let b = mat![1.0; 1.0];
        let p = mat![1.0, 0.0; 0.5, 0.3];
        let s = mat![0.0, 1.0; -1.0, 0.0];
        let r = mat![1.3];
        let t = mat![0.4, -0.7];
        let sol = solve_regulator_linear(&a, &b, &p, &s, &r, &t).unwrap();
        let res1 = (&sol.pi * &s - &a * &sol.pi - &b * &sol.gamma - &p).norm();
        let res2 = (&r * &sol.gamma + &t).norm();
        assert!(res1 < 1e-10 && res2 < 1e-10);
        assert_eq!(res1, sol.residual_sylvester);
    }

    #[test]
    fn singular_inconsistent_gradient() {
        let r = mat![1.0, 0.0; 0.0, 0.0];
        let t = mat![0.0; 1.0];
        let res = solve_regulator_linear(
            &mat![-1.0],
            &mat![1.0, 1.0],
            &mat![0.0],
            &mat![0.0],
            &r,
            &t,
        );
        assert!(matches!(res, Err(Error::NoSolution(_))));
    }

    #[test]
    fn singular_consistent_is_flagged() {
        let r = mat![1.0, 0.0; 0.0, 0.0];
        let t = mat![1.0; 0.0];
        let sol = solve_regulator_linear(
            &mat![-1.0],
            &mat![1.0, 1.0],
            &mat![0.0],
            &mat![0.0],
            &r,
            &t,
        )
        .unwrap();
        assert!(sol.non_unique);
        assert!((sol.gamma[(0, 0)] + 1.0).abs() < 1e-14 && sol.gamma[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn sylvester_resonance_inconsistent() {
        // A and S share eigenvalue 0 and the forcing hits it
        let res = solve_regulator_linear(
            &mat![0.0],
            &mat![0.0],
            &mat![1.0],
            &mat![0.0],
            &mat![1.0],
            &mat![0.0],
        );
        assert!(matches!(res, Err(Error::NoSolution(_))));
    }

    #[test]
    fn zero_controller_output_cannot_track() {
        let a = mat![-1.0];
        let chk = verify_linear_dynamic_tracking(
            &a,
            &mat![1.0],
            &mat![1.0],
            &mat![1.0],
            &mat![0.0],
            &mat![0.0],
            &mat![-1.0],
            &mat![1.0],
            &mat![0.0],
            &mat![1.0],
            &mat![1.0],
        )
        .unwrap();
        assert!(!chk.exact_tracking);
        assert!((chk.residual_gradient - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kron_layout() {
        let k = kron(&mat![1.0, 2.0], &mat![1.0; 3.0]);
        assert_eq!(k, mat![1.0, 2.0; 3.0, 6.0]);
    }
}
