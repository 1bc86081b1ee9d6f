use nalgebra::{Complex, DMatrix, SVD};

use crate::error::{Error, Result};
use crate::linalg::spectrum::{eigendecompose, Spectrum};
use crate::scalar::Real;

/// Relative singular-value threshold used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceKind {
    Controllable,
    Unobservable,
    Unstable,
    Stable,
    Intersection,
}

/// Orthonormal basis stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<T: Real> {
    pub columns: DMatrix<T>,
    pub kind: SubspaceKind,
}

impl<T: Real> SubspaceBasis<T> {
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<T> {
        &self.columns * self.columns.transpose()
    }

    /// Largest distance of a column of `other` (orthonormal) from this subspace.
    pub fn max_distance(&self, other: &DMatrix<T>) -> T {
        if other.ncols() == 0 {
            return T::zero();
        }
        let resid = other - self.projector() * other;
        if resid.is_empty() {
            T::zero()
        } else {
            spectral_norm(&resid)
        }
    }

    /// Whether `other` (orthonormal columns) lies inside this subspace.
    pub fn contains(&self, other: &DMatrix<T>, tol: T) -> bool {
        self.max_distance(other) <= tol
    }
}

pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    let svd = SVD::new(m.clone(), false, false);
    svd.singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b))
}

/// Orthonormal basis of the range of `m`; singular values below
/// `rtol * max(sigma_max, floor)` are dropped.
pub(crate) fn orth<T: Real>(m: &DMatrix<T>, rtol: T, floor: T) -> DMatrix<T> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values[0];
    let cut = rtol * smax.max(floor);
    let r = svd.singular_values.iter().filter(|&&s| s > cut && s > T::zero()).count();
    u.columns(0, r).into_owned()
}

/// Right singular vectors of the `k` smallest singular values of `m`
/// (treated as a square matrix by zero padding).
pub(crate) fn trailing_right_singular<T: Real>(m: &DMatrix<T>, k: usize) -> DMatrix<T> {
    let c = m.ncols();
    if k == 0 {
        return DMatrix::zeros(c, 0);
    }
    let padded = if m.nrows() < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (m.nrows(), c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("requested V^T");
    vt.rows(c - k, k).transpose()
}

/// Null space basis by relative tolerance.
pub(crate) fn null_space<T: Real>(m: &DMatrix<T>, rtol: T) -> DMatrix<T> {
    let c = m.ncols();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let padded = if m.nrows() < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (m.nrows(), c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let smax = svd.singular_values[0];
    let cut = rtol * smax.max(T::one());
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let vt = svd.v_t.expect("requested V^T");
    vt.rows(rank, c - rank).transpose()
}

/// Matrix product of the real factors `(A - lambda I)` (pairs merged into
/// real quadratics), each normalized to unit norm.
fn annihilating_product<T: Real>(a: &DMatrix<T>, eigs: &[Complex<T>]) -> DMatrix<T> {
    let n = a.nrows();
    let id = DMatrix::<T>::identity(n, n);
    let mut prod = id.clone();
    let mut used = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = eigs[i];
        let factor = if z.im == T::zero() {
            a - &id * z.re
        } else {
            if let Some(j) = (0..eigs.len()).find(|&j| !used[j] && eigs[j].re == z.re && eigs[j].im == -z.im) {
                used[j] = true;
            }
            // (A - z)(A - conj z) = A^2 - 2 Re z A + |z|^2
            a * a - a * (z.re + z.re) + &id * (z.re * z.re + z.im * z.im)
        };
        let nrm = factor.norm();
        prod = if nrm > T::zero() { factor * prod / nrm } else { factor * prod };
    }
    prod
}

fn spectral_subspace<T: Real>(a: &DMatrix<T>, spec: &Spectrum<T>, unstable: bool) -> SubspaceBasis<T> {
    let n = a.nrows();
    let (chosen, kind): (Vec<Complex<T>>, _) = if unstable {
        (spec.non_stable(), SubspaceKind::Unstable)
    } else {
        (
            spec.eigenvalues.iter().copied().filter(|z| z.re < -spec.margin).collect(),
            SubspaceKind::Stable,
        )
    };
    let k = chosen.len();
    let columns = if k == 0 {
        DMatrix::zeros(n, 0)
    } else if k == n {
        DMatrix::identity(n, n)
    } else {
        let m = annihilating_product(a, &chosen);
        trailing_right_singular(&m, k)
    };
    SubspaceBasis { columns, kind }
}

/// Generalized eigenspace of the eigenvalues with real part `>= -margin`.
pub fn unstable_subspace<T: Real>(a: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let spec = eigendecompose(a)?;
    Ok(spectral_subspace(a, &spec, true))
}

/// Generalized eigenspace of the strictly stable eigenvalues.
pub fn stable_subspace<T: Real>(a: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let spec = eigendecompose(a)?;
    Ok(spectral_subspace(a, &spec, false))
}

/// Orthonormal basis of `Im B + A Im B + ... + A^{n-1} Im B`.
pub fn controllable_subspace<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::invalid(format!(
            "controllable_subspace: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let rtol = T::lit(RANK_TOL);
    let mut v = orth(b, rtol, T::zero());
    let scale = T::one().max(a.norm());
    for _ in 0..n {
        if v.ncols() == n || v.ncols() == 0 {
            break;
        }
        let av = a * &v;
        let mut stacked = DMatrix::zeros(n, 2 * v.ncols());
        stacked.columns_mut(0, v.ncols()).copy_from(&(&v * scale));
        stacked.columns_mut(v.ncols(), v.ncols()).copy_from(&av);
        let next = orth(&stacked, rtol, scale);
        if next.ncols() == v.ncols() {
            break;
        }
        v = next;
    }
    Ok(SubspaceBasis { columns: v, kind: SubspaceKind::Controllable })
}

/// Orthonormal basis of the intersection of `ker C A^i`, i = 0..n-1.
pub fn unobservable_subspace<T: Real>(c: &DMatrix<T>, a: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    if !a.is_square() || c.ncols() != a.nrows() {
        return Err(Error::invalid(format!(
            "unobservable_subspace: C is {}x{}, A is {}x{}",
            c.nrows(),
            c.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let ctrb = controllable_subspace(&a.transpose(), &c.transpose())?;
    let n = a.nrows();
    let columns = if ctrb.dim() == 0 {
        DMatrix::identity(n, n)
    } else {
        null_space(&ctrb.columns.transpose(), T::lit(RANK_TOL))
    };
    Ok(SubspaceBasis { columns, kind: SubspaceKind::Unobservable })
}

/// Intersection of two subspaces given by orthonormal bases.
pub fn intersect<T: Real>(u: &SubspaceBasis<T>, v: &SubspaceBasis<T>, tol: T) -> SubspaceBasis<T> {
    let n = u.ambient_dim();
    let (a, b) = (u.dim(), v.dim());
    if a == 0 || b == 0 {
        return SubspaceBasis { columns: DMatrix::zeros(n, 0), kind: SubspaceKind::Intersection };
    }
    let mut m = DMatrix::zeros(n, a + b);
    m.columns_mut(0, a).copy_from(&u.columns);
    m.columns_mut(a, b).copy_from(&(-&v.columns));
    let coeffs = null_space(&m, tol);
    let x = &u.columns * coeffs.rows(0, a);
    let columns = orth(&x, tol, T::one());
    SubspaceBasis { columns, kind: SubspaceKind::Intersection }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal(m: &DMatrix<f64>) -> bool {
        let g = m.transpose() * m;
        (g - DMatrix::identity(m.ncols(), m.ncols())).norm() < 1e-10
    }

    #[test]
    fn unstable_of_diag() {
        let s = unstable_subspace(&mat![1.0, 0.0; 0.0, -1.0]).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.columns[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(orthonormal(&s.columns));
    }

    #[test]
    fn unstable_with_complex_pair() {
        // rotation block (marginal) plus a stable mode
        let a = mat![0.0, 2.0, 0.0; -2.0, 0.0, 0.0; 0.0, 0.0, -3.0];
        let s = unstable_subspace(&a).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.columns.row(2).norm() < 1e-12);
        let st = stable_subspace(&a).unwrap();
        assert_eq!(st.dim(), 1);
    }

    #[test]
    fn double_integrator_controllable() {
        let s = controllable_subspace(&mat![0.0, 1.0; 0.0, 0.0], &mat![0.0; 1.0]).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn unobservable_second_coordinate() {
        // brute force: kernel of [C; C A] = [[1,0],[1,0]] is span(e2)
        let brute = null_space(&mat![1.0, 0.0; 1.0, 0.0], 1e-12);
        let s = unobservable_subspace(&mat![1.0, 0.0], &mat![1.0, 0.0; 0.0, 2.0]).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.columns.transpose() * &brute)[(0, 0)].abs() > 1.0 - 1e-12);
    }

    #[test]
    fn intersection_of_planes() {
        let u = SubspaceBasis { columns: mat![1.0, 0.0; 0.0, 1.0; 0.0, 0.0], kind: SubspaceKind::Stable };
        let v = SubspaceBasis { columns: mat![0.0, 0.0; 1.0, 0.0; 0.0, 1.0], kind: SubspaceKind::Stable };
        let w = intersect(&u, &v, 1e-8);
        assert_eq!(w.dim(), 1);
        assert!((w.columns[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let ns = null_space(&mat![1.0, 1.0, 0.0], 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((mat![1.0, 1.0, 0.0] * &ns).norm() < 1e-14);
    }
}
