use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::Objective;
use crate::scalar::Real;

/// Equality constraint `psi(u, w) = 0`.
pub trait Constraint<T: Real>: Send + Sync {
    fn value(&self, u: &DVector<T>, w: &DVector<T>) -> T;
    fn grad_u(&self, u: &DVector<T>, w: &DVector<T>) -> DVector<T>;
}

/// `a' u - b0 - b' w`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint<T: Real> {
    pub a: DVector<T>,
    pub b0: T,
    pub b: DVector<T>,
}

impl<T: Real> Constraint<T> for AffineConstraint<T> {
    fn value(&self, u: &DVector<T>, w: &DVector<T>) -> T {
        self.a.dot(u) - self.b0 - self.b.dot(w)
    }
    fn grad_u(&self, _u: &DVector<T>, _w: &DVector<T>) -> DVector<T> {
        self.a.clone()
    }
}

/// Objective over `u~ = (u, lambda)` with loss `phi(u, w) + sum lambda_i psi_i(u, w)`.
pub struct AugmentedObjective<T: Real> {
    pub base: Arc<dyn Objective<T>>,
    pub constraints: Vec<Arc<dyn Constraint<T>>>,
}

impl<T: Real> AugmentedObjective<T> {
    fn split(&self, ut: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let m = self.base.input_dim();
        (ut.rows(0, m).into_owned(), ut.rows(m, self.constraints.len()).into_owned())
    }
}

impl<T: Real> Objective<T> for AugmentedObjective<T> {
    fn input_dim(&self) -> usize {
        self.base.input_dim() + self.constraints.len()
    }
    fn disturbance_dim(&self) -> usize {
        self.base.disturbance_dim()
    }
    fn reduced_loss(&self, ut: &DVector<T>, w: &DVector<T>) -> Result<T> {
        let (u, lam) = self.split(ut);
        let mut v = self.base.reduced_loss(&u, w)?;
        for (l, c) in lam.iter().zip(&self.constraints) {
            v += *l * c.value(&u, w);
        }
        Ok(v)
    }
    /// `[grad_u phi + sum lambda_i grad_u psi_i ; psi(u, w)]`.
    fn reduced_gradient(&self, ut: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        let (u, lam) = self.split(ut);
        let m = u.len();
        let mut g = DVector::zeros(self.input_dim());
        let mut gu = self.base.reduced_gradient(&u, w)?;
        for (i, c) in self.constraints.iter().enumerate() {
            gu += c.grad_u(&u, w) * lam[i];
            g[m + i] = c.value(&u, w);
        }
        g.rows_mut(0, m).copy_from(&gu);
        Ok(g)
    }
}

/// Augments `obj` with multipliers for `constraints`; identity when empty.
pub fn lagrangian_augment<T: Real + 'static>(
    obj: Arc<dyn Objective<T>>,
    constraints: Vec<Arc<dyn Constraint<T>>>,
) -> Arc<dyn Objective<T>> {
    if constraints.is_empty() {
        obj
    } else {
        Arc::new(AugmentedObjective { base: obj, constraints })
    }
}

/// Checks that `m` is square and the constraint Jacobian has full row rank.
#[allow(dead_code)]
pub(crate) fn kkt_matrix<T: Real>(hess: &DMatrix<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = hess.nrows();
    let r = a.nrows();
    if !hess.is_square() || a.ncols() != m {
        return Err(Error::invalid("KKT: inconsistent dimensions"));
    }
    let mut k = DMatrix::zeros(m + r, m + r);
    k.view_mut((0, 0), (m, m)).copy_from(hess);
    k.view_mut((0, m), (m, r)).copy_from(&a.transpose());
    k.view_mut((m, 0), (r, m)).copy_from(a);
    Ok(k)
}
