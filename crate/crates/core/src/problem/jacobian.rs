use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::LinearizationData;
use crate::problem::Problem;
use crate::scalar::{all_finite, Real};

/// Relative central-difference step: `1e-6` in double precision, `eps^(1/3)` when coarser.
pub fn default_fd_step<T: Real>() -> T {
    T::lit(1e-6).max(T::eps().cbrt())
}

/// Central-difference Jacobian of `f` at `x0` with step `rel * (1 + |x0|)`.
pub fn central_jacobian<T: Real, F>(f: F, x0: &DVector<T>, rel: T) -> Result<DMatrix<T>>
where
    F: Fn(&DVector<T>) -> Result<DVector<T>>,
{
    let h = rel * (T::one() + x0.norm());
    let cols = x0.len();
    let mut out: Option<DMatrix<T>> = None;
    let mut xp = x0.clone();
    for j in 0..cols {
        xp[j] = x0[j] + h;
        let fp = f(&xp)?;
        xp[j] = x0[j] - h;
        let fm = f(&xp)?;
        xp[j] = x0[j];
        let col = (fp - fm) / (h + h);
        let m = out.get_or_insert_with(|| DMatrix::zeros(col.len(), cols));
        m.set_column(j, &col);
    }
    let m = match out {
        Some(m) => m,
        None => DMatrix::zeros(f(x0)?.len(), 0),
    };
    if !all_finite(m.iter().copied()) {
        return Err(Error::numerical("finite-difference Jacobian is not finite"));
    }
    Ok(m)
}

/// Point `(x, u, w)` at which to linearize.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint<T: Real> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub w: DVector<T>,
}

impl<T: Real> OperatingPoint<T> {
    pub fn equilibrium(problem: &Problem<T>) -> Self {
        let eq = problem.equilibrium();
        OperatingPoint { x: eq.x, u: eq.u, w: DVector::zeros(problem.exosystem.dim()) }
    }

    fn norm(&self) -> T {
        (self.x.norm_squared() + self.u.norm_squared() + self.w.norm_squared()).sqrt()
    }
}

/// All linearization matrices by central differences, step `rel * (1 + |point|)`.
pub fn finite_difference_jacobians<T: Real>(
    problem: &Problem<T>,
    point: &OperatingPoint<T>,
    step: Option<T>,
) -> Result<LinearizationData<T>> {
    let rel = step.unwrap_or_else(default_fd_step::<T>);
    let h = rel * (T::one() + point.norm());
    // central_jacobian scales by (1 + |x0|); pass an absolute step instead
    let jac = |f: &dyn Fn(&DVector<T>) -> Result<DVector<T>>, x0: &DVector<T>| -> Result<DMatrix<T>> {
        central_jacobian(f, x0, h / (T::one() + x0.norm()))
    };
    let plant = &problem.plant;
    let (x, u, w) = (&point.x, &point.u, &point.w);
    let fin = |v: DVector<T>| -> Result<DVector<T>> {
        if all_finite(v.iter().copied()) {
            Ok(v)
        } else {
            Err(Error::numerical("NaN in model evaluation"))
        }
    };
    let a = jac(&|xx| fin(plant.dynamics(xx, u, w)), x)?;
    let b = jac(&|uu| fin(plant.dynamics(x, uu, w)), u)?;
    let p = jac(&|ww| fin(plant.dynamics(x, u, ww)), w)?;
    let c = jac(&|xx| fin(plant.output(xx, w)), x)?;
    let q = jac(&|ww| fin(plant.output(x, ww)), w)?;
    let s = jac(&|ww| fin(problem.exosystem.vector_field(ww)), w)?;
    let obj = &problem.objective;
    let r = jac(&|uu| obj.reduced_gradient(uu, w).and_then(fin), u)?;
    let t = jac(&|ww| obj.reduced_gradient(u, ww).and_then(fin), w)?;
    LinearizationData::new(a, b, c, p, q, s, t, r)
}
