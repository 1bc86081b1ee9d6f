use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::jacobian::{central_jacobian, default_fd_step};
use crate::problem::Objective;
use crate::scalar::Real;

/// Loss `phi_0(u, x)` with its two partial gradients.
pub trait StateLoss<T: Real>: Send + Sync {
    fn value(&self, u: &DVector<T>, x: &DVector<T>) -> T;
    fn grad_u(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T>;
    fn grad_x(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T>;
}

/// Steady-state map `h(u, w)` solving `f(h(u, w), u, w) = 0`.
pub trait SteadyStateMap<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;

    fn eval(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>>;

    fn jac_u(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DMatrix<T>> {
        central_jacobian(|uu| self.eval(uu, w), u, default_fd_step::<T>())
    }

    fn jac_w(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DMatrix<T>> {
        central_jacobian(|ww| self.eval(u, ww), w, default_fd_step::<T>())
    }

    /// `J_hhat(u)` when `h(u, w) = hhat(u) + E w`; `None` otherwise.
    fn additive_jacobian(&self, _u: &DVector<T>) -> Option<DMatrix<T>> {
        None
    }
}

/// `phi(u, w) = phi_0(u, h(u, w))`.
#[derive(Clone)]
pub struct StateCostObjective<T: Real> {
    pub loss: Arc<dyn StateLoss<T>>,
    pub steady: Arc<dyn SteadyStateMap<T>>,
}

impl<T: Real> StateCostObjective<T> {
    pub fn new(loss: Arc<dyn StateLoss<T>>, steady: Arc<dyn SteadyStateMap<T>>) -> Self {
        StateCostObjective { loss, steady }
    }
}

impl<T: Real> Objective<T> for StateCostObjective<T> {
    fn input_dim(&self) -> usize {
        self.steady.input_dim()
    }

    fn disturbance_dim(&self) -> usize {
        self.steady.disturbance_dim()
    }

    fn reduced_loss(&self, u: &DVector<T>, w: &DVector<T>) -> Result<T> {
        let x = self.steady.eval(u, w)?;
        Ok(self.loss.value(u, &x))
    }

    /// Chain rule `grad_1 phi_0 + (dh/du)' grad_2 phi_0`.
    fn reduced_gradient(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        let x = self.steady.eval(u, w)?;
        let hu = self.steady.jac_u(u, w)?;
        Ok(self.loss.grad_u(u, &x) + hu.transpose() * self.loss.grad_x(u, &x))
    }

    fn state_cost(&self) -> Option<&StateCostObjective<T>> {
        Some(self)
    }
}

/// `1/2 x' W x + lambda/2 |u|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticStateLoss<T: Real> {
    pub weight: DMatrix<T>,
    pub lambda: T,
}

impl<T: Real> QuadraticStateLoss<T> {
    /// `1/2 |x|^2 + lambda/2 |u|^2`.
    pub fn identity(n: usize, lambda: T) -> Self {
        QuadraticStateLoss { weight: DMatrix::identity(n, n), lambda }
    }
}

impl<T: Real> StateLoss<T> for QuadraticStateLoss<T> {
    fn value(&self, u: &DVector<T>, x: &DVector<T>) -> T {
        let half = T::lit(0.5);
        half * x.dot(&(&self.weight * x)) + half * self.lambda * u.norm_squared()
    }
    fn grad_u(&self, u: &DVector<T>, _x: &DVector<T>) -> DVector<T> {
        u * self.lambda
    }
    fn grad_x(&self, _u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        (&self.weight + self.weight.transpose()) * x * T::lit(0.5)
    }
}

/// `1/2 |x|^2 + kappa/2 sum_j (log(1 + e^{mu u_j}) + log(1 + e^{-mu u_j}))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticStateLoss<T: Real> {
    pub kappa: T,
    pub mu: T,
}

fn softplus<T: Real>(z: T) -> T {
    // log(1 + e^z) without overflow
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<T: Real> StateLoss<T> for LogisticStateLoss<T> {
    fn value(&self, u: &DVector<T>, x: &DVector<T>) -> T {
        let half = T::lit(0.5);
        let reg = u
            .iter()
            .map(|&v| softplus(self.mu * v) + softplus(-self.mu * v))
            .fold(T::zero(), |a, b| a + b);
        half * x.norm_squared() + half * self.kappa * reg
    }
    fn grad_u(&self, u: &DVector<T>, _x: &DVector<T>) -> DVector<T> {
        // d/du [softplus(mu u) + softplus(-mu u)] = mu tanh(mu u / 2)
        let half = T::lit(0.5);
        u.map(|v| half * self.kappa * self.mu * (half * self.mu * v).tanh())
    }
    fn grad_x(&self, _u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        x.clone()
    }
}

/// Reduced quadratic `phi(u, w) = 1/2 u'Ru + u'Tw + 1/2 w'Ww`, so `g = R u + T w`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticReducedObjective<T: Real> {
    pub r: DMatrix<T>,
    pub t: DMatrix<T>,
    pub w_weight: DMatrix<T>,
}

impl<T: Real> QuadraticReducedObjective<T> {
    pub fn new(r: DMatrix<T>, t: DMatrix<T>, w_weight: DMatrix<T>) -> Result<Self> {
        let m = r.nrows();
        let p = t.ncols();
        if !r.is_square() || t.nrows() != m || w_weight.shape() != (p, p) {
            return Err(Error::invalid("quadratic objective: inconsistent dimensions"));
        }
        Ok(QuadraticReducedObjective { r, t, w_weight })
    }
}

impl<T: Real> Objective<T> for QuadraticReducedObjective<T> {
    fn input_dim(&self) -> usize {
        self.r.nrows()
    }
    fn disturbance_dim(&self) -> usize {
        self.t.ncols()
    }
    fn reduced_loss(&self, u: &DVector<T>, w: &DVector<T>) -> Result<T> {
        let half = T::lit(0.5);
        Ok(half * u.dot(&(&self.r * u)) + u.dot(&(&self.t * w)) + half * w.dot(&(&self.w_weight * w)))
    }
    fn reduced_gradient(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        let rs = (&self.r + self.r.transpose()) * T::lit(0.5);
        Ok(rs * u + &self.t * w)
    }
    fn gradient_jacobian_u(&self, _u: &DVector<T>, _w: &DVector<T>) -> Result<DMatrix<T>> {
        Ok((&self.r + self.r.transpose()) * T::lit(0.5))
    }
    fn gradient_jacobians(&self, _u: &DVector<T>, _w: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
        Ok(((&self.r + self.r.transpose()) * T::lit(0.5), self.t.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_gradient_matches_fd() {
        let l = LogisticStateLoss { kappa: 1.0, mu: 0.5 };
        let x = DVector::from_vec(vec![0.1, -0.2]);
        for &u0 in &[-40.0f64, -1.0, 0.0, 0.7, 300.0] {
            let u = DVector::from_vec(vec![u0]);
            let h = 1e-5 * (1.0 + u0.abs());
            let fd = (l.value(&DVector::from_vec(vec![u0 + h]), &x) - l.value(&DVector::from_vec(vec![u0 - h]), &x))
                / (2.0 * h);
            assert!((fd - l.grad_u(&u, &x)[0]).abs() < 1e-6 * (1.0 + fd.abs()), "{u0}");
        }
    }

    #[test]
    fn softplus_large_arguments() {
        assert_eq!(softplus(800.0f64), 800.0);
        assert!(softplus(-800.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_is_convex_midpoint() {
        let l = LogisticStateLoss { kappa: 1.0, mu: 0.5 };
        let x = DVector::zeros(2);
        for (a, b) in [(-3.0, 5.0), (0.1, 0.2), (-50.0, 40.0)] {
            let mid = l.value(&DVector::from_vec(vec![(a + b) / 2.0]), &x);
            let avg = 0.5 * (l.value(&DVector::from_vec(vec![a]), &x) + l.value(&DVector::from_vec(vec![b]), &x));
            assert!(mid <= avg + 1e-12);
        }
    }
}
