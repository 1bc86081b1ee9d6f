use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::LinearizationData;
use crate::problem::objective::{QuadraticStateLoss, StateCostObjective, SteadyStateMap};
use crate::problem::{Exosystem, Plant, PlantJacobians, Problem};
use crate::scalar::Real;

/// `x' = A x + B u + P w`, `y = C x + Q w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub p: DMatrix<T>,
    pub c: DMatrix<T>,
    pub q: DMatrix<T>,
}

impl<T: Real> LinearPlant<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, p: DMatrix<T>, c: DMatrix<T>, q: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        let pd = p.ncols();
        let ok = a.is_square() && b.nrows() == n && p.nrows() == n && c.ncols() == n && q.shape() == (c.nrows(), pd);
        if !ok {
            return Err(Error::invalid("linear plant: inconsistent dimensions"));
        }
        Ok(LinearPlant { a, b, p, c, q })
    }
}

impl<T: Real> Plant<T> for LinearPlant<T> {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    fn disturbance_dim(&self) -> usize {
        self.p.ncols()
    }
    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u + &self.p * w
    }
    fn output(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        &self.c * x + &self.q * w
    }
    fn jacobians(&self, _x: &DVector<T>, _u: &DVector<T>, _w: &DVector<T>) -> PlantJacobians<T> {
        PlantJacobians {
            fx: self.a.clone(),
            fu: self.b.clone(),
            fw: self.p.clone(),
            cx: self.c.clone(),
            cw: self.q.clone(),
        }
    }
}

/// `h(u, w) = T_xu u + T_xw w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSteadyState<T: Real> {
    pub t_xu: DMatrix<T>,
    pub t_xw: DMatrix<T>,
}

impl<T: Real> SteadyStateMap<T> for LinearSteadyState<T> {
    fn state_dim(&self) -> usize {
        self.t_xu.nrows()
    }
    fn input_dim(&self) -> usize {
        self.t_xu.ncols()
    }
    fn disturbance_dim(&self) -> usize {
        self.t_xw.ncols()
    }
    fn eval(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        Ok(&self.t_xu * u + &self.t_xw * w)
    }
    fn jac_u(&self, _u: &DVector<T>, _w: &DVector<T>) -> Result<DMatrix<T>> {
        Ok(self.t_xu.clone())
    }
    fn jac_w(&self, _u: &DVector<T>, _w: &DVector<T>) -> Result<DMatrix<T>> {
        Ok(self.t_xw.clone())
    }
    fn additive_jacobian(&self, _u: &DVector<T>) -> Option<DMatrix<T>> {
        Some(self.t_xu.clone())
    }
}

/// Linear-quadratic instance with its closed-form gradient data.
#[derive(Debug, Clone)]
pub struct LqProblem<T: Real> {
    pub problem: Problem<T>,
    pub plant: LinearPlant<T>,
    pub t_xu: DMatrix<T>,
    pub t_xw: DMatrix<T>,
    /// `T_xu' T_xu + lambda I`.
    pub r: DMatrix<T>,
    /// `T_xu' T_xw`.
    pub t: DMatrix<T>,
}

/// Linear plant with loss `1/2 |x|^2 + lambda/2 |u|^2`.
#[allow(clippy::too_many_arguments)]
pub fn lq_problem<T: Real>(
    a: DMatrix<T>,
    b: DMatrix<T>,
    p: DMatrix<T>,
    c: DMatrix<T>,
    q: DMatrix<T>,
    lambda: T,
    exosystem: Exosystem<T>,
) -> Result<LqProblem<T>> {
    let plant = LinearPlant::new(a, b, p, c, q)?;
    let n = plant.a.nrows();
    let m = plant.b.ncols();
    let lu = plant.a.clone().lu();
    let scale = plant.a.norm().max(T::one());
    let diag_min = (0..n).map(|i| lu.u()[(i, i)].abs()).fold(T::lit(f64::INFINITY), |a, b| a.min(b));
    if n > 0 && !(diag_min > T::lit(1e-12) * scale) {
        return Err(Error::invalid("A is singular: no steady-state map exists"));
    }
    let t_xu = -lu.solve(&plant.b).ok_or_else(|| Error::invalid("A is singular"))?;
    let t_xw = -lu.solve(&plant.p).ok_or_else(|| Error::invalid("A is singular"))?;
    let r = t_xu.transpose() * &t_xu + DMatrix::identity(m, m) * lambda;
    let t = t_xu.transpose() * &t_xw;
    let steady = LinearSteadyState { t_xu: t_xu.clone(), t_xw: t_xw.clone() };
    let objective = StateCostObjective::new(Arc::new(QuadraticStateLoss::identity(n, lambda)), Arc::new(steady));
    let lin = LinearizationData::new(
        plant.a.clone(),
        plant.b.clone(),
        plant.c.clone(),
        plant.p.clone(),
        plant.q.clone(),
        exosystem.s.clone(),
        t.clone(),
        r.clone(),
    )?;
    let problem = Problem::new("lq", Arc::new(plant.clone()), exosystem, Arc::new(objective))?.with_exact_linearization(lin)?;
    Ok(LqProblem { problem, plant, t_xu, t_xw, r, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{constant_exosystem, finite_difference_jacobians, harmonic_exosystem, OperatingPoint};

    #[test]
    fn scalar_arithmetic() {
        let lq = lq_problem(mat![-1.0], mat![1.0], mat![1.0], mat![1.0], mat![0.0], 0.0, constant_exosystem(&[0.0]).unwrap())
            .unwrap();
        assert_eq!(lq.t_xu, mat![1.0]);
        assert_eq!(lq.t_xw, mat![1.0]);
        assert_eq!(lq.r, mat![1.0]);
        assert_eq!(lq.t, mat![1.0]);
    }

    #[test]
    fn singular_a_rejected() {
        let r = lq_problem(mat![0.0], mat![1.0], mat![1.0], mat![1.0], mat![0.0], 0.1, constant_exosystem(&[0.0]).unwrap());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gradient_two_paths_agree() {
        let lq = lq_problem(
            mat![-1.0, 0.5; 0.0, -2.0],
            mat![1.0; 1.0],
            mat![1.0, 0.0; 0.5, 0.0],
            mat![1.0, 0.0; 0.0, 1.0],
            mat![0.0, 0.0; 0.0, 0.0],
            0.1,
            harmonic_exosystem(&[1.0], &[1.0]).unwrap(),
        )
        .unwrap();
        let u = DVector::from_vec(vec![0.3]);
        let w = DVector::from_vec(vec![0.7, -0.2]);
        let g1 = lq.problem.gradient(&u, &w).unwrap();
        let g2 = &lq.r * &u + &lq.t * &w;
        assert!((g1 - g2).norm() < 1e-14);
    }

    #[test]
    fn fd_recovers_matrices() {
        let lq = lq_problem(
            mat![-1.0, 0.5; 0.0, -2.0],
            mat![1.0; 1.0],
            mat![1.0, 0.0; 0.5, 0.0],
            mat![1.0, 0.0],
            mat![0.0, 1.0],
            0.1,
            harmonic_exosystem(&[1.0], &[1.0]).unwrap(),
        )
        .unwrap();
        let pt = OperatingPoint::equilibrium(&lq.problem);
        let fd = finite_difference_jacobians(&lq.problem, &pt, None).unwrap();
        let exact = lq.problem.linearize().unwrap();
        for (x, y) in [(&fd.a, &exact.a), (&fd.b, &exact.b), (&fd.p, &exact.p), (&fd.c, &exact.c), (&fd.q, &exact.q), (&fd.t, &exact.t), (&fd.r, &exact.r), (&fd.s, &exact.s)] {
            assert!((x - y).norm() < 1e-6, "{x} vs {y}");
        }
    }
}
