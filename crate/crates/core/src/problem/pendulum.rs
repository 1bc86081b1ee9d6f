use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::objective::{LogisticStateLoss, QuadraticStateLoss, StateCostObjective, StateLoss, SteadyStateMap};
use crate::problem::{Exosystem, Plant, PlantJacobians, Problem};
use crate::scalar::Real;

/// Physical constants of the balancing robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams<T: Real> {
    /// Distance to the center of mass.
    pub l: T,
    pub m: T,
    /// Friction coefficient.
    pub k: T,
    pub g: T,
    /// Effective inertia.
    pub je: T,
}

impl<T: Real> PendulumParams<T> {
    pub fn new(l: T, m: T, k: T, g: T, je: T) -> Result<Self> {
        let p = PendulumParams { l, m, k, g, je };
        if [l, m, k, g, je].iter().all(|v| *v > T::zero() && v.is_finite_val()) {
            Ok(p)
        } else {
            Err(Error::invalid("pendulum parameters must be positive and finite"))
        }
    }

    /// `l = 0.023, m = 0.316, k = 0.1, g = 9.81, J_e = 0.000444`.
    pub fn reference() -> Self {
        PendulumParams { l: T::lit(0.023), m: T::lit(0.316), k: T::lit(0.1), g: T::lit(9.81), je: T::lit(0.000444) }
    }

    pub fn alpha(&self) -> T {
        self.m * self.g * self.l / self.je
    }
    pub fn beta(&self) -> T {
        self.k * self.l * self.l / self.je
    }
    pub fn gamma_p(&self) -> T {
        self.m * self.l / self.je
    }
    pub fn eta_p(&self) -> T {
        T::one() / self.je
    }
}

/// `x1' = x2`, `x2' = alpha sin x1 - beta x2 - gamma u cos x1 + eta w1`, `y = x2 + w3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumPlant<T: Real> {
    pub params: PendulumParams<T>,
}

pub fn pendulum_plant<T: Real>(params: PendulumParams<T>) -> PendulumPlant<T> {
    PendulumPlant { params }
}

impl<T: Real> Plant<T> for PendulumPlant<T> {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        4
    }
    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        let p = &self.params;
        let (s, c) = x[0].sin_cos();
        DVector::from_vec(vec![
            x[1],
            p.alpha() * s - p.beta() * x[1] - p.gamma_p() * u[0] * c + p.eta_p() * w[0],
        ])
    }
    fn output(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, x[1] + w[2])
    }
    fn jacobians(&self, x: &DVector<T>, u: &DVector<T>, _w: &DVector<T>) -> PlantJacobians<T> {
        let p = &self.params;
        let (s, c) = x[0].sin_cos();
        let z = T::zero();
        let fx = DMatrix::from_row_slice(2, 2, &[z, T::one(), p.alpha() * c + p.gamma_p() * u[0] * s, -p.beta()]);
        let fu = DMatrix::from_row_slice(2, 1, &[z, -p.gamma_p() * c]);
        let fw = DMatrix::from_row_slice(2, 4, &[z, z, z, z, p.eta_p(), z, z, z]);
        let cx = DMatrix::from_row_slice(1, 2, &[z, T::one()]);
        let cw = DMatrix::from_row_slice(1, 4, &[z, z, T::one(), z]);
        PlantJacobians { fx, fu, fw, cx, cw }
    }
}

/// Which pre-image of the steady-state equation to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendulumBranch {
    /// Half-angle closed form, with `[pi, 0]` when `eta w1 + gamma u = 0`.
    Piecewise,
    /// Equivalent rationalized form, continuous through `(u, w) = (0, 0)`.
    ContinuousAtOrigin,
}

/// Steady state `h(u, w)` of the pendulum.
pub fn pendulum_steady_state<T: Real>(
    params: &PendulumParams<T>,
    u: T,
    w1: T,
    branch: PendulumBranch,
) -> Result<DVector<T>> {
    let (a, g, e) = (params.alpha(), params.gamma_p(), params.eta_p());
    let disc = a * a - e * e * w1 * w1 + g * g * u * u;
    if !(disc >= T::zero()) {
        return Err(Error::domain(format!(
            "no real equilibrium: alpha^2 - eta^2 w1^2 + gamma^2 u^2 = {:e}",
            disc.to_f64_lossy()
        )));
    }
    let sq = disc.sqrt();
    let x1 = match branch {
        PendulumBranch::Piecewise => {
            let den = e * w1 + g * u;
            if den == T::zero() {
                T::pi()
            } else {
                -T::lit(2.0) * ((a - sq) / den).atan()
            }
        }
        PendulumBranch::ContinuousAtOrigin => T::lit(2.0) * ((g * u - e * w1) / (a + sq)).atan(),
    };
    Ok(DVector::from_vec(vec![x1, T::zero()]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumSteadyState<T: Real> {
    pub params: PendulumParams<T>,
    pub branch: PendulumBranch,
}

impl<T: Real> PendulumSteadyState<T> {
    /// `dF/dx1` of `F = alpha sin x1 - gamma u cos x1 + eta w1`.
    fn fx(&self, x1: T, u: T) -> Result<T> {
        let (s, c) = x1.sin_cos();
        let d = self.params.alpha() * c + self.params.gamma_p() * u * s;
        if d.abs() <= T::lit(1e-12) * self.params.alpha() {
            return Err(Error::domain("steady-state map is not differentiable here"));
        }
        Ok(d)
    }
}

impl<T: Real> SteadyStateMap<T> for PendulumSteadyState<T> {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        4
    }
    fn eval(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        pendulum_steady_state(&self.params, u[0], w[0], self.branch)
    }
    fn jac_u(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DMatrix<T>> {
        let x1 = self.eval(u, w)?[0];
        let d = self.fx(x1, u[0])?;
        Ok(DMatrix::from_row_slice(2, 1, &[self.params.gamma_p() * x1.cos() / d, T::zero()]))
    }
    fn jac_w(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DMatrix<T>> {
        let x1 = self.eval(u, w)?[0];
        let d = self.fx(x1, u[0])?;
        let mut j = DMatrix::zeros(2, 4);
        j[(0, 0)] = -self.params.eta_p() / d;
        Ok(j)
    }
}

/// Objective choices for the pendulum benchmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PendulumLoss<T: Real> {
    /// `1/2 |x|^2`.
    Quadratic,
    /// `1/2 |x|^2 + kappa/2 (log(1 + e^{mu u}) + log(1 + e^{-mu u}))`.
    Logistic { kappa: T, mu: T },
}

pub fn pendulum_problem<T: Real>(
    params: PendulumParams<T>,
    loss: PendulumLoss<T>,
    exosystem: Exosystem<T>,
    branch: PendulumBranch,
) -> Result<Problem<T>> {
    let steady = Arc::new(PendulumSteadyState { params, branch });
    let (name, l): (&str, Arc<dyn StateLoss<T>>) = match loss {
        PendulumLoss::Quadratic => ("pendulum-quadratic", Arc::new(QuadraticStateLoss::identity(2, T::zero()))),
        PendulumLoss::Logistic { kappa, mu } => {
            if !(kappa > T::zero() && mu > T::zero()) {
                return Err(Error::invalid("logistic loss needs kappa, mu > 0"));
            }
            ("pendulum-logistic", Arc::new(LogisticStateLoss { kappa, mu }))
        }
    };
    let objective = StateCostObjective::new(l, steady);
    Problem::new(name, Arc::new(pendulum_plant(params)), exosystem, Arc::new(objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_stabilizable;
    use crate::problem::{central_jacobian, harmonic_exosystem};

    fn params() -> PendulumParams<f64> {
        PendulumParams::reference()
    }

    #[test]
    fn derived_constants() {
        let p = params();
        assert!((p.alpha() - 0.316 * 9.81 * 0.023 / 0.000444).abs() < 1e-12);
        assert!((p.beta() - 0.1 * 0.023 * 0.023 / 0.000444).abs() < 1e-15);
        assert!((p.gamma_p() - 0.316 * 0.023 / 0.000444).abs() < 1e-12);
        assert!((p.eta_p() - 1.0 / 0.000444).abs() < 1e-9);
    }

    #[test]
    fn upright_equilibrium_and_jacobian() {
        let plant = pendulum_plant(params());
        let z2 = DVector::zeros(2);
        let z4 = DVector::zeros(4);
        let u0 = DVector::zeros(1);
        assert_eq!(plant.dynamics(&z2, &u0, &z4).norm(), 0.0);
        let j = plant.jacobians(&z2, &u0, &z4);
        assert_eq!(j.fx[(1, 0)], params().alpha());
        assert_eq!(j.fu[(1, 0)], -params().gamma_p());
        let fdx = central_jacobian(|x| Ok(plant.dynamics(x, &u0, &z4)), &z2, 1e-6).unwrap();
        assert!((fdx - j.fx).norm() < 1e-5 * params().alpha());
    }

    #[test]
    fn linearization_stabilizable() {
        let j = pendulum_plant(params()).jacobians(&DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(4));
        // PBH at the unstable root sqrt(alpha): [A - lambda I, B] has rank 2 since gamma != 0
        assert!(is_stabilizable(&j.fx, &j.fu).unwrap());
    }

    #[test]
    fn piecewise_branch_otherwise_case() {
        let p = params();
        let w1 = 0.01;
        let u = -p.eta_p() * w1 / p.gamma_p();
        let x = pendulum_steady_state(&p, u, w1, PendulumBranch::Piecewise).unwrap();
        assert_eq!(x[0], std::f64::consts::PI);
    }

    #[test]
    fn steady_state_substitutes_back() {
        let p = params();
        let plant = pendulum_plant(p);
        for &(u, w1) in &[(12.0, 0.1), (-3.0, 0.02), (150.0, 1.0), (0.0, -0.05)] {
            for branch in [PendulumBranch::Piecewise, PendulumBranch::ContinuousAtOrigin] {
                let x = pendulum_steady_state(&p, u, w1, branch).unwrap();
                let w = DVector::from_vec(vec![w1, 0.0, 0.0, 0.0]);
                let f = plant.dynamics(&x, &DVector::from_element(1, u), &w);
                assert!(f.norm() < 1e-9 * p.eta_p(), "{u} {w1} {branch:?} {f}");
            }
        }
    }

    #[test]
    fn continuous_branch_near_origin() {
        // root of alpha sin x = gamma u cos x near 0 is atan(gamma u / alpha)
        let p = params();
        let u = 1e-3;
        let x = pendulum_steady_state(&p, u, 0.0, PendulumBranch::ContinuousAtOrigin).unwrap();
        assert!((x[0] - (p.gamma_p() * u / p.alpha()).atan()).abs() < 1e-14);
    }

    #[test]
    fn negative_discriminant_is_domain_error() {
        let p = params();
        let r = pendulum_steady_state(&p, 0.0, 1.0, PendulumBranch::ContinuousAtOrigin);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn analytic_steady_jacobians_match_fd() {
        let p = params();
        let h = PendulumSteadyState { params: p, branch: PendulumBranch::ContinuousAtOrigin };
        let u = DVector::from_element(1, 20.0);
        let w = DVector::from_vec(vec![0.1, 0.0, 0.3, 0.0]);
        let ju = h.jac_u(&u, &w).unwrap();
        let fdu = central_jacobian(|uu| h.eval(uu, &w), &u, 1e-7).unwrap();
        assert!((ju - fdu).norm() < 1e-6);
        let jw = h.jac_w(&u, &w).unwrap();
        let fdw = central_jacobian(|ww| h.eval(&u, ww), &w, 1e-7).unwrap();
        assert!((jw - fdw).norm() < 1e-5);
    }

    #[test]
    fn quadratic_gradient_matches_fd_of_loss() {
        let exo = harmonic_exosystem(&[1.0, 10.0], &[1.0, 0.5]).unwrap();
        let prob = pendulum_problem(params(), PendulumLoss::Quadratic, exo, PendulumBranch::ContinuousAtOrigin).unwrap();
        let w = DVector::from_vec(vec![0.05, 0.1, -0.2, 0.5]);
        for u0 in [-50.0, 0.0, 12.0, 41.3] {
            let u = DVector::from_element(1, u0);
            let g = prob.gradient(&u, &w).unwrap()[0];
            let hh = 1e-6 * (1.0 + u0.abs());
            let fd = (prob.objective.reduced_loss(&DVector::from_element(1, u0 + hh), &w).unwrap()
                - prob.objective.reduced_loss(&DVector::from_element(1, u0 - hh), &w).unwrap())
                / (2.0 * hh);
            assert!((g - fd).abs() <= 1e-6 * (1.0 + g.abs()), "{g} {fd}");
        }
    }
}
