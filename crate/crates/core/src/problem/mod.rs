//! Plants, exosystems, objectives and the built-in instances.

mod example5;
mod exosystem;
mod jacobian;
mod lagrangian;
mod lq;
mod objective;
mod pendulum;
pub mod random;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::LinearizationData;
use crate::scalar::Real;

pub use example5::{example5_problem, example5_steady_state, scalar_example5};
pub use exosystem::{constant_exosystem, harmonic_exosystem, Channel, Exosystem, SamplingRegion};
pub use jacobian::{central_jacobian, default_fd_step, finite_difference_jacobians, OperatingPoint};
pub use lagrangian::{lagrangian_augment, AffineConstraint, AugmentedObjective, Constraint};
pub use lq::{lq_problem, LinearPlant, LinearSteadyState, LqProblem};
pub use objective::{
    LogisticStateLoss, QuadraticReducedObjective, QuadraticStateLoss, StateCostObjective, StateLoss,
    SteadyStateMap,
};
pub use pendulum::{
    pendulum_plant, pendulum_problem, pendulum_steady_state, PendulumBranch, PendulumLoss, PendulumParams,
    PendulumPlant, PendulumSteadyState,
};

/// Partial derivatives of `f` and `c` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantJacobians<T: Real> {
    pub fx: DMatrix<T>,
    pub fu: DMatrix<T>,
    pub fw: DMatrix<T>,
    pub cx: DMatrix<T>,
    pub cw: DMatrix<T>,
}

/// Equilibrium anchor `(x*, u*, y*)` at `w = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium<T: Real> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub y: DVector<T>,
}

/// `x' = f(x, u, w)`, `y = c(x, w)`.
pub trait Plant<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> DVector<T>;
    fn output(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T>;

    /// Central finite differences unless overridden with analytic forms.
    fn jacobians(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> PlantJacobians<T> {
        let h = default_fd_step::<T>();
        let ok = |v: DVector<T>| -> Result<DVector<T>> { Ok(v) };
        let fx = central_jacobian(|xx| ok(self.dynamics(xx, u, w)), x, h).expect("infallible");
        let fu = central_jacobian(|uu| ok(self.dynamics(x, uu, w)), u, h).expect("infallible");
        let fw = central_jacobian(|ww| ok(self.dynamics(x, u, ww)), w, h).expect("infallible");
        let cx = central_jacobian(|xx| ok(self.output(xx, w)), x, h).expect("infallible");
        let cw = central_jacobian(|ww| ok(self.output(x, ww)), w, h).expect("infallible");
        PlantJacobians { fx, fu, fw, cx, cw }
    }

    fn equilibrium(&self) -> Equilibrium<T> {
        let x = DVector::zeros(self.state_dim());
        let w = DVector::zeros(self.disturbance_dim());
        let y = self.output(&x, &w);
        Equilibrium { x, u: DVector::zeros(self.input_dim()), y }
    }
}

/// Reduced objective `phi(u, w)` and its gradient `g = grad_u phi`.
pub trait Objective<T: Real>: Send + Sync {
    fn input_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;

    fn reduced_loss(&self, u: &DVector<T>, w: &DVector<T>) -> Result<T>;
    fn reduced_gradient(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>>;

    /// `dg/du`; central differences unless overridden.
    fn gradient_jacobian_u(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DMatrix<T>> {
        central_jacobian(|uu| self.reduced_gradient(uu, w), u, default_fd_step::<T>())
    }

    /// `(dg/du, dg/dw)`; central differences unless overridden.
    fn gradient_jacobians(&self, u: &DVector<T>, w: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let gu = self.gradient_jacobian_u(u, w)?;
        let gw = central_jacobian(|ww| self.reduced_gradient(u, ww), w, default_fd_step::<T>())?;
        Ok((gu, gw))
    }

    /// State-cost structure `phi_0(u, x)` with steady-state map, when available.
    fn state_cost(&self) -> Option<&StateCostObjective<T>> {
        None
    }
}

/// Plant, exosystem and objective bundled together.
#[derive(Clone)]
pub struct Problem<T: Real> {
    pub name: String,
    pub plant: Arc<dyn Plant<T>>,
    pub exosystem: Exosystem<T>,
    pub objective: Arc<dyn Objective<T>>,
    /// Set only when plant, output, exosystem and gradient are exactly affine;
    /// enables the exact linear regulator path.
    pub exact_linearization: Option<LinearizationData<T>>,
}

impl<T: Real> std::fmt::Debug for Problem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.dims();
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &d.n)
            .field("m", &d.m)
            .field("q", &d.q)
            .field("p", &d.p)
            .field("linear", &self.is_linear())
            .finish()
    }
}

impl<T: Real> Problem<T> {
    pub fn new(
        name: impl Into<String>,
        plant: Arc<dyn Plant<T>>,
        exosystem: Exosystem<T>,
        objective: Arc<dyn Objective<T>>,
    ) -> Result<Self> {
        let p = exosystem.dim();
        if plant.disturbance_dim() != p || objective.disturbance_dim() != p {
            return Err(Error::invalid(format!(
                "disturbance dimensions disagree: plant {}, exosystem {p}, objective {}",
                plant.disturbance_dim(),
                objective.disturbance_dim()
            )));
        }
        if plant.input_dim() != objective.input_dim() {
            return Err(Error::invalid(format!(
                "input dimensions disagree: plant {}, objective {}",
                plant.input_dim(),
                objective.input_dim()
            )));
        }
        Ok(Problem { name: name.into(), plant, exosystem, objective, exact_linearization: None })
    }

    pub fn with_exact_linearization(mut self, lin: LinearizationData<T>) -> Result<Self> {
        lin.validate()?;
        let d = self.dims();
        if lin.dims() != d {
            return Err(Error::invalid("exact linearization dimensions disagree with the problem"));
        }
        self.exact_linearization = Some(lin);
        Ok(self)
    }

    pub fn dims(&self) -> crate::linalg::Dims {
        crate::linalg::Dims {
            n: self.plant.state_dim(),
            m: self.plant.input_dim(),
            q: self.plant.output_dim(),
            p: self.exosystem.dim(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.exact_linearization.is_some()
    }

    pub fn equilibrium(&self) -> Equilibrium<T> {
        self.plant.equilibrium()
    }

    /// Jacobians at the equilibrium: exact data when declared, otherwise the
    /// plant's Jacobians plus finite differences of the gradient.
    pub fn linearize(&self) -> Result<LinearizationData<T>> {
        if let Some(lin) = &self.exact_linearization {
            return Ok(lin.clone());
        }
        let eq = self.equilibrium();
        let w0 = DVector::zeros(self.exosystem.dim());
        let j = self.plant.jacobians(&eq.x, &eq.u, &w0);
        let (r, t) = self.objective.gradient_jacobians(&eq.u, &w0)?;
        LinearizationData::new(j.fx, j.fu, j.cx, j.fw, j.cw, self.exosystem.s.clone(), t, r)
    }

    pub fn gradient(&self, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        self.objective.reduced_gradient(u, w)
    }
}

/// Free-function form of the gradient signal `g(u, w)`.
pub fn reduced_gradient<T: Real>(obj: &dyn Objective<T>, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
    obj.reduced_gradient(u, w)
}
