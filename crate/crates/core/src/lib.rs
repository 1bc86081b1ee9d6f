//! Feedback optimization posed as output regulation: linear regulator
//! solves, polynomial invariant-manifold fits, observer-based controller
//! synthesis and closed-loop simulation.

#[cfg(test)]
macro_rules! mat {
    ($($t:tt)*) => {{
        let m: nalgebra::DMatrix<f64> = nalgebra::dmatrix![$($t)*];
        m
    }};
}

pub mod bundle;
pub mod error;
pub mod linalg;
pub mod manifold;
pub mod problem;
pub mod regulator;
pub mod scalar;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the generic core.
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type ProblemF64 = problem::Problem<f64>;
pub type LinearizationF64 = linalg::LinearizationData<f64>;
pub type LinearRegulatorSolutionF64 = linalg::LinearRegulatorSolution<f64>;
pub type LinearControllerF64 = regulator::LinearController<f64>;
pub type ManifoldSolutionF64 = manifold::ManifoldSolution<f64>;
pub type ControllerF64 = synthesis::SynthesizedController<f64>;
pub type StaticLawF64 = synthesis::StaticLaw<f64>;
pub type ClosedLoopF64 = sim::ClosedLoop<f64>;
pub type TrajectoryF64 = sim::Trajectory<f64>;
