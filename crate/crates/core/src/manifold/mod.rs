//! Polynomial solutions `pi(w)`, `gamma(w)` of the invariance equations.

mod basis;
mod fit;
mod halton;
mod probe;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::LinearRegulatorSolution;
use crate::problem::Problem;
use crate::scalar::Real;

pub use basis::{monomial_count, poly_basis, MonomialBasis, PolyMap};
pub use fit::{fit_manifold, CollocationSpec, FitOptions};
pub use halton::Halton;
pub use probe::{solvability_probe, ProbeOptions, ProbeReport, ProbeVerdict};

/// Why the fit loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Closed-form path, no iterations.
    Exact,
    ZeroResidual,
    Gradient,
    Step,
    /// Damping grew without an acceptable step.
    Stalled,
    IterationCap,
    /// Residual could not be evaluated (outside the model's domain).
    Domain,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Exact => "exact",
            Termination::ZeroResidual => "zero-residual",
            Termination::Gradient => "gradient",
            Termination::Step => "step",
            Termination::Stalled => "stalled",
            Termination::IterationCap => "iteration-cap",
            Termination::Domain => "domain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "exact" => Termination::Exact,
            "zero-residual" => Termination::ZeroResidual,
            "gradient" => Termination::Gradient,
            "step" => Termination::Step,
            "stalled" => Termination::Stalled,
            "iteration-cap" => Termination::IterationCap,
            "domain" => Termination::Domain,
            _ => return None,
        })
    }
}

/// Residuals measured on validation points disjoint from the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// `rms |r| / (1 + rms sqrt(|f|^2 + |g|^2))` on the validation sample.
    pub relative_residual: f64,
    pub training_relative_residual: f64,
    /// RMS of each of the `n + m` residual components on the validation sample.
    pub per_equation: Vec<f64>,
    pub collocation_count: usize,
    pub validation_count: usize,
    /// Validation points where the model could not be evaluated.
    pub domain_failures: usize,
    pub iterations: usize,
    pub termination: Termination,
    pub seed: u64,
}

/// `pi(w) = x* + pi_poly(w)`, `gamma(w) = u* + gamma_poly(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSolution<T: Real> {
    pub pi: PolyMap<T>,
    pub gamma: PolyMap<T>,
    pub x_star: DVector<T>,
    pub u_star: DVector<T>,
    pub report: FitReport,
}

impl<T: Real> ManifoldSolution<T> {
    pub fn pi_at(&self, w: &DVector<T>) -> DVector<T> {
        &self.x_star + self.pi.eval(w)
    }

    pub fn gamma_at(&self, w: &DVector<T>) -> DVector<T> {
        &self.u_star + self.gamma.eval(w)
    }

    pub fn pi_jacobian(&self, w: &DVector<T>) -> DMatrix<T> {
        self.pi.jacobian(w)
    }

    pub fn gamma_jacobian(&self, w: &DVector<T>) -> DMatrix<T> {
        self.gamma.jacobian(w)
    }

    pub fn disturbance_dim(&self) -> usize {
        self.pi.input_dim()
    }

    /// Degree-1 maps `w -> Pi w`, `w -> Gamma w` from the linear regulator
    /// solution, with a validation report against `problem`.
    pub fn from_linear(problem: &Problem<T>, sol: &LinearRegulatorSolution<T>, seed: u64) -> Result<Self> {
        let eq = problem.equilibrium();
        let mut out = ManifoldSolution {
            pi: PolyMap::linear(&sol.pi, 1)?,
            gamma: PolyMap::linear(&sol.gamma, 1)?,
            x_star: eq.x,
            u_star: eq.u,
            report: FitReport {
                relative_residual: 0.0,
                training_relative_residual: 0.0,
                per_equation: Vec::new(),
                collocation_count: 0,
                validation_count: 0,
                domain_failures: 0,
                iterations: 0,
                termination: Termination::Exact,
                seed,
            },
        };
        let pts = fit::validation_points(problem, &problem.exosystem.region, 0, fit::DEFAULT_VALIDATION, seed);
        let v = fit::measure(problem, &out, &pts);
        out.report.relative_residual = v.relative;
        out.report.training_relative_residual = v.relative;
        out.report.per_equation = v.per_equation;
        out.report.validation_count = pts.len();
        out.report.domain_failures = v.domain_failures;
        Ok(out)
    }

    pub fn to_f64(&self) -> ManifoldSolution<f64> {
        let c = |m: &DMatrix<T>| m.map(|v| v.to_f64_lossy());
        ManifoldSolution {
            pi: PolyMap { basis: self.pi.basis.clone(), coeffs: c(&self.pi.coeffs) },
            gamma: PolyMap { basis: self.gamma.basis.clone(), coeffs: c(&self.gamma.coeffs) },
            x_star: self.x_star.map(|v| v.to_f64_lossy()),
            u_star: self.u_star.map(|v| v.to_f64_lossy()),
            report: self.report.clone(),
        }
    }
}

/// `[dpi/dw s(w) - f(pi(w), gamma(w), w); grad_u phi(gamma(w), w)]`.
pub fn invariance_residual<T: Real>(
    problem: &Problem<T>,
    sol: &ManifoldSolution<T>,
    w: &DVector<T>,
) -> Result<DVector<T>> {
    let x = sol.pi_at(w);
    let u = sol.gamma_at(w);
    let s = problem.exosystem.vector_field(w);
    let rf = sol.pi_jacobian(w) * s - problem.plant.dynamics(&x, &u, w);
    let rg = problem.gradient(&u, w)?;
    let mut r = DVector::zeros(rf.len() + rg.len());
    r.rows_mut(0, rf.len()).copy_from(&rf);
    r.rows_mut(rf.len(), rg.len()).copy_from(&rg);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{harmonic_exosystem, lq_problem};
    use crate::regulator::solve_static_linear;

    #[test]
    fn exact_linear_maps_have_zero_residual() {
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
        let sol = solve_static_linear(&lq.problem.linearize().unwrap()).unwrap();
        let m = ManifoldSolution::from_linear(&lq.problem, &sol, 1).unwrap();
        for w in [[0.3, -0.9], [1.1, 0.2], [0.0, 0.0]] {
            let r = invariance_residual(&lq.problem, &m, &DVector::from_row_slice(&w)).unwrap();
            assert!(r.norm() <= 1e-12, "{r}");
        }
        assert!(m.report.relative_residual < 1e-12);
        assert_eq!(m.report.termination, Termination::Exact);
    }

    #[test]
    fn origin_is_anchored() {
        let lq = lq_problem(mat![-2.0], mat![1.0], mat![1.0, 0.0], mat![1.0], mat![0.0, 0.0], 0.5, harmonic_exosystem(&[2.0], &[1.0]).unwrap())
            .unwrap();
        let mut m = ManifoldSolution::from_linear(&lq.problem, &solve_static_linear(&lq.problem.linearize().unwrap()).unwrap(), 0)
            .unwrap();
        m.pi = PolyMap::zeros(2, 1, 3);
        m.pi.coeffs.fill(0.7);
        let r = invariance_residual(&lq.problem, &m, &DVector::zeros(2)).unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn termination_tags_round_trip() {
        for t in [
            Termination::Exact,
            Termination::ZeroResidual,
            Termination::Gradient,
            Termination::Step,
            Termination::Stalled,
            Termination::IterationCap,
            Termination::Domain,
        ] {
            assert_eq!(Termination::parse(t.as_str()), Some(t));
        }
    }
}
