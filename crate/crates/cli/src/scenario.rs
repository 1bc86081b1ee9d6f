//! Scenario files: a TOML description of problem, disturbance, objective,
//! fit, controller and simulation settings.

use std::path::Path;

use feedopt::linalg::PoleTarget;
use feedopt::manifold::FitOptions;
use feedopt::problem::{
    constant_exosystem, example5_problem, harmonic_exosystem, lq_problem, pendulum_problem, Exosystem, PendulumBranch,
    PendulumLoss, PendulumParams,
};
use feedopt::sim::StepSpec;
use feedopt::{Matrix, ProblemF64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Built-in scenarios, shipped as files next to the crate.
pub const BUILTIN: &[(&str, &str)] = &[
    ("lq", include_str!("../scenarios/lq.toml")),
    ("example5", include_str!("../scenarios/example5.toml")),
    ("pendulum-quadratic", include_str!("../scenarios/pendulum-quadratic.toml")),
    ("pendulum-logistic", include_str!("../scenarios/pendulum-logistic.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub problem: ProblemSpec,
    pub exosystem: ExosystemSpec,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub baseline: BaselineSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `x' = A x + B u + P w`, `y = C x + Q w`, loss `1/2 |x|^2 + lambda/2 |u|^2`.
    Lq { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, p: Vec<Vec<f64>>, c: Vec<Vec<f64>>, q: Vec<Vec<f64>> },
    /// Scalar plant `x' = x + u`, `y = -2x + w` with loss `1/2 (u + w)^2`.
    Example5,
    Pendulum {
        l: f64,
        m: f64,
        k: f64,
        g: f64,
        je: f64,
        #[serde(default)]
        branch: Branch,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Piecewise,
    #[default]
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExosystemSpec {
    /// One oscillator per frequency, `w(0) = (a_1, 0, a_2, 0, ...)`.
    Harmonic { frequencies: Vec<f64>, amplitudes: Vec<f64> },
    Constant { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    Logistic { kappa: f64, mu: f64 },
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::Quadratic { lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    pub degree_pi: usize,
    pub degree_gamma: usize,
    /// Region collocation points; the solver's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collocation: Option<usize>,
    pub seed: u64,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec { degree_pi: 4, degree_gamma: 4, collocation: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Observer-based dynamic controller built on the fitted manifold.
    #[default]
    Observer,
    /// Static output feedback `u = D y`.
    OutputGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    /// Interval for the eigenvalues of `A + B K`.
    pub feedback_poles: [f64; 2],
    /// Interval for the eigenvalues of `A_L - L C_L`.
    pub observer_poles: [f64; 2],
    /// `D` for the output-gain controller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec { kind: ControllerKind::Observer, feedback_poles: [-3.0, -2.0], observer_poles: [-2.0, -1.0], gain: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    Rk4,
    Dopri5,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorStart {
    /// `z(0) = (x*, 0)`.
    #[default]
    Zero,
    /// `z(0) = (x*, w(0))`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub horizon: f64,
    /// Fixed step for RK4; recording interval for DOPRI5.
    pub step: f64,
    pub integrator: Integrator,
    pub record_every: usize,
    pub estimator: EstimatorStart,
    /// Added to `x*` at `t = 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0_offset: Option<Vec<f64>>,
    pub tail_fraction: f64,
    pub tolerance: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            horizon: 30.0,
            step: 1e-3,
            integrator: Integrator::Rk4,
            record_every: 10,
            estimator: EstimatorStart::Zero,
            x0_offset: None,
            tail_fraction: 0.2,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub eta: Vec<f64>,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec { eta: vec![0.01, 0.1, 1.0] }
    }
}

/// The parts of a scenario a controller bundle depends on.
#[derive(Serialize)]
struct Design<'a> {
    problem: &'a ProblemSpec,
    exosystem: &'a ExosystemSpec,
    objective: &'a ObjectiveSpec,
    fit: &'a FitSpec,
    controller: &'a ControllerSpec,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Invalid(format!("matrix `{name}` has ragged rows")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Invalid(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// A readable file path, or else the name of a built-in scenario.
    pub fn load(spec: &str) -> Result<Self, CliError> {
        let path = Path::new(spec);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
            return Self::parse(&text);
        }
        match BUILTIN.iter().find(|(name, _)| *name == spec) {
            Some((_, text)) => Self::parse(text),
            None => Err(CliError::Invalid(format!(
                "no scenario file `{spec}` and no built-in of that name (built-ins: {})",
                BUILTIN.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Invalid(format!("scenario `{}`: {m}", self.name)));
        let sim = &self.simulation;
        if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
            return bad("simulation.horizon must be positive");
        }
        if !(sim.step > 0.0 && sim.step < sim.horizon) {
            return bad("simulation.step must be positive and below the horizon");
        }
        if sim.record_every == 0 {
            return bad("simulation.record_every must be at least 1");
        }
        if !(sim.tail_fraction > 0.0 && sim.tail_fraction <= 1.0) {
            return bad("simulation.tail_fraction must lie in (0, 1]");
        }
        if self.fit.degree_pi == 0 || self.fit.degree_gamma == 0 {
            return bad("fit degrees must be at least 1");
        }
        for (what, [a, b]) in [("feedback_poles", self.controller.feedback_poles), ("observer_poles", self.controller.observer_poles)] {
            if !(a < b && b < 0.0) {
                return Err(CliError::Invalid(format!("scenario `{}`: controller.{what} must be an interval [a, b] with a < b < 0", self.name)));
            }
        }
        if self.controller.kind == ControllerKind::OutputGain && self.controller.gain.is_none() {
            return bad("controller.gain is required for the output-gain controller");
        }
        if self.baseline.eta.iter().any(|e| !(*e >= 0.0)) {
            return bad("baseline.eta entries must be non-negative");
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, degree: Option<usize>, horizon: Option<f64>, step: Option<f64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.fit.seed = s;
        }
        if let Some(d) = degree {
            self.fit.degree_pi = d;
            self.fit.degree_gamma = d;
        }
        if let Some(h) = horizon {
            self.simulation.horizon = h;
        }
        if let Some(s) = step {
            self.simulation.step = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 over the design sections (problem, exosystem, objective, fit,
    /// controller). Simulation settings are excluded so a bundle can be
    /// replayed with another horizon or step.
    pub fn hash(&self) -> String {
        let design = Design {
            problem: &self.problem,
            exosystem: &self.exosystem,
            objective: &self.objective,
            fit: &self.fit,
            controller: &self.controller,
        };
        let text = toml::to_string(&design).expect("design serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn build_exosystem(&self) -> Result<Exosystem<f64>, CliError> {
        Ok(match &self.exosystem {
            ExosystemSpec::Harmonic { frequencies, amplitudes } => harmonic_exosystem(frequencies, amplitudes)?,
            ExosystemSpec::Constant { values } => constant_exosystem(values)?,
        })
    }

    pub fn build_problem(&self) -> Result<ProblemF64, CliError> {
        let exo = self.build_exosystem()?;
        let objective_mismatch =
            |what: &str| CliError::Invalid(format!("scenario `{}`: {what} problem does not take this objective", self.name));
        let mut problem = match (&self.problem, &self.objective) {
            (ProblemSpec::Lq { a, b, p, c, q }, ObjectiveSpec::Quadratic { lambda }) => {
                let lambda = lambda.ok_or_else(|| CliError::Invalid("objective.lambda is required for an lq problem".into()))?;
                lq_problem(matrix("a", a)?, matrix("b", b)?, matrix("p", p)?, matrix("c", c)?, matrix("q", q)?, lambda, exo)?.problem
            }
            (ProblemSpec::Lq { .. }, _) => return Err(objective_mismatch("an lq")),
            (ProblemSpec::Example5, ObjectiveSpec::Quadratic { lambda: None }) => {
                let w0 = match exo.initial.as_slice() {
                    [w] => *w,
                    _ => return Err(CliError::Invalid("example5 needs a one-dimensional exosystem".into())),
                };
                let mut p = example5_problem(w0)?;
                p.exosystem = exo;
                p
            }
            (ProblemSpec::Example5, _) => return Err(objective_mismatch("the example5")),
            (ProblemSpec::Pendulum { l, m, k, g, je, branch }, obj) => {
                let params = PendulumParams::new(*l, *m, *k, *g, *je)?;
                let loss = match obj {
                    ObjectiveSpec::Quadratic { lambda: None } => PendulumLoss::Quadratic,
                    ObjectiveSpec::Logistic { kappa, mu } => PendulumLoss::Logistic { kappa: *kappa, mu: *mu },
                    _ => return Err(objective_mismatch("the pendulum")),
                };
                let branch = match branch {
                    Branch::Piecewise => PendulumBranch::Piecewise,
                    Branch::Continuous => PendulumBranch::ContinuousAtOrigin,
                };
                pendulum_problem(params, loss, exo, branch)?
            }
        };
        problem.name = self.name.clone();
        Ok(problem)
    }

    pub fn fit_options(&self) -> FitOptions<f64> {
        let mut o = FitOptions::new(self.fit.degree_pi, self.fit.degree_gamma).with_seed(self.fit.seed);
        o.collocation.count = self.fit.collocation;
        o
    }

    pub fn feedback_target(&self) -> PoleTarget<f64> {
        let [a, b] = self.controller.feedback_poles;
        PoleTarget::interval(a, b)
    }

    pub fn observer_target(&self) -> PoleTarget<f64> {
        let [a, b] = self.controller.observer_poles;
        PoleTarget::interval(a, b)
    }

    pub fn output_gain(&self) -> Result<Matrix, CliError> {
        matrix("controller.gain", self.controller.gain.as_deref().unwrap_or_default())
    }

    pub fn step_spec(&self) -> StepSpec {
        match self.simulation.integrator {
            Integrator::Rk4 => StepSpec::fixed(self.simulation.step),
            Integrator::Dopri5 => StepSpec::adaptive(self.simulation.step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_round_trip() {
        for (name, text) in BUILTIN {
            let s = Scenario::parse(text).unwrap();
            assert_eq!(&s.name, name);
            let back = Scenario::parse(&s.to_toml()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.hash(), s.hash());
            s.build_problem().unwrap();
        }
    }

    #[test]
    fn hash_ignores_simulation_but_not_design() {
        let s = Scenario::load("lq").unwrap();
        let h = s.hash();
        assert_eq!(s.clone().with_overrides(None, None, Some(5.0), Some(1e-2)).unwrap().hash(), h);
        assert_ne!(s.clone().with_overrides(Some(7), None, None, None).unwrap().hash(), h);
        assert_ne!(s.with_overrides(None, Some(2), None, None).unwrap().hash(), h);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = BUILTIN[0].1.replace("[fit]", "[fit]\nbogus = 1");
        assert!(matches!(Scenario::parse(&text), Err(CliError::Invalid(_))));
    }

    #[test]
    fn bad_pole_interval_rejected() {
        let mut s = Scenario::load("lq").unwrap();
        s.controller.observer_poles = [-1.0, -2.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matrix("a", &[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
