use crate::error::{Error, Result};
use crate::manifold::fit::{fit_manifold, FitOptions};
use crate::problem::Problem;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    /// Validation residual below which a degree counts as solving the equations.
    pub tolerance: f64,
    /// Residual ratio between consecutive degrees above which progress has stalled.
    pub plateau_ratio: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { tolerance: 1e-8, plateau_ratio: 0.5, seed: 0, max_iterations: 100 }
    }
}

/// Empirical verdict; a surrogate, not a proof either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeVerdict {
    Solvable { degree: usize },
    Obstructed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// `(degree, validation residual)`; infinite where the fit failed.
    pub residuals: Vec<(usize, f64)>,
    pub verdict: ProbeVerdict,
}

/// Fits degrees `1..=max_degree` until one meets the tolerance, or the
/// residual stops improving over two consecutive degrees.
pub fn solvability_probe<T: Real>(problem: &Problem<T>, max_degree: usize, opts: &ProbeOptions) -> Result<ProbeReport> {
    if problem.exosystem.dim() == 0 {
        return Ok(ProbeReport { residuals: Vec::new(), verdict: ProbeVerdict::Solvable { degree: 0 } });
    }
    let mut residuals = Vec::new();
    let mut stalls = 0;
    for d in 1..=max_degree.max(1) {
        let mut o = FitOptions::new(d, d).with_seed(opts.seed);
        o.max_iterations = opts.max_iterations;
        let r = match fit_manifold(problem, &o) {
            Ok(sol) => sol.report.relative_residual,
            Err(Error::FitFailure(sol)) => sol.report.relative_residual,
            Err(e) => return Err(e),
        };
        let r = if r.is_finite() { r } else { f64::INFINITY };
        if r <= opts.tolerance {
            residuals.push((d, r));
            return Ok(ProbeReport { residuals, verdict: ProbeVerdict::Solvable { degree: d } });
        }
        if let Some(&(_, prev)) = residuals.last() {
            if r >= opts.plateau_ratio * prev {
                stalls += 1;
            } else {
                stalls = 0;
            }
        }
        residuals.push((d, r));
        if stalls >= 2 {
            return Ok(ProbeReport { residuals, verdict: ProbeVerdict::Obstructed });
        }
    }
    Ok(ProbeReport { residuals, verdict: ProbeVerdict::Inconclusive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{harmonic_exosystem, lq_problem, LinearPlant, QuadraticReducedObjective};
    use std::sync::Arc;

    #[test]
    fn lq_solvable_at_degree_one() {
        let lq = lq_problem(mat![-1.0], mat![1.0], mat![1.0, 0.0], mat![1.0], mat![0.0, 1.0], 0.2, harmonic_exosystem(&[1.0], &[1.0]).unwrap())
            .unwrap();
        let rep = solvability_probe(&lq.problem, 3, &ProbeOptions::default()).unwrap();
        assert_eq!(rep.verdict, ProbeVerdict::Solvable { degree: 1 });
    }

    #[test]
    fn inconsistent_gradient_identity_is_obstructed() {
        // R singular with T outside its range: R Gamma = -T has no solution
        let plant = LinearPlant::new(mat![-1.0, 0.0; 0.0, -2.0], mat![1.0, 0.0; 0.0, 1.0], mat![1.0, 0.0; 0.0, 1.0], mat![1.0, 0.0; 0.0, 1.0], mat![0.0, 0.0; 0.0, 0.0])
            .unwrap();
        let obj = QuadraticReducedObjective::new(mat![1.0, 0.0; 0.0, 0.0], mat![0.0, 0.0; 1.0, 0.0], mat![0.0, 0.0; 0.0, 0.0]).unwrap();
        let exo = harmonic_exosystem(&[1.0], &[1.0]).unwrap();
        let prob = crate::problem::Problem::new("inconsistent", Arc::new(plant), exo, Arc::new(obj)).unwrap();
        // rank oracle: T has a component outside range(R)
        let r = mat![1.0, 0.0; 0.0, 0.0];
        let t = mat![0.0, 0.0; 1.0, 0.0];
        let svd = r.clone().svd(true, true);
        let proj = svd.u.as_ref().unwrap().columns(0, 1) * svd.u.as_ref().unwrap().columns(0, 1).transpose();
        assert!((&t - &proj * &t).norm() > 0.5);
        let rep = solvability_probe(&prob, 4, &ProbeOptions::default()).unwrap();
        assert_eq!(rep.verdict, ProbeVerdict::Obstructed, "{rep:?}");
    }
}
