use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::eigendecompose;
use crate::problem::{central_jacobian, default_fd_step};
use crate::scalar::Real;
use crate::sim::{integrate_ode, ClosedLoop, OdeOptions, StepSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityOptions {
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    /// When `None`: starts at `15 / |max Re eig|` and grows until the linear
    /// propagator `|exp(J h)|` is below `shrink / 10`, capped at 200.
    pub horizon: Option<f64>,
    pub dt: f64,
    /// A trial decays when its final deviation is below `shrink * epsilon`.
    pub shrink: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { epsilon: 0.05, trials: 16, seed: 0, horizon: None, dt: 1e-3, shrink: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTrial {
    pub index: usize,
    pub initial: f64,
    pub last: f64,
    /// `ln(initial / last) / horizon`.
    pub rate: f64,
    pub diverged: bool,
    pub decayed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Spectrum of the Jacobian in `(x, z)` at the equilibrium with `w = 0`.
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real: f64,
    pub hurwitz: bool,
    pub horizon: f64,
    pub trials: Vec<StabilityTrial>,
    pub all_decayed: bool,
}

/// Non-normal loops can amplify a perturbation by orders of magnitude before
/// the slowest mode takes over, so the spectral estimate alone is too short.
fn default_horizon(jac: &DMatrix<f64>, max_real: f64, shrink: f64) -> f64 {
    if !(max_real < 0.0) {
        return 10.0;
    }
    let mut h = (15.0 / -max_real).min(200.0);
    while h < 200.0 && !((jac * h).exp().norm() <= 0.1 * shrink) {
        h = (1.5 * h).min(200.0);
    }
    h
}

/// Linearized spectrum plus Monte-Carlo perturbations of size `epsilon`
/// around `(x*, z*)` with `w = 0`. Trials run in parallel and are returned
/// in index order.
pub fn local_stability_check<T: Real>(cl: &ClosedLoop<T>, opts: &StabilityOptions) -> Result<StabilityReport> {
    let eq = cl.equilibrium_state();
    let p = cl.problem.exosystem.dim();
    let k = eq.len() - p;
    let base = eq.rows(0, k).into_owned();
    let reduced = |v: &DVector<T>| -> Result<DVector<T>> {
        let mut s = eq.clone();
        s.rows_mut(0, k).copy_from(v);
        Ok(cl.vector_field(&s)?.rows(0, k).into_owned())
    };
    let jac = central_jacobian(reduced, &base, default_fd_step::<T>())?;
    let spec = eigendecompose(&jac)?;
    let eigenvalues: Vec<Complex<f64>> = spec.eigenvalues.iter().map(|z| Complex::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())).collect();
    let max_real: f64 = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let max_real = if eigenvalues.is_empty() { f64::NEG_INFINITY } else { max_real };
    let horizon = opts.horizon.unwrap_or_else(|| default_horizon(&jac.map(|v| v.to_f64_lossy()), max_real, opts.shrink));
    let ode = OdeOptions { horizon, step: StepSpec::fixed(opts.dt), record_every: usize::MAX, divergence_bound: 1e6 };
    let trials: Vec<StabilityTrial> = (0..opts.trials)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(index as u64));
            let dir: DVector<f64> = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let dir = if dir.norm() > 0.0 { dir.normalize() } else { dir };
            let mut init = eq.clone();
            for i in 0..k {
                init[i] += T::lit(opts.epsilon * dir[i]);
            }
            let initial = (&init - &eq).norm().to_f64_lossy();
            match integrate_ode(|_t, s: &DVector<T>| cl.vector_field(s), &init, &ode) {
                Ok(sol) => {
                    let last = (sol.y.last().expect("final state") - &eq).norm().to_f64_lossy();
                    let decayed = !sol.diverged && last <= opts.shrink * initial;
                    StabilityTrial { index, initial, last, rate: (initial / last).ln() / horizon, diverged: sol.diverged, decayed }
                }
                Err(_) => StabilityTrial { index, initial, last: f64::NAN, rate: f64::NAN, diverged: true, decayed: false },
            }
        })
        .collect();
    let all_decayed = trials.iter().all(|t| t.decayed);
    Ok(StabilityReport { eigenvalues, max_real, hurwitz: spec.is_hurwitz(), horizon, trials, all_decayed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::example5_problem;
    use crate::sim::LoopController;

    #[test]
    fn stable_scalar_loop() {
        let cl = ClosedLoop::new(example5_problem(0.0).unwrap(), LoopController::OutputGain(mat![1.0])).unwrap();
        let r = local_stability_check(&cl, &StabilityOptions { trials: 4, ..Default::default() }).unwrap();
        assert!((r.eigenvalues[0].re + 1.0).abs() < 1e-8);
        assert!(r.hurwitz && r.all_decayed);
        assert!(r.trials.iter().all(|t| (t.rate - 1.0).abs() < 1e-3));
        assert!(r.horizon >= 15.0 && r.horizon < 23.0, "{}", r.horizon);
        assert_eq!(r.trials.iter().map(|t| t.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn horizon_covers_transient_growth() {
        // eigenvalues -1, -1 with a coupling of 1e4
        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 1e4, 0.0, -1.0]);
        let h = default_horizon(&j, -1.0, 1e-3);
        assert!(h > 15.0 && (&j * h).exp().norm() <= 1e-4);
        assert_eq!(default_horizon(&j, 0.5, 1e-3), 10.0);
    }

    #[test]
    fn open_loop_unstable_detected() {
        let cl = ClosedLoop::new(example5_problem(0.0).unwrap(), LoopController::OutputGain(mat![0.0])).unwrap();
        let r = local_stability_check(&cl, &StabilityOptions { trials: 2, ..Default::default() }).unwrap();
        assert!(!r.hurwitz && !r.all_decayed);
        assert!((r.max_real - 1.0).abs() < 1e-8);
    }
}
