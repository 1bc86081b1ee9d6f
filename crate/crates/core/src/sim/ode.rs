use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Step control for [`integrate_ode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSpec {
    /// Classical fixed-step RK4.
    Fixed { dt: f64 },
    /// Dormand-Prince 5(4) with error control; steps are clipped so that
    /// every recording instant `k * record_dt` is hit exactly.
    Adaptive { abs_tol: f64, rel_tol: f64, record_dt: f64 },
}

impl StepSpec {
    pub fn fixed(dt: f64) -> Self {
        StepSpec::Fixed { dt }
    }

    pub fn adaptive(record_dt: f64) -> Self {
        StepSpec::Adaptive { abs_tol: 1e-10, rel_tol: 1e-8, record_dt }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSpec::Fixed { .. } => "rk4",
            StepSpec::Adaptive { .. } => "dopri5",
        }
    }

    /// Fixed step, or the recording interval for the adaptive scheme.
    pub fn nominal_step(&self) -> f64 {
        match *self {
            StepSpec::Fixed { dt } => dt,
            StepSpec::Adaptive { record_dt, .. } => record_dt,
        }
    }
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Fixed { dt: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub horizon: f64,
    pub step: StepSpec,
    /// Fixed-step runs keep every `record_every`-th step (and the last).
    pub record_every: usize,
    pub divergence_bound: f64,
}

impl OdeOptions {
    pub fn new(horizon: f64, step: StepSpec) -> Self {
        OdeOptions { horizon, step, record_every: 10, divergence_bound: 1e6 }
    }
}

/// Recorded samples; `diverged` is set when integration stopped early.
#[derive(Debug, Clone)]
pub struct OdeSolution<T: Real> {
    pub t: Vec<T>,
    pub y: Vec<DVector<T>>,
    pub steps: usize,
    pub rejected: usize,
    pub diverged: bool,
}

fn axpy<T: Real>(y: &DVector<T>, h: T, k: &[(&DVector<T>, f64)]) -> DVector<T> {
    let mut out = y.clone();
    for (v, c) in k {
        if *c != 0.0 {
            out.axpy(h * T::lit(*c), v, T::one());
        }
    }
    out
}

/// One classical RK4 step.
pub fn rk4_step<T: Real, F>(f: &F, t: T, y: &DVector<T>, h: T) -> Result<DVector<T>>
where
    F: Fn(T, &DVector<T>) -> Result<DVector<T>>,
{
    let half = T::lit(0.5);
    let k1 = f(t, y)?;
    let k2 = f(t + half * h, &axpy(y, h, &[(&k1, 0.5)]))?;
    let k3 = f(t + half * h, &axpy(y, h, &[(&k2, 0.5)]))?;
    let k4 = f(t + h, &axpy(y, h, &[(&k3, 1.0)]))?;
    Ok(axpy(y, h, &[(&k1, 1.0 / 6.0), (&k2, 1.0 / 3.0), (&k3, 1.0 / 3.0), (&k4, 1.0 / 6.0)]))
}

fn escaped<T: Real>(y: &DVector<T>, bound: f64) -> bool {
    let n = y.norm().to_f64_lossy();
    !n.is_finite() || n > bound
}

fn validate(opts: &OdeOptions) -> Result<()> {
    let ok = opts.horizon >= 0.0
        && opts.horizon.is_finite()
        && opts.record_every > 0
        && match opts.step {
            StepSpec::Fixed { dt } => dt > 0.0 && dt.is_finite(),
            StepSpec::Adaptive { abs_tol, rel_tol, record_dt } => abs_tol > 0.0 && rel_tol > 0.0 && record_dt > 0.0,
        };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("invalid integration options {opts:?}")))
    }
}

/// Integrates `y' = f(t, y)` from `t = 0`.
pub fn integrate_ode<T: Real, F>(f: F, y0: &DVector<T>, opts: &OdeOptions) -> Result<OdeSolution<T>>
where
    F: Fn(T, &DVector<T>) -> Result<DVector<T>>,
{
    validate(opts)?;
    match opts.step {
        StepSpec::Fixed { dt } => fixed(&f, y0, opts, dt),
        StepSpec::Adaptive { abs_tol, rel_tol, record_dt } => dopri5(&f, y0, opts, abs_tol, rel_tol, record_dt),
    }
}

fn fixed<T: Real, F>(f: &F, y0: &DVector<T>, opts: &OdeOptions, dt: f64) -> Result<OdeSolution<T>>
where
    F: Fn(T, &DVector<T>) -> Result<DVector<T>>,
{
    let n = (opts.horizon / dt).round() as usize;
    let h = T::lit(dt);
    let mut sol = OdeSolution { t: vec![T::zero()], y: vec![y0.clone()], steps: 0, rejected: 0, diverged: false };
    let mut y = y0.clone();
    for k in 0..n {
        y = rk4_step(f, T::lit(k as f64 * dt), &y, h)?;
        sol.steps += 1;
        let t = T::lit((k + 1) as f64 * dt);
        if escaped(&y, opts.divergence_bound) {
            sol.t.push(t);
            sol.y.push(y);
            sol.diverged = true;
            return Ok(sol);
        }
        if (k + 1) % opts.record_every == 0 || k + 1 == n {
            sol.t.push(t);
            sol.y.push(y.clone());
        }
    }
    Ok(sol)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dopri5<T: Real, F>(f: &F, y0: &DVector<T>, opts: &OdeOptions, atol: f64, rtol: f64, record_dt: f64) -> Result<OdeSolution<T>>
where
    F: Fn(T, &DVector<T>) -> Result<DVector<T>>,
{
    let mut sol = OdeSolution { t: vec![T::zero()], y: vec![y0.clone()], steps: 0, rejected: 0, diverged: false };
    let n_rec = (opts.horizon / record_dt).round() as usize;
    let mut y = y0.clone();
    let mut t = 0.0f64;
    let mut k1 = f(T::zero(), &y)?;
    let mut h = (record_dt * 0.1).min(1e-3).max(1e-12);
    for r in 1..=n_rec {
        let t_next = r as f64 * record_dt;
        while t < t_next {
            let last = t + h >= t_next * (1.0 - 1e-14);
            let hs = if last { t_next - t } else { h };
            let ht = T::lit(hs);
            let mut k: Vec<DVector<T>> = Vec::with_capacity(7);
            k.push(k1.clone());
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate() {
                    if A[s][j] != 0.0 {
                        ys.axpy(ht * T::lit(A[s][j]), kj, T::one());
                    }
                }
                k.push(f(T::lit(t + C[s] * hs), &ys)?);
            }
            let y5 = axpy(&y, ht, &[(&k[0], A[6][0]), (&k[2], A[6][2]), (&k[3], A[6][3]), (&k[4], A[6][4]), (&k[5], A[6][5])]);
            let mut err = DVector::<T>::zeros(y.len());
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    err.axpy(ht * T::lit(E[j]), kj, T::one());
                }
            }
            let mut acc = 0.0;
            for i in 0..y.len() {
                let sc = atol + rtol * y[i].to_f64_lossy().abs().max(y5[i].to_f64_lossy().abs());
                acc += (err[i].to_f64_lossy() / sc).powi(2);
            }
            let en = if y.is_empty() { 0.0 } else { (acc / y.len() as f64).sqrt() };
            if !en.is_finite() {
                h = hs * 0.2;
                sol.rejected += 1;
                if h < 1e-14 {
                    return Err(Error::numerical("adaptive step size underflow"));
                }
                continue;
            }
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if en <= 1.0 {
                t = if last { t_next } else { t + hs };
                y = y5;
                k1 = k.pop().expect("seven stages");
                sol.steps += 1;
                if escaped(&y, opts.divergence_bound) {
                    sol.t.push(T::lit(t));
                    sol.y.push(y);
                    sol.diverged = true;
                    return Ok(sol);
                }
                // a clipped final step says nothing about the next one
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                sol.rejected += 1;
                h = hs * fac.min(1.0);
                if h < 1e-14 {
                    return Err(Error::numerical("adaptive step size underflow"));
                }
            }
        }
        sol.t.push(T::lit(t_next));
        sol.y.push(y.clone());
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![y[1], -y[0]]))
    }

    #[test]
    fn fixed_grid_and_decimation() {
        let s = integrate_ode(harmonic, &DVector::from_vec(vec![1.0, 0.0]), &OdeOptions::new(1.0, StepSpec::fixed(0.01))).unwrap();
        assert_eq!(s.steps, 100);
        assert_eq!(s.t.len(), 11);
        assert!(s.t.windows(2).all(|w| w[1] > w[0]));
        assert!((s.t[10] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rk4_fourth_order() {
        let exact = |t: f64| (-t).exp();
        let f = |_t: f64, y: &DVector<f64>| Ok(-y);
        let err = |dt: f64| {
            let s = integrate_ode(f, &DVector::from_element(1, 1.0), &OdeOptions::new(2.0, StepSpec::fixed(dt))).unwrap();
            (s.y.last().unwrap()[0] - exact(2.0)).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn adaptive_hits_tolerance_and_grid() {
        let s = integrate_ode(harmonic, &DVector::from_vec(vec![1.0, 0.0]), &OdeOptions::new(10.0, StepSpec::adaptive(0.5))).unwrap();
        assert_eq!(s.t.len(), 21);
        let y = s.y.last().unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-7 && (y[1] + 10f64.sin()).abs() < 1e-7);
        assert!(s.steps < 2000);
    }

    #[test]
    fn divergence_stops_early() {
        let f = |_t: f64, y: &DVector<f64>| Ok(y * 10.0);
        let mut o = OdeOptions::new(10.0, StepSpec::fixed(1e-2));
        o.divergence_bound = 1e3;
        let s = integrate_ode(f, &DVector::from_element(1, 1.0), &o).unwrap();
        assert!(s.diverged);
        assert!(s.t.last().unwrap() < &1.0);
    }

    #[test]
    fn rejects_bad_step() {
        let o = OdeOptions::new(1.0, StepSpec::fixed(0.0));
        assert!(integrate_ode(harmonic, &DVector::from_vec(vec![1.0, 0.0]), &o).is_err());
    }
}
