use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::basis::{MonomialBasis, PolyMap};
use crate::manifold::halton::Halton;
use crate::manifold::{FitReport, ManifoldSolution, Termination};
use crate::problem::{Problem, SamplingRegion};
use crate::regulator::solve_static_linear;
use crate::scalar::Real;

pub(crate) const DEFAULT_VALIDATION: usize = 400;
const CHUNK: usize = 256;
/// Irrational time step for trajectory samples.
const TRAJ_DT: f64 = 0.754_877_666_246_692_7;

/// Where and how densely to collocate.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSpec<T: Real> {
    /// Region points; default `50 * (number of coefficients)`.
    pub count: Option<usize>,
    /// Extra exosystem-trajectory points as a fraction of `count`.
    pub trajectory_fraction: f64,
    pub validation_count: usize,
    /// Defaults to the exosystem's region.
    pub region: Option<SamplingRegion<T>>,
}

impl<T: Real> Default for CollocationSpec<T> {
    fn default() -> Self {
        CollocationSpec { count: None, trajectory_fraction: 0.1, validation_count: DEFAULT_VALIDATION, region: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<T: Real> {
    pub degree_pi: usize,
    pub degree_gamma: usize,
    pub collocation: CollocationSpec<T>,
    pub seed: u64,
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Validation residual above which an unconverged fit is a `FitFailure`.
    pub failure_threshold: f64,
    /// Start from the linear regulator solution when it exists.
    pub linear_init: bool,
}

impl<T: Real> FitOptions<T> {
    pub fn new(degree_pi: usize, degree_gamma: usize) -> Self {
        FitOptions {
            degree_pi,
            degree_gamma,
            collocation: CollocationSpec::default(),
            seed: 0,
            max_iterations: 100,
            gradient_tol: 1e-12,
            step_tol: 1e-14,
            failure_threshold: 1e-3,
            linear_init: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn halton_points<T: Real>(region: &SamplingRegion<T>, start: u64, count: usize, seed: u64) -> (Vec<DVector<T>>, u64) {
    let h = Halton::new(region.dim(), seed);
    let mut out = Vec::with_capacity(count);
    let mut i = start;
    // a ball accepts about half the cube at p = 4; the cap only guards degenerate regions
    let cap = start + 1000 + 100 * count as u64;
    while out.len() < count && i < cap {
        if let Some(w) = region.from_unit(&h.point(i)) {
            out.push(w);
        }
        i += 1;
    }
    (out, i)
}

/// Validation sample: Halton indices after the first `skip` training indices.
pub(crate) fn validation_points<T: Real>(
    problem: &Problem<T>,
    region: &SamplingRegion<T>,
    skip: u64,
    count: usize,
    seed: u64,
) -> Vec<DVector<T>> {
    let _ = problem;
    halton_points(region, skip + 1, count, seed).0
}

fn trajectory_points<T: Real>(problem: &Problem<T>, region: &SamplingRegion<T>, count: usize) -> Vec<DVector<T>> {
    let exo = &problem.exosystem;
    let w0 = exo.initial.clone();
    let dt = T::lit(TRAJ_DT);
    let mut out = Vec::with_capacity(count);
    if exo.closed_form(T::zero(), &w0).is_some() {
        for k in 0..count {
            let w = exo.closed_form(dt * T::lit(k as f64), &w0).expect("closed form");
            if region.contains(&w) {
                out.push(w);
            }
        }
    } else {
        let sub = 75usize;
        let h = dt / T::lit(sub as f64);
        let mut w = w0;
        for _ in 0..count {
            if region.contains(&w) {
                out.push(w.clone());
            }
            for _ in 0..sub {
                let k1 = exo.vector_field(&w);
                let k2 = exo.vector_field(&(&w + &k1 * (h * T::lit(0.5))));
                let k3 = exo.vector_field(&(&w + &k2 * (h * T::lit(0.5))));
                let k4 = exo.vector_field(&(&w + &k3 * h));
                w += (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (h / T::lit(6.0));
            }
        }
    }
    out
}

pub(crate) struct Measure {
    pub relative: f64,
    pub per_equation: Vec<f64>,
    pub domain_failures: usize,
}

/// Unweighted residual statistics over `pts`.
pub(crate) fn measure<T: Real>(problem: &Problem<T>, sol: &ManifoldSolution<T>, pts: &[DVector<T>]) -> Measure {
    let d = problem.dims();
    let rows: Vec<Option<(Vec<f64>, f64)>> = pts
        .par_iter()
        .map(|w| {
            let x = sol.pi_at(w);
            let u = sol.gamma_at(w);
            let f = problem.plant.dynamics(&x, &u, w);
            let g = problem.gradient(&u, w).ok()?;
            let rf = sol.pi_jacobian(w) * problem.exosystem.vector_field(w) - &f;
            let r: Vec<f64> = rf.iter().chain(g.iter()).map(|v| v.to_f64_lossy()).collect();
            let scale = (f.norm_squared() + g.norm_squared()).to_f64_lossy();
            if r.iter().all(|v| v.is_finite()) && scale.is_finite() {
                Some((r, scale))
            } else {
                None
            }
        })
        .collect();
    let mut per = vec![0.0; d.n + d.m];
    let (mut sum_r, mut sum_s, mut ok, mut bad) = (0.0, 0.0, 0usize, 0usize);
    for row in &rows {
        match row {
            Some((r, s)) => {
                for (acc, v) in per.iter_mut().zip(r) {
                    *acc += v * v;
                }
                sum_r += r.iter().map(|v| v * v).sum::<f64>();
                sum_s += s;
                ok += 1;
            }
            None => bad += 1,
        }
    }
    if ok == 0 {
        return Measure { relative: f64::INFINITY, per_equation: vec![f64::INFINITY; d.n + d.m], domain_failures: bad };
    }
    let nf = ok as f64;
    let relative = if bad > 0 { f64::INFINITY } else { (sum_r / nf).sqrt() / (1.0 + (sum_s / nf).sqrt()) };
    Measure { relative, per_equation: per.iter().map(|v| (v / nf).sqrt()).collect(), domain_failures: bad }
}

struct Layout {
    n: usize,
    m: usize,
    bpi: MonomialBasis,
    bga: MonomialBasis,
}

impl Layout {
    fn n_pi(&self) -> usize {
        self.n * self.bpi.len()
    }
    fn len(&self) -> usize {
        self.n_pi() + self.m * self.bga.len()
    }
    fn unpack<T: Real>(&self, theta: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let np = self.n_pi();
        (
            DMatrix::from_column_slice(self.n, self.bpi.len(), &theta.as_slice()[..np]),
            DMatrix::from_column_slice(self.m, self.bga.len(), &theta.as_slice()[np..]),
        )
    }
    fn pack<T: Real>(&self, cpi: &DMatrix<T>, cga: &DMatrix<T>) -> DVector<T> {
        DVector::from_iterator(self.len(), cpi.iter().chain(cga.iter()).copied())
    }
}

struct Ctx<'a, T: Real> {
    problem: &'a Problem<T>,
    lay: &'a Layout,
    x_star: &'a DVector<T>,
    u_star: &'a DVector<T>,
    wf: T,
    wg: T,
}

impl<T: Real> Ctx<'_, T> {
    /// Weighted residual rows of one point and, optionally, their Jacobian.
    fn point(
        &self,
        cpi: &DMatrix<T>,
        cga: &DMatrix<T>,
        w: &DVector<T>,
        jac: Option<&mut nalgebra::DMatrixViewMut<'_, T>>,
        res: &mut nalgebra::DVectorViewMut<'_, T>,
    ) -> Result<()> {
        let (n, m) = (self.lay.n, self.lay.m);
        let (tp, jtp) = self.lay.bpi.eval_with_jacobian(w);
        let tg = self.lay.bga.eval(w);
        let x = self.x_star + cpi * &tp;
        let u = self.u_star + cga * &tg;
        let s = self.problem.exosystem.vector_field(w);
        let ds = &jtp * &s;
        let f = self.problem.plant.dynamics(&x, &u, w);
        let g = self.problem.gradient(&u, w)?;
        let rf = cpi * &ds - f;
        for i in 0..n {
            res[i] = rf[i] * self.wf;
        }
        for j in 0..m {
            res[n + j] = g[j] * self.wg;
        }
        if let Some(jm) = jac {
            let pj = self.problem.plant.jacobians(&x, &u, w);
            let hu = self.problem.objective.gradient_jacobian_u(&u, w)?;
            let np = self.lay.n_pi();
            for k in 0..self.lay.bpi.len() {
                let c0 = k * n;
                for i in 0..n {
                    for r in 0..n {
                        let mut v = -pj.fx[(r, i)] * tp[k];
                        if r == i {
                            v += ds[k];
                        }
                        jm[(r, c0 + i)] = v * self.wf;
                    }
                }
            }
            for k in 0..self.lay.bga.len() {
                let c0 = np + k * m;
                for j in 0..m {
                    for r in 0..n {
                        jm[(r, c0 + j)] = -pj.fu[(r, j)] * tg[k] * self.wf;
                    }
                    for r in 0..m {
                        jm[(n + r, c0 + j)] = hu[(r, j)] * tg[k] * self.wg;
                    }
                }
            }
        }
        Ok(())
    }

    fn cost(&self, theta: &DVector<T>, pts: &[DVector<T>]) -> Option<T> {
        let (cpi, cga) = self.lay.unpack(theta);
        let rows = self.lay.n + self.lay.m;
        let parts: Vec<Option<T>> = pts
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut r = DVector::zeros(rows * chunk.len());
                for (i, w) in chunk.iter().enumerate() {
                    let mut view = r.rows_mut(i * rows, rows);
                    self.point(&cpi, &cga, w, None, &mut view).ok()?;
                }
                let c = r.norm_squared() * T::lit(0.5);
                c.is_finite_val().then_some(c)
            })
            .collect();
        parts.into_iter().try_fold(T::zero(), |a, c| c.map(|c| a + c))
    }

    /// `(J'J, J'r, cost)` accumulated chunk by chunk in a fixed order.
    fn normal_equations(&self, theta: &DVector<T>, pts: &[DVector<T>]) -> Result<(DMatrix<T>, DVector<T>, T)> {
        let (cpi, cga) = self.lay.unpack(theta);
        let rows = self.lay.n + self.lay.m;
        let nt = self.lay.len();
        let parts: Vec<Result<(DMatrix<T>, DVector<T>, T)>> = pts
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut jm = DMatrix::zeros(rows * chunk.len(), nt);
                let mut r = DVector::zeros(rows * chunk.len());
                for (i, w) in chunk.iter().enumerate() {
                    let mut jv = jm.rows_mut(i * rows, rows);
                    let mut rv = r.rows_mut(i * rows, rows);
                    self.point(&cpi, &cga, w, Some(&mut jv), &mut rv)?;
                }
                Ok((jm.tr_mul(&jm), jm.tr_mul(&r), r.norm_squared() * T::lit(0.5)))
            })
            .collect();
        let mut jtj = DMatrix::zeros(nt, nt);
        let mut jtr = DVector::zeros(nt);
        let mut cost = T::zero();
        for p in parts {
            let (a, b, c) = p?;
            jtj += a;
            jtr += b;
            cost += c;
        }
        if !cost.is_finite_val() {
            return Err(Error::domain("non-finite residual"));
        }
        Ok((jtj, jtr, cost))
    }
}

fn solve_damped<T: Real>(jtj: &DMatrix<T>, d2: &DVector<T>, mu: T, rhs: &DVector<T>) -> Option<DVector<T>> {
    let mut m = jtj.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += mu * d2[i];
    }
    match Cholesky::new(m.clone()) {
        Some(ch) => Some(ch.solve(rhs)),
        None => m.lu().solve(rhs),
    }
    .filter(|x| x.iter().all(|v| v.is_finite_val()))
}

fn rms<T: Real>(vals: impl Iterator<Item = T>) -> T {
    let (mut s, mut k) = (T::zero(), 0usize);
    for v in vals {
        s += v * v;
        k += 1;
    }
    if k == 0 {
        T::zero()
    } else {
        (s / T::lit(k as f64)).sqrt()
    }
}

/// Collocation least squares for the invariance equations, damped
/// Gauss-Newton (Levenberg-Marquardt with column scaling).
pub fn fit_manifold<T: Real>(problem: &Problem<T>, opts: &FitOptions<T>) -> Result<ManifoldSolution<T>> {
    if opts.degree_pi == 0 || opts.degree_gamma == 0 {
        return Err(Error::invalid("fit_manifold: degrees must be at least 1"));
    }
    let d = problem.dims();
    let eq = problem.equilibrium();
    let lay = Layout { n: d.n, m: d.m, bpi: MonomialBasis::new(d.p, opts.degree_pi), bga: MonomialBasis::new(d.p, opts.degree_gamma) };
    let region = opts.collocation.region.clone().unwrap_or_else(|| problem.exosystem.region.clone());
    if region.dim() != d.p {
        return Err(Error::invalid("collocation region dimension mismatch"));
    }
    let mut report = FitReport {
        relative_residual: 0.0,
        training_relative_residual: 0.0,
        per_equation: vec![0.0; d.n + d.m],
        collocation_count: 0,
        validation_count: 0,
        domain_failures: 0,
        iterations: 0,
        termination: Termination::ZeroResidual,
        seed: opts.seed,
    };
    let mut sol = ManifoldSolution {
        pi: PolyMap::zeros(d.p, d.n, opts.degree_pi),
        gamma: PolyMap::zeros(d.p, d.m, opts.degree_gamma),
        x_star: eq.x.clone(),
        u_star: eq.u.clone(),
        report: report.clone(),
    };
    if d.p == 0 {
        return Ok(sol);
    }

    let lin = problem.linearize()?;
    if opts.linear_init {
        match solve_static_linear(&lin) {
            Ok(ls) => {
                sol.pi.coeffs.columns_mut(0, d.p).copy_from(&ls.pi);
                sol.gamma.coeffs.columns_mut(0, d.p).copy_from(&ls.gamma);
            }
            Err(Error::NoSolution(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let count = opts.collocation.count.unwrap_or(50 * lay.len()).max(lay.len());
    let (mut train, next) = halton_points(&region, 1, count, opts.seed);
    let n_traj = (opts.collocation.trajectory_fraction.max(0.0) * count as f64).round() as usize;
    train.extend(trajectory_points(problem, &region, n_traj));
    let valid = halton_points(&region, next, opts.collocation.validation_count, opts.seed).0;
    report.collocation_count = train.len();
    report.validation_count = valid.len();

    // row weights: RMS of the linearized disturbance forcing of each block
    let wf_scale = rms(train.iter().map(|w| (&lin.p * w).norm()));
    let wg_scale = rms(train.iter().map(|w| (&lin.t * w).norm()));
    let inv = |s: T| if s > T::zero() { T::one() / s } else { T::one() };
    let ctx = Ctx { problem, lay: &lay, x_star: &eq.x, u_star: &eq.u, wf: inv(wf_scale), wg: inv(wg_scale) };

    let mut theta = lay.pack(&sol.pi.coeffs, &sol.gamma.coeffs);
    let rows_total = T::lit(((d.n + d.m) * train.len()) as f64);
    let finish = |theta: &DVector<T>, mut report: FitReport, sol: &mut ManifoldSolution<T>| {
        let (cpi, cga) = lay.unpack(theta);
        sol.pi.coeffs = cpi;
        sol.gamma.coeffs = cga;
        let tr = measure(problem, sol, &train);
        let va = measure(problem, sol, &valid);
        report.training_relative_residual = tr.relative;
        report.relative_residual = va.relative;
        report.per_equation = va.per_equation;
        report.domain_failures = va.domain_failures;
        sol.report = report;
    };

    let (mut jtj, mut jtr, mut cost) = match ctx.normal_equations(&theta, &train) {
        Ok(v) => v,
        Err(Error::Domain(_)) | Err(Error::NumericalFailure(_)) => {
            report.termination = Termination::Domain;
            finish(&theta, report, &mut sol);
            return Err(Error::FitFailure(Box::new(sol.to_f64())));
        }
        Err(e) => return Err(e),
    };
    let nt = lay.len();
    let mut d2 = DVector::from_fn(nt, |i, _| jtj[(i, i)]);
    let dmax = d2.iter().copied().fold(T::zero(), |a, b| a.max(b));
    for v in d2.iter_mut() {
        if *v <= dmax * T::lit(1e-24) {
            *v = if dmax > T::zero() { dmax * T::lit(1e-24) } else { T::one() };
        }
    }
    let mut mu = T::lit(1e-3);
    let mut nu = T::lit(2.0);
    let mut slow = 0usize;
    let gtol = T::lit(opts.gradient_tol);
    let xtol = T::lit(opts.step_tol);
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let rnorm = (cost * T::lit(2.0)).sqrt();
        if rnorm <= T::lit(1e-15) * rows_total.sqrt() {
            termination = Termination::ZeroResidual;
            break;
        }
        let ginf = (0..nt).map(|i| jtr[i].abs() / d2[i].sqrt()).fold(T::zero(), |a, b| a.max(b));
        if ginf <= gtol * rnorm {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let Some(delta) = solve_damped(&jtj, &d2, mu, &(-&jtr)) else {
            mu *= nu;
            nu *= T::lit(2.0);
            continue;
        };
        let dnorm = delta.iter().zip(d2.iter()).map(|(x, s)| *x * *x * *s).fold(T::zero(), |a, b| a + b).sqrt();
        let tnorm = theta.iter().zip(d2.iter()).map(|(x, s)| *x * *x * *s).fold(T::zero(), |a, b| a + b).sqrt();
        if dnorm <= xtol * (tnorm + xtol) {
            termination = Termination::Step;
            break;
        }
        let cand = &theta + &delta;
        let pred = -delta.dot(&jtr) - delta.dot(&(&jtj * &delta)) * T::lit(0.5);
        let new_cost = ctx.cost(&cand, &train);
        let accepted = match new_cost {
            Some(c) if c < cost && pred > T::zero() => {
                let rho = (cost - c) / pred;
                let decrease = (cost - c) / cost;
                match ctx.normal_equations(&cand, &train) {
                    Ok((a, b, c2)) => {
                        theta = cand;
                        jtj = a;
                        jtr = b;
                        cost = c2;
                        for i in 0..nt {
                            d2[i] = d2[i].max(jtj[(i, i)]);
                        }
                        let t = T::lit(2.0) * rho - T::one();
                        mu *= T::lit(1.0 / 3.0).max(T::one() - t * t * t);
                        nu = T::lit(2.0);
                        slow = if decrease < T::lit(1e-12) { slow + 1 } else { 0 };
                        true
                    }
                    Err(_) => false,
                }
            }
            _ => false,
        };
        if !accepted {
            mu *= nu;
            nu *= T::lit(2.0);
            if mu > T::lit(1e16) {
                termination = Termination::Stalled;
                break;
            }
        } else if slow >= 3 {
            termination = Termination::Stalled;
            break;
        }
    }
    report.iterations = iterations;
    report.termination = termination;
    finish(&theta, report, &mut sol);
    let bad = !sol.report.relative_residual.is_finite() || sol.report.relative_residual > opts.failure_threshold;
    if bad && termination == Termination::IterationCap {
        return Err(Error::FitFailure(Box::new(sol.to_f64())));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::invariance_residual;
    use crate::problem::{
        harmonic_exosystem, lq_problem, pendulum_problem, PendulumBranch, PendulumLoss, PendulumParams,
    };

    fn lq() -> crate::problem::LqProblem<f64> {
        lq_problem(
            mat![-1.0, 0.5; 0.0, -2.0],
            mat![1.0; 1.0],
            mat![1.0, 0.0, 0.2, 0.0; 0.5, 0.0, 0.0, 0.1],
            mat![1.0, 0.0; 0.0, 1.0],
            mat![0.0, 0.0, 0.0, 0.0; 0.0, 0.0, 0.0, 0.0],
            0.1,
            harmonic_exosystem(&[1.0, 3.0], &[1.0, 0.5]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn linear_problem_recovers_regulator_solution() {
        let lq = lq();
        let exact = solve_static_linear(&lq.problem.linearize().unwrap()).unwrap();
        let mut o = FitOptions::new(1, 1);
        o.linear_init = false;
        let sol = fit_manifold(&lq.problem, &o).unwrap();
        assert!((sol.pi.block(1) - &exact.pi).norm() < 1e-10, "{}", sol.pi.block(1));
        assert!((sol.gamma.block(1) - &exact.gamma).norm() < 1e-10);
    }

    #[test]
    fn linear_problem_higher_blocks_vanish() {
        let lq = lq();
        let mut o = FitOptions::new(3, 2);
        o.linear_init = false;
        o.collocation.count = Some(2000);
        let sol = fit_manifold(&lq.problem, &o).unwrap();
        assert!(sol.pi.block(2).norm() <= 1e-8 && sol.pi.block(3).norm() <= 1e-8);
        assert!(sol.gamma.block(2).norm() <= 1e-8);
        assert!(sol.report.relative_residual < 1e-10);
    }

    #[test]
    fn pendulum_quadratic_fit() {
        let exo = harmonic_exosystem(&[1.0, 10.0], &[1.0, 0.5]).unwrap();
        let prob = pendulum_problem(PendulumParams::reference(), PendulumLoss::Quadratic, exo, PendulumBranch::ContinuousAtOrigin)
            .unwrap();
        let mut o = FitOptions::new(2, 2);
        o.collocation.count = Some(1500);
        let sol = fit_manifold(&prob, &o).unwrap();
        assert!(sol.report.relative_residual < 1e-8, "{:?}", sol.report);
        let w = DVector::from_vec(vec![0.4, -0.3, 0.2, 1.0]);
        assert!(invariance_residual(&prob, &sol, &w).unwrap().norm() < 1e-6);
    }

    #[test]
    fn validation_disjoint_from_training() {
        let lq = lq();
        let region = lq.problem.exosystem.region.clone();
        let (train, next) = halton_points(&region, 1, 100, 5);
        let valid = halton_points(&region, next, 50, 5).0;
        for v in &valid {
            assert!(train.iter().all(|t| t != v));
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let lq = lq();
        let mut o = FitOptions::new(2, 2).with_seed(11);
        o.linear_init = false;
        let a = fit_manifold(&lq.problem, &o).unwrap();
        let b = fit_manifold(&lq.problem, &o).unwrap();
        assert_eq!(a, b);
    }
}
