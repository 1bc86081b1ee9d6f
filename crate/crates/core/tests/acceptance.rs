//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; tolerances
//! are pinned here.

use std::sync::Arc;
use std::time::{Duration, Instant};

use feedopt::linalg::{
    check_necessary_conditions, eigendecompose, is_stabilizable, is_stabilizable_by_subspaces, place_observer_gain,
    place_state_feedback, PoleTarget,
};
use feedopt::manifold::{fit_manifold, FitOptions, Halton, ManifoldSolution};
use feedopt::problem::random::{random_lq_instance, random_pbh_instance, LqInstanceSpec};
use feedopt::problem::{
    central_jacobian, example5_problem, harmonic_exosystem, lq_problem, pendulum_problem, LqProblem, PendulumBranch,
    PendulumLoss, PendulumParams, Problem,
};
use feedopt::regulator::{assemble_linear_controller, closed_loop_matrix, solve_static_linear};
use feedopt::sim::{metrics, rk4_step, ClosedLoop, LoopController, MetricsOptions, OdeOptions, StepSpec};
use feedopt::synthesis::{baseline_gradient_flow, synthesize_dynamic, verify_internal_model, Gains, SynthesizedController};
use feedopt::{Error, Matrix, Vector};
use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(id: usize, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    println!(
        "criterion {id} [{name}]: {} ({detail}; {:.2} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

fn instances(count: usize, seed: u64) -> Vec<LqProblem<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = LqInstanceSpec::default();
    (0..count).map(|_| random_lq_instance(&spec, &mut rng).expect("instance")).collect()
}

fn pendulum(loss: PendulumLoss<f64>) -> Problem<f64> {
    let exo = harmonic_exosystem(&[1.0, 10.0], &[1.0, 0.5]).unwrap();
    pendulum_problem(PendulumParams::reference(), loss, exo, PendulumBranch::ContinuousAtOrigin).unwrap()
}

fn gains(problem: &Problem<f64>) -> Gains<f64> {
    let lin = problem.linearize().unwrap();
    let k = place_state_feedback(&lin.a, &lin.b, &PoleTarget::interval(-3.0, -2.0)).unwrap();
    let l = place_observer_gain(&lin.a_l(), &lin.c_l(), &PoleTarget::interval(-2.0, -1.0)).unwrap();
    Gains::from_stacked(k, &l, lin.dims().n)
}

/// `x(0) = x*`, `z(0) = (x*, 0)`, `w(0)` from the exosystem.
fn initial_state(cl: &ClosedLoop<f64>) -> Vector {
    let mut s = cl.equilibrium_state();
    let w0 = &cl.problem.exosystem.initial;
    let k = s.len() - w0.len();
    s.rows_mut(k, w0.len()).copy_from(w0);
    s
}

/// Matches each expected eigenvalue to its nearest unused computed one.
fn multiset_gap(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        used[j] = true;
        worst = worst.max(d / (1.0 + x.norm()));
    }
    worst
}

#[test]
fn criterion_1_linear_regulator_exactness() {
    let insts = instances(100, 1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for lq in &insts {
        let lin = lq.problem.linearize().unwrap();
        let sol = solve_static_linear(&lin).unwrap();
        let input = [&lin.a, &lin.b, &lin.p, &lin.s, &lin.r, &lin.t].iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let r1 = (&sol.pi * &lin.s - &lin.a * &sol.pi - &lin.b * &sol.gamma - &lin.p).norm();
        let r2 = (&lin.r * &sol.gamma + &lin.t).norm();
        worst = worst.max(r1.max(r2) / (1.0 + input));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && elapsed < Duration::from_secs(5);
    report(1, "linear regulator exactness", pass, &format!("max scaled residual {worst:.2e} <= 1e-10 over 100 instances"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_2_separation_spectrum() {
    let insts = instances(100, 1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for lq in &insts {
        let lin = lq.problem.linearize().unwrap();
        let sol = solve_static_linear(&lin).unwrap();
        let k = place_state_feedback(&lin.a, &lin.b, &PoleTarget::interval(-3.0, -2.0)).unwrap();
        let l = place_observer_gain(&lin.a_l(), &lin.c_l(), &PoleTarget::interval(-2.0, -1.0)).unwrap();
        let n = lin.dims().n;
        let (l1, l2) = (l.rows(0, n).into_owned(), l.rows(n, l.nrows() - n).into_owned());
        let ctrl = assemble_linear_controller(&lin, &sol.pi, &sol.gamma, &k, &l1, &l2).unwrap();
        let closed = eigendecompose(&closed_loop_matrix(&lin, &ctrl, false).unwrap()).unwrap().eigenvalues;
        let mut expected = eigendecompose(&(&lin.a + &lin.b * &k)).unwrap().eigenvalues;
        expected.extend(eigendecompose(&(lin.a_l() - &l * lin.c_l())).unwrap().eigenvalues);
        worst = worst.max(multiset_gap(&expected, &closed));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8;
    report(2, "separation spectrum", pass, &format!("max eigenvalue mismatch {worst:.2e} <= 1e-8 over 100 instances"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_3_example5() {
    let start = Instant::now();
    let mut worst_g = 0.0f64;
    let mut worst_x = 0.0f64;
    for w in [-1.0f64, -0.5, 0.0, 0.5, 1.0] {
        for x0 in [-1.0f64, 0.0, 2.0] {
            let cl = ClosedLoop::new(example5_problem(w).unwrap(), LoopController::OutputGain(DMatrix::from_element(1, 1, 1.0))).unwrap();
            let tr = cl.integrate(&DVector::<f64>::from_vec(vec![x0, w]), &OdeOptions::new(20.0, StepSpec::fixed(1e-3))).unwrap();
            for (t, x) in tr.t.iter().zip(&tr.x) {
                worst_x = worst_x.max((x[0] - (w + (x0 - w) * (-t).exp())).abs());
            }
            worst_g = worst_g.max(tr.g.last().unwrap().norm());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_g <= 1e-6 && worst_x <= 1e-8 && elapsed < Duration::from_secs(1);
    report(3, "example 5", pass, &format!("|g(20)| max {worst_g:.2e} <= 1e-6, analytic state gap {worst_x:.2e} <= 1e-8"), elapsed);
    assert!(pass);
}

/// Tail figures of one pendulum run.
struct PendulumTail {
    g: f64,
    /// `sup |x - pi(w)|` over the tail.
    state: f64,
    /// `sup |u - gamma(w)|` over the tail.
    input: f64,
}

fn pendulum_tail(cl: &ClosedLoop<f64>, mf: &ManifoldSolution<f64>, init: &Vector) -> Result<PendulumTail, Error> {
    let tr = cl.integrate(init, &OdeOptions::new(30.0, StepSpec::fixed(1e-3)))?;
    let m = metrics(&tr, Some(mf), &MetricsOptions::default());
    let input = (0..tr.len())
        .filter(|&i| tr.t[i] >= m.tail_start)
        .map(|i| (&tr.u[i] - mf.gamma_at(&tr.w[i])).norm())
        .fold(0.0, f64::max);
    Ok(PendulumTail { g: m.tail_sup_g, state: m.state_tail.unwrap_or(f64::NAN), input })
}

/// Fit at `d = 4`, synthesize, and run 30 s from the uninformed start and
/// from the start with the disturbance estimate equal to `w(0)`.
fn pendulum_run(loss: PendulumLoss<f64>) -> Result<(ManifoldSolution<f64>, PendulumTail, PendulumTail), Error> {
    let problem = pendulum(loss);
    let mf = fit_manifold(&problem, &FitOptions::new(4, 4))?;
    let ctrl = synthesize_dynamic(&problem, Arc::new(mf.clone()), gains(&problem))?;
    let cl = ClosedLoop::dynamic(ctrl);
    let init = initial_state(&cl);
    let uninformed = pendulum_tail(&cl, &mf, &init)?;
    let mut informed = init.clone();
    let (n, p) = (problem.dims().n, problem.exosystem.dim());
    informed.rows_mut(2 * n, p).copy_from(&problem.exosystem.initial);
    let informed = pendulum_tail(&cl, &mf, &informed)?;
    Ok((mf, uninformed, informed))
}

fn tail_summary(t: &PendulumTail) -> String {
    format!("tail sup |g| {:.2e}, sup |x - pi(w)| {:.2e}, sup |u - gamma(w)| {:.2e}", t.g, t.state, t.input)
}

#[test]
fn criterion_4_pendulum_quadratic() {
    let start = Instant::now();
    let (mf, tail, informed) = pendulum_run(PendulumLoss::Quadratic).expect("quadratic benchmark");
    let elapsed = start.elapsed();
    let fit = mf.report.relative_residual;
    // a small gradient only certifies regulation while the loop stays near
    // the manifold; far out the steady-state angle saturates and g flattens
    let pass = fit <= 1e-5 && tail.g <= 1e-4 && tail.state <= 1e-2 && elapsed < Duration::from_secs(120);
    let detail = format!(
        "fit residual {fit:.2e} <= 1e-5; z2(0) = 0: {} (need |g| <= 1e-4, |x - pi| <= 1e-2); z2(0) = w(0): {}",
        tail_summary(&tail),
        tail_summary(&informed)
    );
    report(4, "pendulum quadratic", pass, &detail, elapsed);
    assert!(pass, "{detail}");
}

/// Critical input at `w(0)` by bisection, and its distance to the fold of
/// the steady-state map `|u| >= sqrt(eta^2 w1^2 - alpha^2) / gamma`.
fn logistic_critical_point() -> String {
    let pp = PendulumParams::<f64>::reference();
    let problem = pendulum(PendulumLoss::Logistic { kappa: 1.0, mu: 0.5 });
    let w0 = problem.exosystem.initial.clone();
    let fold = ((pp.eta_p() * w0[0]).powi(2) - pp.alpha().powi(2)).max(0.0).sqrt() / pp.gamma_p();
    let g = |u: f64| problem.gradient(&DVector::from_element(1, u), &w0).map(|g| g[0]);
    let (mut lo, mut hi) = (fold + 1e-12, fold + 300.0);
    match (g(lo), g(hi)) {
        (Ok(a), Ok(b)) if a < 0.0 && b > 0.0 => {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                match g(mid) {
                    Ok(v) if v < 0.0 => lo = mid,
                    Ok(_) => hi = mid,
                    Err(_) => lo = mid,
                }
            }
            format!("critical input at w(0) is u = {lo:.6}, only {:.2e} from the domain fold at {fold:.6}", lo - fold)
        }
        _ => "no critical input bracketed at w(0)".to_string(),
    }
}

#[test]
fn criterion_5_pendulum_logistic() {
    let start = Instant::now();
    let out = pendulum_run(PendulumLoss::Logistic { kappa: 1.0, mu: 0.5 });
    let elapsed = start.elapsed();
    let (pass, detail) = match &out {
        Ok((mf, tail, informed)) => (
            tail.g <= 1e-3 && tail.state <= 1e-1 && elapsed < Duration::from_secs(120),
            format!(
                "fit residual {:.2e}; z2(0) = 0: {} (need |g| <= 1e-3); z2(0) = w(0): {}",
                mf.report.relative_residual,
                tail_summary(tail),
                tail_summary(informed)
            ),
        ),
        Err(e) => (false, format!("no controller: {e}; {}", logistic_critical_point())),
    };
    report(5, "pendulum logistic", pass, &detail, elapsed);
    assert!(pass, "{detail}");
}

/// Steady-state amplitude of `g` from the closed-loop frequency response.
fn baseline_oracle_amplitude(lq: &LqProblem<f64>, eta: f64, omega: f64) -> f64 {
    let lin = lq.problem.linearize().unwrap();
    let (n, m) = (lin.dims().n, lin.dims().m);
    // x' = A x + B u + P w, u' = -eta (lambda u + Txu' x) with lambda I = R - Txu' Txu
    let txu = -lin.a.clone().lu().solve(&lin.b).unwrap();
    let a_c = (&lin.r - txu.transpose() * &txu) * (-eta);
    let b_c = txu.transpose() * (-eta);
    let mut acl = DMatrix::<f64>::zeros(n + m, n + m);
    acl.view_mut((0, 0), (n, n)).copy_from(&lin.a);
    acl.view_mut((0, n), (n, m)).copy_from(&lin.b);
    acl.view_mut((n, 0), (m, n)).copy_from(&b_c);
    acl.view_mut((n, n), (m, m)).copy_from(&a_c);
    let mut bw = DMatrix::<f64>::zeros(n + m, lin.dims().p);
    bw.view_mut((0, 0), (n, lin.dims().p)).copy_from(&lin.p);
    let w0 = &lq.problem.exosystem.initial;
    // w(t) = Re(w_hat e^{i omega t}) with S w_hat = i omega w_hat
    let sw0 = &lin.s * w0;
    let w_hat: DVector<Complex<f64>> = DVector::from_fn(w0.len(), |i, _| Complex::new(w0[i], -sw0[i] / omega));
    let lhs: DMatrix<Complex<f64>> = DMatrix::from_fn(n + m, n + m, |i, j| {
        Complex::new(0.0, if i == j { omega } else { 0.0 }) - Complex::new(acl[(i, j)], 0.0)
    });
    let rhs = bw.map(|v| Complex::new(v, 0.0)) * &w_hat;
    let s_hat = lhs.lu().solve(&rhs).unwrap();
    let u_hat = s_hat.rows(n, m).into_owned();
    let g_hat = lin.r.map(|v| Complex::new(v, 0.0)) * u_hat + lin.t.map(|v| Complex::new(v, 0.0)) * &w_hat;
    (0..4000)
        .map(|k| {
            let ph = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 4000.0);
            g_hat.map(|z| (z * ph).re).norm()
        })
        .fold(0.0, f64::max)
}

fn remark_instance() -> LqProblem<f64> {
    lq_problem(
        nalgebra::dmatrix![-1.0, 0.5; 0.0, -2.0],
        nalgebra::dmatrix![1.0; 1.0],
        nalgebra::dmatrix![1.0, 0.0; 0.5, 0.0],
        Matrix::identity(2, 2),
        Matrix::zeros(2, 2),
        0.1,
        harmonic_exosystem(&[1.0], &[1.0]).unwrap(),
    )
    .unwrap()
}

#[test]
fn criterion_6_internal_model_violation() {
    let start = Instant::now();
    let lq = remark_instance();
    let mut ok = true;
    let mut detail = Vec::new();
    for eta in [0.01, 0.1, 1.0] {
        let ctrl = baseline_gradient_flow(&lq.problem, eta).unwrap();
        let cl = ClosedLoop::dynamic(ctrl);
        let tr = cl.integrate(&initial_state(&cl), &OdeOptions::new(400.0, StepSpec::fixed(1e-2))).unwrap();
        let m = metrics(&tr, None, &MetricsOptions { tolerance: 1e-8, ..Default::default() });
        let oracle = baseline_oracle_amplitude(&lq, eta, 1.0);
        ok &= m.tail_sup_g >= 0.1 * oracle && !m.settled;
        detail.push(format!("eta {eta}: tail {:.3e} vs oracle {oracle:.3e}", m.tail_sup_g));
    }
    let lin = lq.problem.linearize().unwrap();
    let mf = ManifoldSolution::from_linear(&lq.problem, &solve_static_linear(&lin).unwrap(), 0).unwrap();
    let ctrl = synthesize_dynamic(&lq.problem, Arc::new(mf), gains(&lq.problem)).unwrap();
    let cl = ClosedLoop::dynamic(ctrl);
    let tr = cl.integrate(&initial_state(&cl), &OdeOptions::new(60.0, StepSpec::fixed(1e-3))).unwrap();
    let im = metrics(&tr, None, &MetricsOptions { tolerance: 1e-8, ..Default::default() });
    ok &= im.tail_sup_g <= 1e-8;
    detail.push(format!("internal model tail {:.3e} <= 1e-8", im.tail_sup_g));
    let elapsed = start.elapsed();
    let pass = ok && elapsed < Duration::from_secs(30);
    report(6, "internal-model violation", pass, &detail.join(", "), elapsed);
    assert!(pass);
}

/// Built-in problems with the half-width of the input box sampled for the
/// gradient check (the pendulum steady state needs |u| of a few hundred).
fn builtin_problems() -> Vec<(Problem<f64>, f64)> {
    vec![
        (example5_problem(0.5).unwrap(), 2.0),
        (remark_instance().problem, 2.0),
        (pendulum(PendulumLoss::Quadratic), 400.0),
        (pendulum(PendulumLoss::Logistic { kappa: 1.0, mu: 0.5 }), 400.0),
    ]
}

fn gradient_fd_gap(problem: &Problem<f64>, span: f64) -> f64 {
    let d = problem.dims();
    let h = Halton::new(d.m + d.p, 11);
    let eq = problem.equilibrium();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 1..200u64 {
        let pt = h.point(i);
        let u = DVector::from_fn(d.m, |k, _| eq.u[k] + 2.0 * span * (pt[k] - 0.5));
        let w = problem.exosystem.region.from_unit(&pt[d.m..]).unwrap();
        let Ok(g) = problem.gradient(&u, &w) else { continue };
        let Ok(jac) = central_jacobian(|uu| problem.objective.reduced_loss(uu, &w).map(|v| DVector::from_element(1, v)), &u, 1e-6) else {
            continue;
        };
        let fd = jac.transpose().column(0).into_owned();
        worst = worst.max((fd - &g).norm() / (1.0 + g.norm()));
        checked += 1;
    }
    assert!(checked > 20, "{}: too few points inside the domain", problem.name);
    worst
}

#[test]
fn criterion_7_property_suites() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lines = Vec::new();

    let mut pbh_agree = 0;
    for _ in 0..1000 {
        let inst = random_pbh_instance(5, &mut rng);
        let a = is_stabilizable(&inst.a, &inst.b).unwrap();
        let b = is_stabilizable_by_subspaces(&inst.a, &inst.b).unwrap();
        pbh_agree += usize::from(a == b && a == inst.stabilizable);
    }
    lines.push((pbh_agree == 1000, format!("PBH/subspace agreement {pbh_agree}/1000")));

    let mut placements_ok = true;
    for lq in instances(100, 2) {
        let lin = lq.problem.linearize().unwrap();
        let k = place_state_feedback(&lin.a, &lin.b, &PoleTarget::Hurwitz).unwrap();
        let l = place_observer_gain(&lin.a_l(), &lin.c_l(), &PoleTarget::Hurwitz).unwrap();
        placements_ok &= eigendecompose(&(&lin.a + &lin.b * &k)).unwrap().is_hurwitz();
        placements_ok &= eigendecompose(&(lin.a_l() - &l * lin.c_l())).unwrap().is_hurwitz();
        placements_ok &= check_necessary_conditions(&lin).unwrap().all_pass();
    }
    lines.push((placements_ok, "pole placement Hurwitz on 200 calls".to_string()));

    let worst_fd = builtin_problems().iter().map(|(p, span)| gradient_fd_gap(p, *span)).fold(0.0, f64::max);
    lines.push((worst_fd <= 1e-5, format!("gradient vs FD {worst_fd:.2e} <= 1e-5")));

    let problem = pendulum(PendulumLoss::Quadratic);
    let mf = fit_manifold(&problem, &FitOptions::new(2, 2)).unwrap();
    let fit_res = mf.report.relative_residual;
    let ctrl: SynthesizedController<f64> = synthesize_dynamic(&problem, Arc::new(mf), gains(&problem)).unwrap();
    let h = Halton::new(4, 5);
    let samples: Vec<Vector> = (1..=200).map(|i| problem.exosystem.region.from_unit(&h.point(i)).unwrap()).collect();
    let im = verify_internal_model(&ctrl, &problem, &samples).unwrap();
    lines.push((im.relative <= 10.0 * fit_res.max(1e-15), format!("internal model {:.2e} <= 10 x fit {fit_res:.2e}", im.relative)));

    // start on the manifold with a 0.1 observer error; the default start
    // spins the pendulum and is far from the asymptotic step regime
    let w0 = problem.exosystem.initial.clone();
    let x0 = ctrl.manifold.as_ref().unwrap().pi_at(&w0);
    let cl = ClosedLoop::dynamic(ctrl);
    let mut z0 = cl.pack(&x0, &Vector::zeros(0), &w0);
    z0[0] += 0.1;
    z0[3] += 0.1;
    let init = cl.pack(&x0, &z0, &w0);
    let f = |_t: f64, s: &Vector| cl.vector_field(s);
    let run = |dt: f64| {
        let mut s = init.clone();
        let n = (1.0 / dt).round() as usize;
        for k in 0..n {
            s = rk4_step(&f, k as f64 * dt, &s, dt).unwrap();
        }
        s
    };
    let reference = cl.integrate(&init, &OdeOptions::new(1.0, StepSpec::Adaptive { abs_tol: 1e-14, rel_tol: 1e-13, record_dt: 1.0 })).unwrap();
    let exact = {
        let tr = reference;
        cl.pack(tr.x.last().unwrap(), tr.z.last().unwrap(), tr.w.last().unwrap())
    };
    let (e1, e2) = ((run(0.01) - &exact).norm(), (run(0.005) - &exact).norm());
    let ratio = e1 / e2;
    lines.push(((12.0..20.0).contains(&ratio), format!("RK4 halving ratio {ratio:.2} (about 16)")));

    let elapsed = start.elapsed();
    let pass = lines.iter().all(|(ok, _)| *ok);
    let detail: Vec<String> = lines.iter().map(|(ok, s)| format!("{s}{}", if *ok { "" } else { " [x]" })).collect();
    report(7, "property suites", pass, &detail.join("; "), elapsed);
    assert!(pass);
}
