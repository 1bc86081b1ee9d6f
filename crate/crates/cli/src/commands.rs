//! Subcommand bodies. Each returns the text printed on success.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use feedopt::bundle::{
    controller_bundle, controller_from_bundle, linear_controller_bundle, write_manifold, MatrixBundle,
};
use feedopt::linalg::{check_necessary_conditions, eigendecompose, place_observer_gain, place_state_feedback};
use feedopt::manifold::{fit_manifold, ManifoldSolution};
use feedopt::regulator::solve_static_linear;
use feedopt::sim::{metrics, ClosedLoop, LoopController, MetricsOptions, OdeOptions, TrackingMetrics};
use feedopt::synthesis::{baseline_gradient_flow, synthesize_dynamic, Gains};
use feedopt::{ControllerF64, Error, ManifoldSolutionF64, ProblemF64, TrajectoryF64, Vector};
use rayon::prelude::*;

use crate::artifacts::{check_hash, read_bundle, OutDir};
use crate::plot::{LinePlot, Series};
use crate::scenario::{ControllerKind, EstimatorStart, Scenario};
use crate::CliError;

pub struct Context {
    pub scenario: Scenario,
    pub out: OutDir,
    pub force: bool,
}

impl Context {
    pub fn new(scenario: Scenario, out: &Path, force: bool) -> Result<Self, CliError> {
        let out = OutDir::create(out, &scenario)?;
        Ok(Context { scenario, out, force })
    }
}

fn fmt_complex(re: f64, im: f64) -> String {
    if im == 0.0 {
        format!("{re:e}")
    } else {
        format!("{re:e}{}{:e}i", if im < 0.0 { "-" } else { "+" }, im.abs())
    }
}

pub fn check(ctx: &Context) -> Result<String, CliError> {
    let problem = ctx.scenario.build_problem()?;
    let lin = problem.linearize()?;
    let r = check_necessary_conditions(&lin)?;
    let d = lin.dims();
    let mut s = String::new();
    let _ = writeln!(s, "scenario = {}", ctx.scenario.name);
    let _ = writeln!(s, "dims = n {} m {} q {} p {}", d.n, d.m, d.q, d.p);
    let _ = writeln!(s, "stabilizable = {}", r.stabilizable);
    let _ = writeln!(s, "detectable_plant = {}", r.detectable_plant);
    let _ = writeln!(s, "detectable_extended = {}", r.detectable_extended);
    let _ = writeln!(s, "inclusion_holds = {}", r.inclusion_holds);
    let _ = writeln!(s, "inclusion_violation = {:e}", r.inclusion_violation);
    for w in &r.witnesses {
        let at = w.eigenvalue.map_or("-".to_string(), |z| fmt_complex(z.re, z.im));
        let _ = writeln!(s, "witness = {} at {at}", w.item);
    }
    let _ = writeln!(s, "result = {}", if r.all_pass() { "pass" } else { "fail" });
    ctx.out.write_report("check.txt", &s)?;
    if r.all_pass() {
        Ok(s)
    } else {
        Err(CliError::Failed(format!("necessary conditions do not hold\n{s}")))
    }
}

pub fn solve_linear(ctx: &Context) -> Result<String, CliError> {
    let problem = ctx.scenario.build_problem()?;
    let lin = problem.linearize()?;
    let sol = solve_static_linear(&lin)?;
    let r1 = (&sol.pi * &lin.s - &lin.a * &sol.pi - &lin.b * &sol.gamma - &lin.p).norm();
    let r2 = (&lin.r * &sol.gamma + &lin.t).norm();
    let mut b = MatrixBundle::new();
    b.set("kind", "linear-regulator")
        .set("problem", &problem.name)
        .set("residual.invariance", r1)
        .set("residual.gradient", r2)
        .put("Pi", sol.pi.clone())
        .put("Gamma", sol.gamma.clone());
    let path = ctx.out.write_bundle("linear.txt", &b)?;
    Ok(format!(
        "exact = {}\nresidual.invariance = {r1:e}\nresidual.gradient = {r2:e}\nwrote {}\n",
        problem.is_linear(),
        path.display()
    ))
}

fn fit(ctx: &Context, problem: &ProblemF64) -> Result<ManifoldSolutionF64, CliError> {
    match fit_manifold(problem, &ctx.scenario.fit_options()) {
        Ok(m) => Ok(m),
        Err(Error::FitFailure(best)) => {
            let mut b = MatrixBundle::new();
            b.set("kind", "manifold").set("status", "failed");
            write_manifold(&mut b, &best);
            ctx.out.write_bundle("manifold-failed.txt", &b)?;
            Err(Error::FitFailure(best).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn fit_summary(m: &ManifoldSolution<f64>) -> String {
    let r = &m.report;
    format!(
        "fit.relative_residual = {:e}\nfit.iterations = {}\nfit.termination = {}\nfit.domain_failures = {}\n",
        r.relative_residual,
        r.iterations,
        r.termination.as_str(),
        r.domain_failures
    )
}

pub fn fit_manifold_cmd(ctx: &Context) -> Result<String, CliError> {
    let problem = ctx.scenario.build_problem()?;
    let m = fit(ctx, &problem)?;
    let mut b = MatrixBundle::new();
    b.set("kind", "manifold");
    write_manifold(&mut b, &m);
    let path = ctx.out.write_bundle("manifold.txt", &b)?;
    Ok(format!("{}wrote {}\n", fit_summary(&m), path.display()))
}

/// Fit, place both gains and assemble the observer-based controller.
pub fn design(ctx: &Context, problem: &ProblemF64) -> Result<ControllerF64, CliError> {
    let m = fit(ctx, problem)?;
    let lin = problem.linearize()?;
    let k = place_state_feedback(&lin.a, &lin.b, &ctx.scenario.feedback_target())?;
    let l = place_observer_gain(&lin.a_l(), &lin.c_l(), &ctx.scenario.observer_target())?;
    Ok(synthesize_dynamic(problem, Arc::new(m), Gains::from_stacked(k, &l, lin.dims().n))?)
}

pub fn synthesize(ctx: &Context) -> Result<String, CliError> {
    let problem = ctx.scenario.build_problem()?;
    let mut s = String::new();
    match ctx.scenario.controller.kind {
        ControllerKind::OutputGain => {
            let d = ctx.scenario.output_gain()?;
            ClosedLoop::new(problem.clone(), LoopController::OutputGain(d.clone()))?;
            let mut b = MatrixBundle::new();
            b.set("kind", "output-gain").set("problem", &problem.name).put("D", d);
            let path = ctx.out.write_bundle("controller.txt", &b)?;
            let _ = writeln!(s, "kind = output-gain\nwrote {}", path.display());
        }
        ControllerKind::Observer => {
            let ctrl = design(ctx, &problem)?;
            let lin = problem.linearize()?;
            let g = ctrl.gains.as_ref().expect("observer controller has gains");
            let plant = eigendecompose(&(&lin.a + &lin.b * &g.k))?.max_real();
            let observer = eigendecompose(&(lin.a_l() - g.stacked_l() * lin.c_l()))?.max_real();
            s.push_str(&fit_summary(ctrl.manifold.as_ref().expect("observer controller has a manifold")));
            let _ = writeln!(s, "kind = dynamic\norder = {}", ctrl.order());
            let _ = writeln!(s, "max_re.feedback = {plant:e}\nmax_re.observer = {observer:e}");
            let path = ctx.out.write_bundle("controller.txt", &controller_bundle(&ctrl))?;
            let _ = writeln!(s, "wrote {}", path.display());
            let real = ctrl.linear_realization()?;
            let path = ctx.out.write_bundle("realization.txt", &linear_controller_bundle(&real))?;
            let _ = writeln!(s, "wrote {}", path.display());
        }
    }
    ctx.out.write_scenario(&ctx.scenario)?;
    Ok(s)
}

fn loop_from_bundle(b: &MatrixBundle, problem: &ProblemF64) -> Result<(ClosedLoop<f64>, Option<ManifoldSolutionF64>), CliError> {
    if b.get("kind")? == "output-gain" {
        let cl = ClosedLoop::new(problem.clone(), LoopController::OutputGain(b.matrix("D")?.clone()))?;
        return Ok((cl, None));
    }
    let ctrl = controller_from_bundle(b, problem)?;
    let m = ctrl.manifold.as_ref().map(|m| (**m).clone());
    Ok((ClosedLoop::dynamic(ctrl), m))
}

/// `x(0) = x* + offset`, controller at its equilibrium with the disturbance
/// estimate per the scenario, `w(0)` from the exosystem.
pub fn initial_state(cl: &ClosedLoop<f64>, sc: &Scenario) -> Result<Vector, CliError> {
    let mut s = cl.equilibrium_state();
    let (n, nc, p) = (cl.problem.dims().n, cl.controller_order(), cl.problem.exosystem.dim());
    if let Some(off) = &sc.simulation.x0_offset {
        if off.len() != n {
            return Err(CliError::Invalid(format!("simulation.x0_offset has {} entries, the plant has {n} states", off.len())));
        }
        for (i, v) in off.iter().enumerate() {
            s[i] += v;
        }
    }
    let w0 = &cl.problem.exosystem.initial;
    s.rows_mut(n + nc, p).copy_from(w0);
    let observer = matches!(&cl.controller, LoopController::Dynamic(c) if c.gains.is_some());
    if sc.simulation.estimator == EstimatorStart::Exact && observer && nc == n + p {
        s.rows_mut(2 * n, p).copy_from(w0);
    }
    Ok(s)
}

fn ode_options(sc: &Scenario) -> OdeOptions {
    let mut o = OdeOptions::new(sc.simulation.horizon, sc.step_spec());
    o.record_every = sc.simulation.record_every;
    o
}

fn metrics_options(sc: &Scenario) -> MetricsOptions {
    MetricsOptions { tail_fraction: sc.simulation.tail_fraction, tolerance: sc.simulation.tolerance }
}

fn component_series(name: &str, xs: &[Vector]) -> Vec<Series> {
    let k = xs.first().map_or(0, |v| v.len());
    (0..k).map(|i| Series { label: format!("{name}{}", i + 1), values: xs.iter().map(|v| v[i]).collect() }).collect()
}

fn write_plots(ctx: &Context, tr: &TrajectoryF64) -> Result<(), CliError> {
    let note = format!("scenario {} hash {}", ctx.scenario.name, ctx.out.hash);
    let panels = [
        ("w.svg", "disturbance w(t)", "w", component_series("w", &tr.w), false),
        ("u.svg", "input u(t)", "u", component_series("u", &tr.u), false),
        ("g.svg", "gradient |g(t)|", "log10 |g|", vec![Series { label: "|g|".into(), values: tr.g_norms() }], true),
        ("x.svg", "state x(t)", "x", component_series("x", &tr.x), false),
    ];
    for (file, title, y_label, series, log_y) in panels {
        let plot = LinePlot { title, y_label, t: &tr.t, series, log_y, note: &note };
        ctx.out.write(file, plot.to_svg().as_bytes())?;
    }
    Ok(())
}

fn metrics_report(m: &TrackingMetrics, tr: &TrajectoryF64, diverged: bool) -> String {
    let mut s = m.to_report();
    let _ = writeln!(s, "integrator = {}", tr.meta.integrator);
    let _ = writeln!(s, "step = {:e}", tr.meta.step);
    let _ = writeln!(s, "steps = {}", tr.meta.steps);
    let _ = writeln!(s, "rejected = {}", tr.meta.rejected);
    let _ = writeln!(s, "diverged = {diverged}");
    s
}

pub fn simulate(ctx: &Context, bundle: Option<&Path>) -> Result<String, CliError> {
    let problem = ctx.scenario.build_problem()?;
    let path = bundle.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.path("controller.txt"));
    let b = read_bundle(&path)?;
    check_hash(&b, &ctx.out.hash, ctx.force)?;
    let (cl, manifold) = loop_from_bundle(&b, &problem)?;
    let init = initial_state(&cl, &ctx.scenario)?;
    let (tr, diverged) = match cl.integrate(&init, &ode_options(&ctx.scenario)) {
        Ok(tr) => (tr, None),
        Err(Error::Diverged(tr)) => {
            let msg = Error::Diverged(tr.clone()).to_string();
            (*tr, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    let mut csv = format!("# {} = {}\n", crate::artifacts::HASH_KEY, ctx.out.hash).into_bytes();
    tr.write_csv(&mut csv).map_err(|e| CliError::Io("trajectory.csv".into(), e))?;
    ctx.out.write("trajectory.csv", &csv)?;
    let m = metrics(&tr, manifold.as_ref(), &metrics_options(&ctx.scenario));
    let report = metrics_report(&m, &tr, diverged.is_some());
    ctx.out.write_report("metrics.txt", &report)?;
    write_plots(ctx, &tr)?;
    ctx.out.write_scenario(&ctx.scenario)?;
    match diverged {
        Some(msg) => Err(CliError::Diverged(format!("{msg}; partial outputs written to {}", ctx.out.root.display()))),
        None => Ok(report),
    }
}

struct Row {
    label: &'static str,
    eta: Option<f64>,
    tail: f64,
    settled: bool,
}

pub fn compare_baseline(ctx: &Context, etas: &[f64]) -> Result<String, CliError> {
    let sc = &ctx.scenario;
    let problem = sc.build_problem()?;
    let etas = if etas.is_empty() { sc.baseline.eta.clone() } else { etas.to_vec() };
    // build every controller first so structural errors surface before any run
    let mut ctrls: Vec<(&'static str, Option<f64>, ControllerF64)> = vec![("internal-model", None, design(ctx, &problem)?)];
    for eta in &etas {
        ctrls.push(("baseline", Some(*eta), baseline_gradient_flow(&problem, *eta)?));
    }
    let opts = ode_options(sc);
    let mopts = metrics_options(sc);
    let rows: Vec<Result<Row, CliError>> = ctrls
        .into_par_iter()
        .map(|(label, eta, ctrl)| {
            let cl = ClosedLoop::dynamic(ctrl);
            let tr = cl.integrate(&initial_state(&cl, sc)?, &opts).map_err(|e| match e {
                Error::Diverged(_) => CliError::Diverged(format!("{label} {eta:?}: {e}")),
                e => e.into(),
            })?;
            let m = metrics(&tr, None, &mopts);
            Ok(Row { label, eta, tail: m.tail_sup_g, settled: m.settled })
        })
        .collect();
    let mut s = format!("{:<16} {:>10} {:>14} {:>8}\n", "controller", "eta", "tail_sup_g", "settled");
    for r in rows {
        let r = r?;
        let eta = r.eta.map_or("-".to_string(), |e| format!("{e}"));
        let _ = writeln!(s, "{:<16} {:>10} {:>14.4e} {:>8}", r.label, eta, r.tail, r.settled);
    }
    ctx.out.write_report("comparison.txt", &s)?;
    ctx.out.write_scenario(sc)?;
    Ok(s)
}

/// Synthesize then simulate a built-in scenario; the lq scenario also runs
/// the baseline comparison.
pub fn bench(ctx: &Context) -> Result<String, CliError> {
    let mut s = format!("bench = {}\n", ctx.scenario.name);
    let start = std::time::Instant::now();
    s.push_str(&synthesize(ctx)?);
    s.push_str(&simulate(ctx, None)?);
    if ctx.scenario.name == "lq" {
        s.push_str(&compare_baseline(ctx, &[])?);
    }
    let _ = writeln!(s, "elapsed = {:.3} s", start.elapsed().as_secs_f64());
    Ok(s)
}
