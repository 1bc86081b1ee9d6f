//! Executable controllers: the static law `gamma(w) + K (x - pi(w))`, the
//! observer-based dynamic controller and the gradient-flow baseline.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{eigendecompose, LinearizationData};
use crate::manifold::ManifoldSolution;
use crate::problem::{central_jacobian, default_fd_step, Problem};
use crate::regulator::{verify_linear_controller, LinearController, Provenance};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Static,
    Dynamic,
    Baseline,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Static => "static",
            ControllerKind::Dynamic => "dynamic",
            ControllerKind::Baseline => "baseline",
        }
    }
}

/// Feedback gain `K` and observer gains `L1`, `L2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains<T: Real> {
    pub k: DMatrix<T>,
    pub l1: DMatrix<T>,
    pub l2: DMatrix<T>,
}

impl<T: Real> Gains<T> {
    /// Splits a stacked observer gain `L = [L1; L2]` after `n` rows.
    pub fn from_stacked(k: DMatrix<T>, l: &DMatrix<T>, n: usize) -> Self {
        Gains { k, l1: l.rows(0, n).into_owned(), l2: l.rows(n, l.nrows() - n).into_owned() }
    }

    pub fn stacked_l(&self) -> DMatrix<T> {
        let (n, p, q) = (self.l1.nrows(), self.l2.nrows(), self.l1.ncols());
        let mut l = DMatrix::zeros(n + p, q);
        l.view_mut((0, 0), (n, q)).copy_from(&self.l1);
        l.view_mut((n, 0), (p, q)).copy_from(&self.l2);
        l
    }
}

fn require_hurwitz<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    let spec = eigendecompose(m)?;
    if spec.is_hurwitz() {
        Ok(())
    } else {
        Err(Error::Synthesis(format!("{what} is not Hurwitz (max Re eig = {:e})", spec.max_real().to_f64_lossy())))
    }
}

/// `u = H_c(x, w) = gamma(w) + K (x - pi(w))`.
#[derive(Debug, Clone)]
pub struct StaticLaw<T: Real> {
    pub k: DMatrix<T>,
    pub manifold: Arc<ManifoldSolution<T>>,
}

impl<T: Real> StaticLaw<T> {
    pub fn hc(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        self.manifold.gamma_at(w) + &self.k * (x - self.manifold.pi_at(w))
    }
}

pub fn synthesize_static<T: Real>(
    problem: &Problem<T>,
    manifold: Arc<ManifoldSolution<T>>,
    k: DMatrix<T>,
) -> Result<StaticLaw<T>> {
    let lin = problem.linearize()?;
    let d = lin.dims();
    if k.shape() != (d.m, d.n) {
        return Err(Error::invalid(format!("K has shape {:?}, expected ({}, {})", k.shape(), d.m, d.n)));
    }
    check_manifold(problem, &manifold)?;
    require_hurwitz(&(&lin.a + &lin.b * &k), "A + B K")?;
    Ok(StaticLaw { k, manifold })
}

fn check_manifold<T: Real>(problem: &Problem<T>, m: &ManifoldSolution<T>) -> Result<()> {
    let d = problem.dims();
    if m.pi.out_dim() != d.n || m.gamma.out_dim() != d.m || m.disturbance_dim() != d.p {
        return Err(Error::invalid("manifold dimensions disagree with the problem"));
    }
    Ok(())
}

/// `z' = F_c(z, y)`, `u = G_c(z)`.
#[derive(Clone)]
pub struct SynthesizedController<T: Real> {
    pub kind: ControllerKind,
    pub problem: Problem<T>,
    pub gains: Option<Gains<T>>,
    pub manifold: Option<Arc<ManifoldSolution<T>>>,
    /// Step size of the gradient flow (baseline only).
    pub eta: Option<T>,
    pub z_star: DVector<T>,
}

impl<T: Real> std::fmt::Debug for SynthesizedController<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SynthesizedController")
            .field("kind", &self.kind)
            .field("problem", &self.problem.name)
            .field("n_c", &self.order())
            .field("gains", &self.gains)
            .field("eta", &self.eta)
            .finish()
    }
}

impl<T: Real> SynthesizedController<T> {
    pub fn order(&self) -> usize {
        self.z_star.len()
    }

    /// `G_c(z)`.
    pub fn gc(&self, z: &DVector<T>) -> DVector<T> {
        match self.kind {
            ControllerKind::Dynamic => {
                let n = self.problem.dims().n;
                let (m, g) = (self.manifold.as_ref().expect("manifold"), self.gains.as_ref().expect("gains"));
                let z1 = z.rows(0, n).into_owned();
                let z2 = z.rows(n, z.len() - n).into_owned();
                m.gamma_at(&z2) + &g.k * (z1 - m.pi_at(&z2))
            }
            ControllerKind::Baseline | ControllerKind::Static => z.clone(),
        }
    }

    /// `F_c(z, y)`.
    pub fn fc(&self, z: &DVector<T>, y: &DVector<T>) -> Result<DVector<T>> {
        match self.kind {
            ControllerKind::Dynamic => {
                let n = self.problem.dims().n;
                let g = self.gains.as_ref().expect("gains");
                let z1 = z.rows(0, n).into_owned();
                let z2 = z.rows(n, z.len() - n).into_owned();
                let u = self.gc(z);
                let ey = self.problem.plant.output(&z1, &z2) - y;
                let top = self.problem.plant.dynamics(&z1, &u, &z2) - &g.l1 * &ey;
                let bot = self.problem.exosystem.vector_field(&z2) - &g.l2 * &ey;
                let mut out = DVector::zeros(z.len());
                out.rows_mut(0, n).copy_from(&top);
                out.rows_mut(n, z.len() - n).copy_from(&bot);
                Ok(out)
            }
            ControllerKind::Baseline => {
                let eta = self.eta.expect("eta");
                let sc = self.problem.objective.state_cost().expect("state-cost objective");
                let jh = sc
                    .steady
                    .additive_jacobian(z)
                    .ok_or_else(|| Error::Unsupported("steady-state map lost its additive structure".into()))?;
                Ok((sc.loss.grad_u(z, y) + jh.transpose() * sc.loss.grad_x(z, y)) * (-eta))
            }
            ControllerKind::Static => Ok(DVector::zeros(z.len())),
        }
    }

    /// `y*` at the equilibrium `(x*, w = 0)`.
    pub fn y_star(&self) -> DVector<T> {
        let eq = self.problem.equilibrium();
        self.problem.plant.output(&eq.x, &DVector::zeros(self.problem.exosystem.dim()))
    }

    /// `(A_c, B_c, C_c)` by differencing `F_c`, `G_c` at `(z*, y*)` with unit
    /// steps; exact when both maps are affine.
    pub fn linear_realization(&self) -> Result<LinearController<T>> {
        let ys = self.y_star();
        let f0 = self.fc(&self.z_star, &ys)?;
        let g0 = self.gc(&self.z_star);
        let nc = self.order();
        let (q, m) = (ys.len(), g0.len());
        let mut a_c = DMatrix::zeros(nc, nc);
        let mut c_c = DMatrix::zeros(m, nc);
        for i in 0..nc {
            let mut z = self.z_star.clone();
            z[i] += T::one();
            a_c.set_column(i, &(self.fc(&z, &ys)? - &f0));
            c_c.set_column(i, &(self.gc(&z) - &g0));
        }
        let mut b_c = DMatrix::zeros(nc, q);
        for j in 0..q {
            let mut y = ys.clone();
            y[j] += T::one();
            b_c.set_column(j, &(self.fc(&self.z_star, &y)? - &f0));
        }
        let provenance = match (&self.gains, &self.manifold) {
            (Some(g), Some(mf)) => Provenance::Observer(crate::regulator::LinearGains {
                k: g.k.clone(),
                l1: g.l1.clone(),
                l2: g.l2.clone(),
                pi: mf.pi.block(1),
                gamma: mf.gamma.block(1),
            }),
            _ => Provenance::GradientFlow { eta: self.eta.unwrap_or_else(T::zero) },
        };
        Ok(LinearController { a_c, b_c, c_c, provenance })
    }
}

/// Observer-based controller on `z = (z1, z2)`:
/// `G_c(z) = gamma(z2) + K (z1 - pi(z2))`,
/// `F_c(z, y) = [f(z1, G_c(z), z2) - L1 e_y; s(z2) - L2 e_y]`, `e_y = c(z1, z2) - y`.
pub fn synthesize_dynamic<T: Real>(
    problem: &Problem<T>,
    manifold: Arc<ManifoldSolution<T>>,
    gains: Gains<T>,
) -> Result<SynthesizedController<T>> {
    let lin = problem.linearize()?;
    let d = lin.dims();
    check_manifold(problem, &manifold)?;
    let shapes = [
        ("K", gains.k.shape(), (d.m, d.n)),
        ("L1", gains.l1.shape(), (d.n, d.q)),
        ("L2", gains.l2.shape(), (d.p, d.q)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            return Err(Error::invalid(format!("{name} has shape {got:?}, expected {want:?}")));
        }
    }
    require_hurwitz(&(&lin.a + &lin.b * &gains.k), "A + B K")?;
    require_hurwitz(&(lin.a_l() - gains.stacked_l() * lin.c_l()), "A_L - L C_L")?;
    let eq = problem.equilibrium();
    let mut z_star = DVector::zeros(d.n + d.p);
    z_star.rows_mut(0, d.n).copy_from(&eq.x);
    Ok(SynthesizedController {
        kind: ControllerKind::Dynamic,
        problem: problem.clone(),
        gains: Some(gains),
        manifold: Some(manifold),
        eta: None,
        z_star,
    })
}

/// Gradient flow `z' = -eta [grad_1 phi_0(z, y) + J_hhat(z)' grad_2 phi_0(z, y)]`, `u = z`,
/// with `y` read as the state.
pub fn baseline_gradient_flow<T: Real>(problem: &Problem<T>, eta: T) -> Result<SynthesizedController<T>> {
    if !(eta >= T::zero()) {
        return Err(Error::invalid("eta must be non-negative"));
    }
    let d = problem.dims();
    let sc = problem
        .objective
        .state_cost()
        .ok_or_else(|| Error::Unsupported("objective has no state-cost structure phi_0(u, x)".into()))?;
    let eq = problem.equilibrium();
    if sc.steady.additive_jacobian(&eq.u).is_none() {
        return Err(Error::Unsupported("steady-state map is not of the form hhat(u) + E w".into()));
    }
    if d.q != d.n {
        return Err(Error::Unsupported("gradient flow needs the state as output".into()));
    }
    let lin = problem.linearize()?;
    if !eigendecompose(&lin.a)?.is_hurwitz() {
        return Err(Error::Precondition("gradient flow needs a pre-stabilized plant".into()));
    }
    Ok(SynthesizedController {
        kind: ControllerKind::Baseline,
        problem: problem.clone(),
        gains: None,
        manifold: None,
        eta: Some(eta),
        z_star: eq.u,
    })
}

/// Maxima over samples of the three internal-model identities.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalModelReport {
    /// `dpi/dw s - f(pi, G_c(sigma), w)`.
    pub max_plant: f64,
    /// `dsigma/dw s - F_c(sigma, c(pi, w))`.
    pub max_controller: f64,
    /// `grad_u phi(G_c(sigma), w)`.
    pub max_gradient: f64,
    /// `max |r(w)| / (1 + rms sqrt(|f|^2 + |g|^2))`, same scale as the fit residual.
    pub relative: f64,
    /// Largest gap between the analytic `dsigma/dw` and central differences.
    pub fd_jacobian_gap: f64,
    pub samples: usize,
}

fn stack<T: Real>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let mut v = DVector::zeros(a.len() + b.len());
    v.rows_mut(0, a.len()).copy_from(a);
    v.rows_mut(a.len(), b.len()).copy_from(b);
    v
}

/// Evaluates the identities with `sigma(w) = (pi(w), w)` for dynamic
/// controllers. Baseline controllers are checked through their linear
/// realization with `sigma` from the coupled linear solve.
pub fn verify_internal_model<T: Real>(
    ctrl: &SynthesizedController<T>,
    problem: &Problem<T>,
    samples: &[DVector<T>],
) -> Result<InternalModelReport> {
    match ctrl.kind {
        ControllerKind::Dynamic => verify_dynamic(ctrl, problem, samples),
        ControllerKind::Baseline => verify_baseline(ctrl, problem, samples),
        ControllerKind::Static => Err(Error::invalid("static laws have no controller state")),
    }
}

fn verify_dynamic<T: Real>(
    ctrl: &SynthesizedController<T>,
    problem: &Problem<T>,
    samples: &[DVector<T>],
) -> Result<InternalModelReport> {
    let mf = ctrl.manifold.as_ref().expect("manifold");
    let sigma = |w: &DVector<T>| stack(&mf.pi_at(w), w);
    let p = problem.exosystem.dim();
    let (mut ma, mut mb, mut mc, mut mr, mut gap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut scale2 = 0.0;
    for w in samples {
        let s = problem.exosystem.vector_field(w);
        let x = mf.pi_at(w);
        let sg = sigma(w);
        let u = ctrl.gc(&sg);
        let f = problem.plant.dynamics(&x, &u, w);
        let dpi = mf.pi_jacobian(w);
        let ra = &dpi * &s - &f;
        let mut dsig = DMatrix::zeros(sg.len(), p);
        dsig.view_mut((0, 0), (x.len(), p)).copy_from(&dpi);
        dsig.view_mut((x.len(), 0), (p, p)).fill_with_identity();
        let y = problem.plant.output(&x, w);
        let rb = &dsig * &s - ctrl.fc(&sg, &y)?;
        let g = problem.gradient(&u, w)?;
        let fd = central_jacobian(|ww| Ok(sigma(ww)), w, default_fd_step::<T>())?;
        gap = gap.max((fd - &dsig).norm().to_f64_lossy() / (1.0 + dsig.norm().to_f64_lossy()));
        ma = ma.max(ra.norm().to_f64_lossy());
        mb = mb.max(rb.norm().to_f64_lossy());
        mc = mc.max(g.norm().to_f64_lossy());
        mr = mr.max((ra.norm_squared() + g.norm_squared()).to_f64_lossy().sqrt());
        scale2 += (f.norm_squared() + g.norm_squared()).to_f64_lossy();
    }
    let k = samples.len().max(1) as f64;
    Ok(InternalModelReport {
        max_plant: ma,
        max_controller: mb,
        max_gradient: mc,
        relative: mr / (1.0 + (scale2 / k).sqrt()),
        fd_jacobian_gap: gap,
        samples: samples.len(),
    })
}

fn verify_baseline<T: Real>(
    ctrl: &SynthesizedController<T>,
    problem: &Problem<T>,
    samples: &[DVector<T>],
) -> Result<InternalModelReport> {
    let lin: LinearizationData<T> = problem.linearize()?;
    let lc = ctrl.linear_realization()?;
    let chk = verify_linear_controller(&lin, &lc)?;
    let (mut ma, mut mb, mut mc, mut mr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut scale2 = 0.0;
    for w in samples {
        let sw = &lin.s * w;
        let x = &chk.pi * w;
        let z = &chk.sigma * w;
        let u = &lc.c_c * &z;
        let f = &lin.a * &x + &lin.b * &u + &lin.p * w;
        let ra = &chk.pi * &sw - &f;
        let rb = &chk.sigma * &sw - (&lc.a_c * &z + &lc.b_c * (&lin.c * &x + &lin.q * w));
        let g = &lin.r * &u + &lin.t * w;
        ma = ma.max(ra.norm().to_f64_lossy());
        mb = mb.max(rb.norm().to_f64_lossy());
        mc = mc.max(g.norm().to_f64_lossy());
        mr = mr.max((ra.norm_squared() + rb.norm_squared() + g.norm_squared()).to_f64_lossy().sqrt());
        scale2 += (f.norm_squared() + g.norm_squared()).to_f64_lossy();
    }
    let k = samples.len().max(1) as f64;
    Ok(InternalModelReport {
        max_plant: ma,
        max_controller: mb,
        max_gradient: mc,
        relative: mr / (1.0 + (scale2 / k).sqrt()),
        fd_jacobian_gap: 0.0,
        samples: samples.len(),
    })
}
