//! Exact synthesis for linear plants with quadratic costs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    eigendecompose, solve_regulator_linear, verify_linear_dynamic_tracking, DynamicTrackingCheck, LinearRegulatorSolution,
    LinearizationData,
};
use crate::scalar::Real;

/// `Gamma` from `R Gamma + T = 0` and `Pi` from the Sylvester equation.
///
/// A singular `R` falls back to the minimum-norm solution and sets
/// `non_unique`; an inconsistent system is `NoSolution`.
pub fn solve_static_linear<T: Real>(lin: &LinearizationData<T>) -> Result<LinearRegulatorSolution<T>> {
    lin.validate()?;
    solve_regulator_linear(&lin.a, &lin.b, &lin.p, &lin.s, &lin.r, &lin.t)
}

/// Gains a linear controller was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGains<T: Real> {
    pub k: DMatrix<T>,
    pub l1: DMatrix<T>,
    pub l2: DMatrix<T>,
    pub pi: DMatrix<T>,
    pub gamma: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance<T: Real> {
    Observer(LinearGains<T>),
    GradientFlow { eta: T },
}

/// `z' = A_c z + B_c y`, `u = C_c z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearController<T: Real> {
    pub a_c: DMatrix<T>,
    pub b_c: DMatrix<T>,
    pub c_c: DMatrix<T>,
    pub provenance: Provenance<T>,
}

impl<T: Real> LinearController<T> {
    pub fn order(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn gains(&self) -> Option<&LinearGains<T>> {
        match &self.provenance {
            Provenance::Observer(g) => Some(g),
            Provenance::GradientFlow { .. } => None,
        }
    }
}

fn require_hurwitz<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    let spec = eigendecompose(m)?;
    if spec.is_hurwitz() {
        Ok(())
    } else {
        Err(Error::Synthesis(format!(
            "{what} is not Hurwitz (max Re eig = {:e})",
            spec.max_real().to_f64_lossy()
        )))
    }
}

/// Observer-based controller on `z = (z1, z2)`:
///
/// `A_c = [[A + B K - L1 C, P + B (Gamma - K Pi) - L1 Q], [-L2 C, S - L2 Q]]`,
/// `B_c = [L1; L2]`, `C_c = [K, Gamma - K Pi]`.
pub fn assemble_linear_controller<T: Real>(
    lin: &LinearizationData<T>,
    pi: &DMatrix<T>,
    gamma: &DMatrix<T>,
    k: &DMatrix<T>,
    l1: &DMatrix<T>,
    l2: &DMatrix<T>,
) -> Result<LinearController<T>> {
    lin.validate()?;
    let d = lin.dims();
    let shapes = [
        ("Pi", pi.shape(), (d.n, d.p)),
        ("Gamma", gamma.shape(), (d.m, d.p)),
        ("K", k.shape(), (d.m, d.n)),
        ("L1", l1.shape(), (d.n, d.q)),
        ("L2", l2.shape(), (d.p, d.q)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            return Err(Error::invalid(format!("{name} has shape {got:?}, expected {want:?}")));
        }
    }
    require_hurwitz(&(&lin.a + &lin.b * k), "A + B K")?;
    let mut l = DMatrix::zeros(d.n + d.p, d.q);
    l.view_mut((0, 0), (d.n, d.q)).copy_from(l1);
    l.view_mut((d.n, 0), (d.p, d.q)).copy_from(l2);
    require_hurwitz(&(lin.a_l() - &l * lin.c_l()), "A_L - L C_L")?;

    let ff = gamma - k * pi;
    let nc = d.n + d.p;
    let mut a_c = DMatrix::zeros(nc, nc);
    a_c.view_mut((0, 0), (d.n, d.n)).copy_from(&(&lin.a + &lin.b * k - l1 * &lin.c));
    a_c.view_mut((0, d.n), (d.n, d.p)).copy_from(&(&lin.p + &lin.b * &ff - l1 * &lin.q));
    a_c.view_mut((d.n, 0), (d.p, d.n)).copy_from(&(-(l2 * &lin.c)));
    a_c.view_mut((d.n, d.n), (d.p, d.p)).copy_from(&(&lin.s - l2 * &lin.q));
    let mut c_c = DMatrix::zeros(d.m, nc);
    c_c.view_mut((0, 0), (d.m, d.n)).copy_from(k);
    c_c.view_mut((0, d.n), (d.m, d.p)).copy_from(&ff);
    Ok(LinearController {
        a_c,
        b_c: l,
        c_c,
        provenance: Provenance::Observer(LinearGains {
            k: k.clone(),
            l1: l1.clone(),
            l2: l2.clone(),
            pi: pi.clone(),
            gamma: gamma.clone(),
        }),
    })
}

/// State matrix of `(x, z)` or, with `include_exo`, of `(x, z, w)`:
/// `[[A, B C_c, P], [B_c C, A_c, B_c Q], [0, 0, S]]`.
pub fn closed_loop_matrix<T: Real>(
    lin: &LinearizationData<T>,
    ctrl: &LinearController<T>,
    include_exo: bool,
) -> Result<DMatrix<T>> {
    let d = lin.dims();
    let nc = ctrl.order();
    if ctrl.b_c.shape() != (nc, d.q) || ctrl.c_c.shape() != (d.m, nc) {
        return Err(Error::invalid("controller dimensions disagree with the plant"));
    }
    let dim = d.n + nc + if include_exo { d.p } else { 0 };
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (d.n, d.n)).copy_from(&lin.a);
    m.view_mut((0, d.n), (d.n, nc)).copy_from(&(&lin.b * &ctrl.c_c));
    m.view_mut((d.n, 0), (nc, d.n)).copy_from(&(&ctrl.b_c * &lin.c));
    m.view_mut((d.n, d.n), (nc, nc)).copy_from(&ctrl.a_c);
    if include_exo {
        let o = d.n + nc;
        m.view_mut((0, o), (d.n, d.p)).copy_from(&lin.p);
        m.view_mut((d.n, o), (nc, d.p)).copy_from(&(&ctrl.b_c * &lin.q));
        m.view_mut((o, o), (d.p, d.p)).copy_from(&lin.s);
    }
    Ok(m)
}

/// Steady-state map matrices `T_xu = -A^{-1} B`, `T_xw = -A^{-1} P`.
fn steady_state_matrices<T: Real>(lin: &LinearizationData<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let lu = lin.a.clone().lu();
    let t_xu = -lu.solve(&lin.b).ok_or_else(|| Error::Precondition("A is singular".into()))?;
    let t_xw = -lu.solve(&lin.p).ok_or_else(|| Error::Precondition("A is singular".into()))?;
    Ok((t_xu, t_xw))
}

/// Gradient flow `z' = -eta [(R - T_xu' T_xu) z + T_xu' y]`, `u = z`.
///
/// Requires `A` Hurwitz, full-state output `y = x` and an objective of the
/// form `1/2 |x|^2 + 1/2 u' (R - T_xu' T_xu) u`, i.e. `T = T_xu' T_xw`.
pub fn baseline_linear_gradient_controller<T: Real>(lin: &LinearizationData<T>, eta: T) -> Result<LinearController<T>> {
    lin.validate()?;
    let d = lin.dims();
    if !(eta >= T::zero()) {
        return Err(Error::invalid("eta must be non-negative"));
    }
    if !eigendecompose(&lin.a)?.is_hurwitz() {
        return Err(Error::Precondition("baseline controller needs a pre-stabilized plant (A Hurwitz)".into()));
    }
    let ident = DMatrix::<T>::identity(d.n, d.n);
    let tol = T::lit(1e-12) * (T::one() + lin.input_norm());
    if d.q != d.n || (&lin.c - &ident).norm() > tol || lin.q.norm() > tol {
        return Err(Error::Precondition("baseline controller needs full-state output y = x".into()));
    }
    let (t_xu, t_xw) = steady_state_matrices(lin)?;
    let t_check = t_xu.transpose() * &t_xw;
    if (&t_check - &lin.t).norm() > T::lit(1e-9) * (T::one() + lin.t.norm()) {
        return Err(Error::Unsupported(
            "gradient data is not of the form 1/2 |x|^2 + quadratic in u with h = T_xu u + T_xw w".into(),
        ));
    }
    let r_u = &lin.r - t_xu.transpose() * &t_xu;
    Ok(LinearController {
        a_c: r_u * (-eta),
        b_c: t_xu.transpose() * (-eta),
        c_c: DMatrix::identity(d.m, d.m),
        provenance: Provenance::GradientFlow { eta },
    })
}

/// Coupled invariance equations of the interconnection with `ctrl`.
pub fn verify_linear_controller<T: Real>(
    lin: &LinearizationData<T>,
    ctrl: &LinearController<T>,
) -> Result<DynamicTrackingCheck<T>> {
    verify_linear_dynamic_tracking(
        &lin.a, &lin.b, &lin.c, &lin.p, &lin.q, &lin.s, &ctrl.a_c, &ctrl.b_c, &ctrl.c_c, &lin.r, &lin.t,
    )
}
