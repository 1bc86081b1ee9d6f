//! Plain-text matrix bundles for controllers and manifolds.
//!
//! ```text
//! # comment
//! kind = dynamic
//! matrix K 1 2
//! -3.5 -1.25
//! ```
//!
//! Scalars are `key = value` lines; matrices are a `matrix NAME ROWS COLS`
//! header followed by `ROWS` lines in row-major order. Values use the
//! shortest round-trip decimal form, so parsing restores every bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{FitReport, ManifoldSolution, PolyMap, Termination};
use crate::problem::Problem;
use crate::regulator::{LinearController, LinearGains, Provenance};
use crate::synthesis::{synthesize_dynamic, baseline_gradient_flow, ControllerKind, Gains, StaticLaw, SynthesizedController};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixBundle {
    pub meta: BTreeMap<String, String>,
    pub matrices: BTreeMap<String, DMatrix<f64>>,
}

impl MatrixBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn put(&mut self, name: &str, m: DMatrix<f64>) -> &mut Self {
        self.matrices.insert(name.to_string(), m);
        self
    }

    pub fn put_vector(&mut self, name: &str, v: &DVector<f64>) -> &mut Self {
        self.put(name, DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| Error::invalid(format!("bundle: missing key `{key}`")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let s = self.get(key)?;
        parse_f64(s).ok_or_else(|| Error::invalid(format!("bundle: `{key}` is not a number: {s}")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let s = self.get(key)?;
        s.parse().map_err(|_| Error::invalid(format!("bundle: `{key}` is not an integer: {s}")))
    }

    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.matrices.get(name).ok_or_else(|| Error::invalid(format!("bundle: missing matrix `{name}`")))
    }

    pub fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.matrix(name)?;
        if m.ncols() != 1 && m.nrows() > 0 {
            return Err(Error::invalid(format!("bundle: `{name}` is not a column vector")));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(s, "matrix {name} {} {}", m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                let row: Vec<String> = m.row(i).iter().map(|v| fmt_f64(*v)).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut b = MatrixBundle::new();
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        while let Some((no, line)) = lines.next() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let bad = || Error::invalid(format!("bundle line {}: malformed matrix header", no + 1));
                if parts.len() != 3 {
                    return Err(bad());
                }
                let (r, c): (usize, usize) = (parts[1].parse().map_err(|_| bad())?, parts[2].parse().map_err(|_| bad())?);
                let mut m = DMatrix::zeros(r, c);
                for i in 0..r {
                    let (rno, row) = lines.next().ok_or_else(|| Error::invalid(format!("bundle: matrix `{}` truncated", parts[0])))?;
                    let vals: Vec<f64> = row
                        .split_whitespace()
                        .map(|v| parse_f64(v).ok_or_else(|| Error::invalid(format!("bundle line {}: bad number `{v}`", rno + 1))))
                        .collect::<Result<_>>()?;
                    if vals.len() != c {
                        return Err(Error::invalid(format!("bundle line {}: expected {c} values, found {}", rno + 1, vals.len())));
                    }
                    for (j, v) in vals.into_iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                if b.matrices.insert(parts[0].to_string(), m).is_some() {
                    return Err(Error::invalid(format!("bundle: duplicate matrix `{}`", parts[0])));
                }
            } else if let Some((k, v)) = line.split_once('=') {
                b.meta.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                return Err(Error::invalid(format!("bundle line {}: expected `key = value` or a matrix header", no + 1)));
            }
        }
        Ok(b)
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn write_manifold(b: &mut MatrixBundle, m: &ManifoldSolution<f64>) {
    let r = &m.report;
    b.set("manifold.p", m.disturbance_dim())
        .set("manifold.degree_pi", m.pi.degree())
        .set("manifold.degree_gamma", m.gamma.degree())
        .set("fit.relative_residual", fmt_f64(r.relative_residual))
        .set("fit.training_relative_residual", fmt_f64(r.training_relative_residual))
        .set("fit.collocation_count", r.collocation_count)
        .set("fit.validation_count", r.validation_count)
        .set("fit.domain_failures", r.domain_failures)
        .set("fit.iterations", r.iterations)
        .set("fit.termination", r.termination.as_str())
        .set("fit.seed", r.seed);
    b.put("pi_coeffs", m.pi.coeffs.clone())
        .put("gamma_coeffs", m.gamma.coeffs.clone())
        .put_vector("x_star", &m.x_star)
        .put_vector("u_star", &m.u_star)
        .put_vector("fit_per_equation", &DVector::from_vec(r.per_equation.clone()));
}

pub fn read_manifold(b: &MatrixBundle) -> Result<ManifoldSolution<f64>> {
    let p = b.get_usize("manifold.p")?;
    let pi = PolyMap::from_coeffs(p, b.get_usize("manifold.degree_pi")?, b.matrix("pi_coeffs")?.clone())?;
    let gamma = PolyMap::from_coeffs(p, b.get_usize("manifold.degree_gamma")?, b.matrix("gamma_coeffs")?.clone())?;
    let term = b.get("fit.termination")?;
    let report = FitReport {
        relative_residual: b.get_f64("fit.relative_residual")?,
        training_relative_residual: b.get_f64("fit.training_relative_residual")?,
        per_equation: b.vector("fit_per_equation")?.iter().copied().collect(),
        collocation_count: b.get_usize("fit.collocation_count")?,
        validation_count: b.get_usize("fit.validation_count")?,
        domain_failures: b.get_usize("fit.domain_failures")?,
        iterations: b.get_usize("fit.iterations")?,
        termination: Termination::parse(term).ok_or_else(|| Error::invalid(format!("bundle: unknown termination `{term}`")))?,
        seed: b.get_usize("fit.seed")? as u64,
    };
    Ok(ManifoldSolution { pi, gamma, x_star: b.vector("x_star")?, u_star: b.vector("u_star")?, report })
}

/// Kind tag, gains, `eta` and the full manifold.
pub fn controller_bundle(c: &SynthesizedController<f64>) -> MatrixBundle {
    let mut b = MatrixBundle::new();
    b.set("kind", c.kind.as_str()).set("problem", &c.problem.name).set("order", c.order());
    if let Some(g) = &c.gains {
        b.put("K", g.k.clone()).put("L1", g.l1.clone()).put("L2", g.l2.clone());
    }
    if let Some(eta) = c.eta {
        b.set("eta", fmt_f64(eta));
    }
    if let Some(m) = &c.manifold {
        write_manifold(&mut b, m);
    }
    b
}

/// Rebuilds a controller against `problem`, re-running the synthesis checks.
pub fn controller_from_bundle(b: &MatrixBundle, problem: &Problem<f64>) -> Result<SynthesizedController<f64>> {
    match b.get("kind")? {
        "dynamic" => {
            let gains = Gains { k: b.matrix("K")?.clone(), l1: b.matrix("L1")?.clone(), l2: b.matrix("L2")?.clone() };
            synthesize_dynamic(problem, Arc::new(read_manifold(b)?), gains)
        }
        "baseline" => baseline_gradient_flow(problem, b.get_f64("eta")?),
        other => Err(Error::invalid(format!("bundle: controller kind `{other}` cannot be replayed as a dynamic controller"))),
    }
}

pub fn static_law_bundle(law: &StaticLaw<f64>) -> MatrixBundle {
    let mut b = MatrixBundle::new();
    b.set("kind", ControllerKind::Static.as_str()).put("K", law.k.clone());
    write_manifold(&mut b, &law.manifold);
    b
}

pub fn linear_controller_bundle(c: &LinearController<f64>) -> MatrixBundle {
    let mut b = MatrixBundle::new();
    b.set("kind", "linear").put("A_c", c.a_c.clone()).put("B_c", c.b_c.clone()).put("C_c", c.c_c.clone());
    match &c.provenance {
        Provenance::Observer(g) => {
            b.set("provenance", "observer")
                .put("K", g.k.clone())
                .put("L1", g.l1.clone())
                .put("L2", g.l2.clone())
                .put("Pi", g.pi.clone())
                .put("Gamma", g.gamma.clone());
        }
        Provenance::GradientFlow { eta } => {
            b.set("provenance", "gradient-flow").set("eta", fmt_f64(*eta));
        }
    }
    b
}

pub fn linear_controller_from_bundle(b: &MatrixBundle) -> Result<LinearController<f64>> {
    let provenance = match b.get("provenance")? {
        "observer" => Provenance::Observer(LinearGains {
            k: b.matrix("K")?.clone(),
            l1: b.matrix("L1")?.clone(),
            l2: b.matrix("L2")?.clone(),
            pi: b.matrix("Pi")?.clone(),
            gamma: b.matrix("Gamma")?.clone(),
        }),
        "gradient-flow" => Provenance::GradientFlow { eta: b.get_f64("eta")? },
        other => return Err(Error::invalid(format!("bundle: unknown provenance `{other}`"))),
    };
    Ok(LinearController { a_c: b.matrix("A_c")?.clone(), b_c: b.matrix("B_c")?.clone(), c_c: b.matrix("C_c")?.clone(), provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{place_observer_gain, place_state_feedback, PoleTarget};
    use crate::problem::{harmonic_exosystem, lq_problem};
    use crate::regulator::solve_static_linear;

    fn dyn_ctrl() -> SynthesizedController<f64> {
        let lq = lq_problem(mat![-1.0, 0.5; 0.0, -2.0], mat![1.0; 1.0], mat![1.0, 0.0; 0.5, 0.0], mat![1.0, 0.0], mat![0.0, 0.0], 0.1, harmonic_exosystem(&[1.0], &[1.0]).unwrap())
            .unwrap();
        let lin = lq.problem.linearize().unwrap();
        let mf = ManifoldSolution::from_linear(&lq.problem, &solve_static_linear(&lin).unwrap(), 3).unwrap();
        let k = place_state_feedback(&lin.a, &lin.b, &PoleTarget::interval(-3.0, -2.0)).unwrap();
        let l = place_observer_gain(&lin.a_l(), &lin.c_l(), &PoleTarget::interval(-2.0, -1.0)).unwrap();
        synthesize_dynamic(&lq.problem, Arc::new(mf), Gains::from_stacked(k, &l, 2)).unwrap()
    }

    #[test]
    fn text_round_trip_is_bitwise() {
        let mut b = MatrixBundle::new();
        b.set("a", "x y").put("M", mat![0.1, -1.0 / 3.0; 1e-300, f64::MAX]).put("E", DMatrix::zeros(0, 3));
        let back = MatrixBundle::parse(&b.to_text()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn controller_round_trip() {
        let c = dyn_ctrl();
        let b = controller_bundle(&c);
        let text = b.to_text();
        let back = controller_from_bundle(&MatrixBundle::parse(&text).unwrap(), &c.problem).unwrap();
        assert_eq!(back.gains, c.gains);
        assert_eq!(back.manifold.as_deref(), c.manifold.as_deref());
        assert_eq!(controller_bundle(&back).to_text(), text);
    }

    #[test]
    fn linear_round_trip() {
        let lc = dyn_ctrl().linear_realization().unwrap();
        let back = linear_controller_from_bundle(&MatrixBundle::parse(&linear_controller_bundle(&lc).to_text()).unwrap()).unwrap();
        assert_eq!(back, lc);
    }

    #[test]
    fn malformed_inputs() {
        assert!(MatrixBundle::parse("matrix M 2 2\n1 2\n").is_err());
        assert!(MatrixBundle::parse("matrix M 1 2\n1\n").is_err());
        assert!(MatrixBundle::parse("garbage\n").is_err());
        assert!(MatrixBundle::parse("matrix M 1 1\nx\n").is_err());
    }
}
