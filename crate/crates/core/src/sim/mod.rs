//! Closed-loop simulation of plant, exosystem and controller.

mod metrics;
mod ode;
mod stability;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{reduced_gradient, Problem};
use crate::scalar::Real;
use crate::synthesis::{StaticLaw, SynthesizedController};

pub use metrics::{metrics, MetricsOptions, TrackingMetrics};
pub use ode::{integrate_ode, rk4_step, OdeOptions, OdeSolution, StepSpec};
pub use stability::{local_stability_check, StabilityOptions, StabilityReport, StabilityTrial};

/// Controller attached to the plant.
#[derive(Debug, Clone)]
pub enum LoopController<T: Real> {
    /// Output feedback through `z' = F_c(z, y)`, `u = G_c(z)`.
    Dynamic(SynthesizedController<T>),
    /// State feedback `u = H_c(x, w)` with `(x, w)` measured.
    Static(StaticLaw<T>),
    /// Memoryless output feedback `u = D y`.
    OutputGain(DMatrix<T>),
}

/// Interconnection with state `[x; z; w]`.
#[derive(Debug, Clone)]
pub struct ClosedLoop<T: Real> {
    pub problem: Problem<T>,
    pub controller: LoopController<T>,
}

impl<T: Real> ClosedLoop<T> {
    pub fn new(problem: Problem<T>, controller: LoopController<T>) -> Result<Self> {
        let d = problem.dims();
        if let LoopController::OutputGain(g) = &controller {
            if g.shape() != (d.m, d.q) {
                return Err(Error::invalid(format!("output gain has shape {:?}, expected ({}, {})", g.shape(), d.m, d.q)));
            }
        }
        if let LoopController::Dynamic(c) = &controller {
            if c.problem.dims() != d {
                return Err(Error::invalid("controller was synthesized for a problem of different dimensions"));
            }
        }
        Ok(ClosedLoop { problem, controller })
    }

    pub fn dynamic(ctrl: SynthesizedController<T>) -> Self {
        ClosedLoop { problem: ctrl.problem.clone(), controller: LoopController::Dynamic(ctrl) }
    }

    pub fn controller_order(&self) -> usize {
        match &self.controller {
            LoopController::Dynamic(c) => c.order(),
            _ => 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        let d = self.problem.dims();
        d.n + self.controller_order() + d.p
    }

    pub fn split(&self, s: &DVector<T>) -> (DVector<T>, DVector<T>, DVector<T>) {
        let (n, nc) = (self.problem.dims().n, self.controller_order());
        let p = s.len() - n - nc;
        (s.rows(0, n).into_owned(), s.rows(n, nc).into_owned(), s.rows(n + nc, p).into_owned())
    }

    pub fn pack(&self, x: &DVector<T>, z: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        let mut s = DVector::zeros(x.len() + z.len() + w.len());
        s.rows_mut(0, x.len()).copy_from(x);
        s.rows_mut(x.len(), z.len()).copy_from(z);
        s.rows_mut(x.len() + z.len(), w.len()).copy_from(w);
        s
    }

    /// `(x*, z*, 0)`.
    pub fn equilibrium_state(&self) -> DVector<T> {
        let eq = self.problem.equilibrium();
        let z = match &self.controller {
            LoopController::Dynamic(c) => c.z_star.clone(),
            _ => DVector::zeros(0),
        };
        self.pack(&eq.x, &z, &DVector::zeros(self.problem.exosystem.dim()))
    }

    pub fn input(&self, x: &DVector<T>, z: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        match &self.controller {
            LoopController::Dynamic(c) => c.gc(z),
            LoopController::Static(law) => law.hc(x, w),
            LoopController::OutputGain(d) => d * self.problem.plant.output(x, w),
        }
    }

    pub fn vector_field(&self, s: &DVector<T>) -> Result<DVector<T>> {
        let (x, z, w) = self.split(s);
        let u = self.input(&x, &z, &w);
        let dx = self.problem.plant.dynamics(&x, &u, &w);
        let dz = match &self.controller {
            LoopController::Dynamic(c) => c.fc(&z, &self.problem.plant.output(&x, &w))?,
            _ => DVector::zeros(0),
        };
        let dw = self.problem.exosystem.vector_field(&w);
        Ok(self.pack(&dx, &dz, &dw))
    }

    /// Integrates from `init = [x; z; w]`. Divergence returns
    /// [`Error::Diverged`] with the partial trajectory.
    pub fn integrate(&self, init: &DVector<T>, opts: &OdeOptions) -> Result<Trajectory<T>> {
        if init.len() != self.state_dim() {
            return Err(Error::invalid(format!("initial state has length {}, expected {}", init.len(), self.state_dim())));
        }
        let sol = integrate_ode(|_t, s: &DVector<T>| self.vector_field(s), init, opts)?;
        let traj = self.record(&sol, opts);
        if sol.diverged {
            return Err(Error::Diverged(Box::new(traj.to_f64())));
        }
        Ok(traj)
    }

    fn record(&self, sol: &OdeSolution<T>, opts: &OdeOptions) -> Trajectory<T> {
        let d = self.problem.dims();
        let mut tr = Trajectory {
            t: sol.t.clone(),
            x: Vec::new(),
            z: Vec::new(),
            w: Vec::new(),
            u: Vec::new(),
            y: Vec::new(),
            g: Vec::new(),
            meta: TrajectoryMeta {
                integrator: opts.step.name().to_string(),
                step: opts.step.nominal_step(),
                steps: sol.steps,
                rejected: sol.rejected,
                seed: None,
            },
        };
        for s in &sol.y {
            let (x, z, w) = self.split(s);
            let u = self.input(&x, &z, &w);
            let y = self.problem.plant.output(&x, &w);
            let g = reduced_gradient(self.problem.objective.as_ref(), &u, &w)
                .unwrap_or_else(|_| DVector::from_element(d.m, T::lit(f64::NAN)));
            tr.x.push(x);
            tr.z.push(z);
            tr.w.push(w);
            tr.u.push(u);
            tr.y.push(y);
            tr.g.push(g);
        }
        tr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub integrator: String,
    /// Fixed step, or the recording interval of the adaptive scheme.
    pub step: f64,
    pub steps: usize,
    pub rejected: usize,
    pub seed: Option<u64>,
}

/// Samples on a strictly increasing grid. `g` is always
/// `reduced_gradient(u, w)` (NaN where the objective is undefined).
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub t: Vec<T>,
    pub x: Vec<DVector<T>>,
    pub z: Vec<DVector<T>>,
    pub w: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    pub y: Vec<DVector<T>>,
    pub g: Vec<DVector<T>>,
    pub meta: TrajectoryMeta,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn g_norms(&self) -> Vec<f64> {
        self.g.iter().map(|g| g.norm().to_f64_lossy()).collect()
    }

    pub fn to_f64(&self) -> Trajectory<f64> {
        let v = |xs: &[DVector<T>]| xs.iter().map(|x| x.map(|a| a.to_f64_lossy())).collect();
        Trajectory {
            t: self.t.iter().map(|t| t.to_f64_lossy()).collect(),
            x: v(&self.x),
            z: v(&self.z),
            w: v(&self.w),
            u: v(&self.u),
            y: v(&self.y),
            g: v(&self.g),
            meta: self.meta.clone(),
        }
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for (name, xs) in [("x", &self.x), ("z", &self.z), ("w", &self.w), ("u", &self.u), ("y", &self.y), ("g", &self.g)] {
            let k = xs.first().map_or(0, |v| v.len());
            cols.extend((1..=k).map(|i| format!("{name}{i}")));
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for i in 0..self.len() {
            let mut row = vec![self.t[i].to_f64_lossy().to_string()];
            for xs in [&self.x, &self.z, &self.w, &self.u, &self.y, &self.g] {
                row.extend(xs[i].iter().map(|v| v.to_f64_lossy().to_string()));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
