use std::fmt::Write as _;

use crate::manifold::ManifoldSolution;
use crate::scalar::Real;
use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Fraction of the horizon forming the tail window.
    pub tail_fraction: f64,
    /// `settled` threshold on the tail supremum of `|g|`.
    pub tolerance: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions { tail_fraction: 0.2, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingMetrics {
    pub tail_sup_g: f64,
    /// Decay rate of `|g|` from a log-linear fit; `None` unless the fitted
    /// window spans two decades.
    pub rate_fit: Option<f64>,
    pub settled: bool,
    /// `sup |x - pi(w)|` over the tail, when a manifold is supplied.
    pub state_tail: Option<f64>,
    pub tail_start: f64,
    pub samples: usize,
}

impl TrackingMetrics {
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:e}"));
        let _ = writeln!(s, "tail_sup_g = {:e}", self.tail_sup_g);
        let _ = writeln!(s, "rate_fit = {}", opt(self.rate_fit));
        let _ = writeln!(s, "settled = {}", self.settled);
        let _ = writeln!(s, "state_tail = {}", opt(self.state_tail));
        let _ = writeln!(s, "tail_start = {}", self.tail_start);
        let _ = writeln!(s, "samples = {}", self.samples);
        s
    }
}

/// Ordinary least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Decay rate over the part of the record where `|g|` has fallen below a
/// tenth of its peak and is still well above the rounding floor.
fn decay_rate(t: &[f64], g: &[f64]) -> Option<f64> {
    let (imax, gmax) = g.iter().copied().enumerate().fold((0, 0.0), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    if !(gmax > 0.0) || !gmax.is_finite() {
        return None;
    }
    let gmin = g[imax..].iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = (100.0 * gmin).max(1e-13 * gmax);
    let start = (imax..g.len()).find(|&i| g[i] <= 0.1 * gmax)?;
    let end = (start..g.len()).find(|&i| g[i] < floor).unwrap_or(g.len());
    if end < start + 3 {
        return None;
    }
    let (ts, ls): (Vec<f64>, Vec<f64>) = (start..end).map(|i| (t[i], g[i].ln())).unzip();
    let hi = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ls.iter().copied().fold(f64::INFINITY, f64::min);
    if (hi - lo) / std::f64::consts::LN_10 < 2.0 {
        return None;
    }
    Some(-slope(&ts, &ls))
}

pub fn metrics<T: Real>(traj: &Trajectory<T>, manifold: Option<&ManifoldSolution<T>>, opts: &MetricsOptions) -> TrackingMetrics {
    let t: Vec<f64> = traj.t.iter().map(|v| v.to_f64_lossy()).collect();
    let g = traj.g_norms();
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(0.0));
    let tail_start = t1 - opts.tail_fraction * (t1 - t0);
    let tail: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= tail_start).collect();
    // NaN (undefined gradient) poisons the supremum on purpose
    let tail_sup_g = tail.iter().map(|&i| g[i]).fold(0.0, |a: f64, v| if v.is_nan() || a.is_nan() { f64::NAN } else { a.max(v) });
    let state_tail = manifold.map(|m| {
        tail.iter().map(|&i| (&traj.x[i] - m.pi_at(&traj.w[i])).norm().to_f64_lossy()).fold(0.0, f64::max)
    });
    TrackingMetrics {
        tail_sup_g,
        rate_fit: decay_rate(&t, &g),
        settled: tail_sup_g <= opts.tolerance,
        state_tail,
        tail_start,
        samples: t.len(),
    }
}
