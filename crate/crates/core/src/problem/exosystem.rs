use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

type Field<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// One block of a block-diagonal linear exosystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel<T: Real> {
    /// `[[0, 1], [-omega^2, 0]]`, initial state `(a, b)`.
    Harmonic { omega: T, a: T, b: T },
    /// `S = 0` (1x1), initial state `value`.
    Constant { value: T },
}

impl<T: Real> Channel<T> {
    fn dim(&self) -> usize {
        match self {
            Channel::Harmonic { .. } => 2,
            Channel::Constant { .. } => 1,
        }
    }
}

/// Stand-in for the limit set of the exosystem.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingRegion<T: Real> {
    Box { lo: DVector<T>, hi: DVector<T> },
    Ball { center: DVector<T>, radius: T },
}

impl<T: Real> SamplingRegion<T> {
    pub fn dim(&self) -> usize {
        match self {
            SamplingRegion::Box { lo, .. } => lo.len(),
            SamplingRegion::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, w: &DVector<T>) -> bool {
        match self {
            SamplingRegion::Box { lo, hi } => w.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *v >= *l && *v <= *h),
            SamplingRegion::Ball { center, radius } => (w - center).norm() <= *radius,
        }
    }

    /// Maps a point of the unit cube into the region; `None` if the point is
    /// rejected (ball outside the inscribed sphere).
    pub fn from_unit(&self, unit: &[f64]) -> Option<DVector<T>> {
        match self {
            SamplingRegion::Box { lo, hi } => Some(DVector::from_fn(lo.len(), |i, _| {
                lo[i] + (hi[i] - lo[i]) * T::lit(unit[i])
            })),
            SamplingRegion::Ball { center, radius } => {
                let v = DVector::from_fn(center.len(), |i, _| T::lit(2.0 * unit[i] - 1.0));
                if v.norm() > T::one() {
                    None
                } else {
                    Some(center + v * *radius)
                }
            }
        }
    }

    /// Axis-aligned bounds.
    pub fn bounds(&self) -> (DVector<T>, DVector<T>) {
        match self {
            SamplingRegion::Box { lo, hi } => (lo.clone(), hi.clone()),
            SamplingRegion::Ball { center, radius } => {
                (center.map(|c| c - *radius), center.map(|c| c + *radius))
            }
        }
    }
}

/// Disturbance generator `w' = s(w)`.
#[derive(Clone)]
pub struct Exosystem<T: Real> {
    /// Linearization at the origin.
    pub s: DMatrix<T>,
    pub region: SamplingRegion<T>,
    pub initial: DVector<T>,
    /// Nonlinear field; `None` means `s(w) = S w`.
    field: Option<Field<T>>,
    channels: Option<Vec<Channel<T>>>,
}

impl<T: Real> std::fmt::Debug for Exosystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Exosystem")
            .field("s", &self.s)
            .field("region", &self.region)
            .field("initial", &self.initial)
            .field("channels", &self.channels)
            .finish()
    }
}

impl<T: Real> Exosystem<T> {
    /// Linear exosystem `w' = S w`.
    pub fn linear(s: DMatrix<T>, initial: DVector<T>, region: SamplingRegion<T>) -> Result<Self> {
        let p = s.nrows();
        if !s.is_square() || initial.len() != p || region.dim() != p {
            return Err(Error::invalid("exosystem: inconsistent dimensions"));
        }
        Ok(Exosystem { s, region, initial, field: None, channels: None })
    }

    /// Nonlinear exosystem with a given linearization at the origin.
    pub fn nonlinear(
        field: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        s: DMatrix<T>,
        initial: DVector<T>,
        region: SamplingRegion<T>,
    ) -> Result<Self> {
        let mut e = Self::linear(s, initial, region)?;
        e.field = Some(Arc::new(field));
        Ok(e)
    }

    /// Block-diagonal exosystem from channels; region defaults to the
    /// trajectory bounding box with 20% margin.
    pub fn from_channels(channels: Vec<Channel<T>>) -> Result<Self> {
        let p: usize = channels.iter().map(|c| c.dim()).sum();
        let mut s = DMatrix::zeros(p, p);
        let mut w0 = DVector::zeros(p);
        let mut lo = DVector::zeros(p);
        let mut hi = DVector::zeros(p);
        let margin = T::lit(1.2);
        let mut k = 0;
        for ch in &channels {
            match *ch {
                Channel::Harmonic { omega, a, b } => {
                    if omega <= T::zero() || !omega.is_finite_val() {
                        return Err(Error::invalid("harmonic channel needs omega > 0"));
                    }
                    s[(k, k + 1)] = T::one();
                    s[(k + 1, k)] = -omega * omega;
                    w0[k] = a;
                    w0[k + 1] = b;
                    // w1 = a cos + (b/omega) sin, w2 = omega * (amplitude) * ...
                    let amp = (a * a + (b / omega) * (b / omega)).sqrt();
                    lo[k] = -amp * margin;
                    hi[k] = amp * margin;
                    lo[k + 1] = -amp * omega * margin;
                    hi[k + 1] = amp * omega * margin;
                    k += 2;
                }
                Channel::Constant { value } => {
                    w0[k] = value;
                    let r = value.abs().max(T::one()) * margin;
                    lo[k] = -r;
                    hi[k] = r;
                    k += 1;
                }
            }
        }
        Ok(Exosystem {
            s,
            region: SamplingRegion::Box { lo, hi },
            initial: w0,
            field: None,
            channels: Some(channels),
        })
    }

    pub fn with_region(mut self, region: SamplingRegion<T>) -> Result<Self> {
        if region.dim() != self.dim() {
            return Err(Error::invalid("sampling region dimension mismatch"));
        }
        self.region = region;
        Ok(self)
    }

    pub fn with_initial(mut self, w0: DVector<T>) -> Result<Self> {
        if w0.len() != self.dim() {
            return Err(Error::invalid("exosystem initial condition dimension mismatch"));
        }
        self.initial = w0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn channels(&self) -> Option<&[Channel<T>]> {
        self.channels.as_deref()
    }

    pub fn vector_field(&self, w: &DVector<T>) -> DVector<T> {
        match &self.field {
            Some(f) => f(w),
            None => &self.s * w,
        }
    }

    /// Exact state at time `t` from `w0`, for channel-built exosystems.
    pub fn closed_form(&self, t: T, w0: &DVector<T>) -> Option<DVector<T>> {
        let chans = self.channels.as_ref()?;
        let mut out = DVector::zeros(self.dim());
        let mut k = 0;
        for ch in chans {
            match *ch {
                Channel::Harmonic { omega, .. } => {
                    let (sn, cs) = (omega * t).sin_cos();
                    let (a, b) = (w0[k], w0[k + 1]);
                    out[k] = cs * a + sn * b / omega;
                    out[k + 1] = -omega * sn * a + cs * b;
                    k += 2;
                }
                Channel::Constant { .. } => {
                    out[k] = w0[k];
                    k += 1;
                }
            }
        }
        Some(out)
    }
}

/// Harmonic exosystem with `w(0) = (rho_1, 0, rho_2, 0, ...)`.
pub fn harmonic_exosystem<T: Real>(frequencies: &[T], amplitudes: &[T]) -> Result<Exosystem<T>> {
    if frequencies.len() != amplitudes.len() {
        return Err(Error::invalid("one amplitude per frequency is required"));
    }
    Exosystem::from_channels(
        frequencies
            .iter()
            .zip(amplitudes)
            .map(|(&omega, &a)| Channel::Harmonic { omega, a, b: T::zero() })
            .collect(),
    )
}

/// Constant disturbance, `S = 0`.
pub fn constant_exosystem<T: Real>(values: &[T]) -> Result<Exosystem<T>> {
    Exosystem::from_channels(values.iter().map(|&value| Channel::Constant { value }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigendecompose;

    #[test]
    fn benchmark_disturbance_layout() {
        let e = harmonic_exosystem(&[1.0f64, 10.0], &[1.0, 0.5]).unwrap();
        assert_eq!(e.initial.as_slice(), &[1.0, 0.0, 0.5, 0.0]);
        assert_eq!(e.s[(3, 2)], -100.0);
        assert_eq!(e.s[(0, 1)], 1.0);
        let spec = eigendecompose(&e.s).unwrap();
        assert!(spec.eigenvalues.iter().all(|z| z.re.abs() < 1e-10));
    }

    #[test]
    fn closed_form_quarter_period() {
        let e = harmonic_exosystem(&[2.0], &[1.0]).unwrap();
        let w = e.closed_form(std::f64::consts::FRAC_PI_4, &e.initial).unwrap();
        assert!(w[0].abs() < 1e-15);
        assert!((w[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_channel() {
        let e = constant_exosystem(&[0.3]).unwrap();
        assert_eq!(e.s, DMatrix::zeros(1, 1));
        assert_eq!(e.vector_field(&e.initial)[0], 0.0);
        assert!(e.region.contains(&DVector::from_vec(vec![1.0])));
    }

    #[test]
    fn default_region_covers_orbit() {
        let e = harmonic_exosystem(&[1.0, 10.0], &[1.0, 0.5]).unwrap();
        for k in 0..200 {
            let t = k as f64 * 0.01 * std::f64::consts::PI;
            assert!(e.region.contains(&e.closed_form(t, &e.initial).unwrap()));
        }
    }

    #[test]
    fn rejects_nonpositive_frequency() {
        assert!(harmonic_exosystem(&[0.0], &[1.0]).is_err());
    }
}
