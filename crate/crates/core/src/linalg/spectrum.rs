use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// Real part below `-STABILITY_MARGIN` counts as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Eigenvalues of a real square matrix with a stability classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    /// Sorted by real part, then imaginary part. Conjugate pairs are adjacent.
    pub eigenvalues: Vec<Complex<T>>,
    pub stable_count: usize,
    pub marginal_count: usize,
    pub unstable_count: usize,
    pub margin: T,
}

impl<T: Real> Spectrum<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_hurwitz(&self) -> bool {
        self.stable_count == self.eigenvalues.len()
    }

    /// Largest real part (`-inf` for an empty spectrum).
    pub fn max_real(&self) -> T {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(T::lit(f64::NEG_INFINITY), |a, b| a.max(b))
    }

    /// Eigenvalues with real part `>= -margin` (the closed right half-plane).
    pub fn non_stable(&self) -> Vec<Complex<T>> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|z| z.re >= -self.margin)
            .collect()
    }
}

pub fn eigendecompose<T: Real>(m: &DMatrix<T>) -> Result<Spectrum<T>> {
    eigendecompose_with_margin(m, T::lit(STABILITY_MARGIN))
}

pub fn eigendecompose_with_margin<T: Real>(m: &DMatrix<T>, margin: T) -> Result<Spectrum<T>> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "eigendecompose needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m.iter().copied()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut eigenvalues = eigenvalues(m)?;
    eigenvalues.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut stable = 0;
    let mut marginal = 0;
    let mut unstable = 0;
    for z in &eigenvalues {
        if z.re < -margin {
            stable += 1;
        } else if z.re <= margin {
            marginal += 1;
        } else {
            unstable += 1;
        }
    }
    Ok(Spectrum {
        eigenvalues,
        stable_count: stable,
        marginal_count: marginal,
        unstable_count: unstable,
        margin,
    })
}

/// Raw eigenvalues (unsorted) via balancing plus real Schur form.
pub(crate) fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut b = m.clone();
    nalgebra::linalg::balancing::balance_parlett_reinsch(&mut b);
    let schur = nalgebra::Schur::try_new(b, T::eps(), 1000 * n.max(10))
        .ok_or_else(|| Error::numerical("Schur iteration did not converge"))?;
    let ev = schur.complex_eigenvalues();
    let mut out: Vec<Complex<T>> = ev.iter().copied().collect();
    // Make conjugate pairs exact so downstream counts see them together.
    for i in 0..out.len() {
        if out[i].im != T::zero() {
            if let Some(j) = (0..out.len()).find(|&j| {
                j != i && (out[j].re - out[i].re).abs() <= T::lit(1e3) * T::eps() * (T::one() + out[i].re.abs())
                    && (out[j].im + out[i].im).abs() <= T::lit(1e3) * T::eps() * (T::one() + out[i].im.abs())
            }) {
                let re = (out[i].re + out[j].re) * T::lit(0.5);
                let im = (out[i].im - out[j].im).abs() * T::lit(0.5);
                let sign = if out[i].im > T::zero() { T::one() } else { -T::one() };
                out[i] = Complex::new(re, sign * im);
                out[j] = Complex::new(re, -sign * im);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_marginal() {
        let s = eigendecompose(&mat![0.0, 1.0; -1.0, 0.0]).unwrap();
        assert_eq!(s.marginal_count, 2);
        assert!((s.eigenvalues[0].im.abs() - 1.0).abs() < 1e-14);
        assert_eq!(s.eigenvalues[0].im, -s.eigenvalues[1].im);
    }

    #[test]
    fn diagonal_stable() {
        let s = eigendecompose(&mat![-1.0, 0.0; 0.0, -2.0]).unwrap();
        assert_eq!(s.stable_count, 2);
        assert!(s.is_hurwitz());
    }

    #[test]
    fn companion_roots() {
        // roots of s^2 + 3 s + 2 by the quadratic formula
        let disc: f64 = 9.0 - 8.0;
        let r1 = (-3.0 + disc.sqrt()) / 2.0;
        let r2 = (-3.0 - disc.sqrt()) / 2.0;
        let s = eigendecompose(&mat![0.0, 1.0; -2.0, -3.0]).unwrap();
        assert!((s.eigenvalues[0].re - r2).abs() < 1e-12);
        assert!((s.eigenvalues[1].re - r1).abs() < 1e-12);
    }

    #[test]
    fn margin_classification() {
        let s = eigendecompose(&mat![-1e-12, 0.0; 0.0, 1.0]).unwrap();
        assert_eq!((s.stable_count, s.marginal_count, s.unstable_count), (0, 1, 1));
    }

    #[test]
    fn rejects_non_square() {
        assert!(eigendecompose(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn works_in_f32() {
        let s = eigendecompose(&nalgebra::dmatrix![0.0f32, 1.0; -2.0, -3.0]).unwrap();
        assert!(s.is_hurwitz());
    }
}
