use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// Jacobians of plant, output, exosystem and gradient at the equilibrium.
///
/// `f ~ A x + B u + P w`, `y ~ C x + Q w`, `s ~ S w`, `g ~ R u + T w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationData<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub p: DMatrix<T>,
    pub q: DMatrix<T>,
    pub s: DMatrix<T>,
    pub t: DMatrix<T>,
    pub r: DMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub p: usize,
}

impl<T: Real> LinearizationData<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        p: DMatrix<T>,
        q: DMatrix<T>,
        s: DMatrix<T>,
        t: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        let lin = LinearizationData { a, b, c, p, q, s, t, r };
        lin.validate()?;
        Ok(lin)
    }

    pub fn dims(&self) -> Dims {
        Dims { n: self.a.nrows(), m: self.b.ncols(), q: self.c.nrows(), p: self.s.nrows() }
    }

    pub fn validate(&self) -> Result<()> {
        let Dims { n, m, q, p } = self.dims();
        let checks = [
            ("A", &self.a, n, n),
            ("B", &self.b, n, m),
            ("C", &self.c, q, n),
            ("P", &self.p, n, p),
            ("Q", &self.q, q, p),
            ("S", &self.s, p, p),
            ("T", &self.t, m, p),
            ("R", &self.r, m, m),
        ];
        for (name, mat, r, c) in checks {
            if mat.shape() != (r, c) {
                return Err(Error::invalid(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if !all_finite(mat.iter().copied()) {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// `A_L = [[A, P], [0, S]]`.
    pub fn a_l(&self) -> DMatrix<T> {
        let Dims { n, p, .. } = self.dims();
        let mut m = DMatrix::zeros(n + p, n + p);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a);
        m.view_mut((0, n), (n, p)).copy_from(&self.p);
        m.view_mut((n, n), (p, p)).copy_from(&self.s);
        m
    }

    /// `C_L = [C, Q]`.
    pub fn c_l(&self) -> DMatrix<T> {
        let Dims { n, q, p, .. } = self.dims();
        let mut m = DMatrix::zeros(q, n + p);
        m.view_mut((0, 0), (q, n)).copy_from(&self.c);
        m.view_mut((0, n), (q, p)).copy_from(&self.q);
        m
    }

    /// Largest Frobenius norm among the data matrices.
    pub fn input_norm(&self) -> T {
        [&self.a, &self.b, &self.c, &self.p, &self.q, &self.s, &self.t, &self.r]
            .iter()
            .map(|m| m.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn cast_f64(&self) -> LinearizationData<f64> {
        let c = |m: &DMatrix<T>| m.map(|v| v.to_f64_lossy());
        LinearizationData {
            a: c(&self.a),
            b: c(&self.b),
            c: c(&self.c),
            p: c(&self.p),
            q: c(&self.q),
            s: c(&self.s),
            t: c(&self.t),
            r: c(&self.r),
        }
    }
}
