use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of degree-`l` monomials in `p` variables, `C(l + p - 1, l)`.
pub fn monomial_count(p: usize, l: usize) -> usize {
    if p == 0 {
        return usize::from(l == 0);
    }
    let (mut num, mut den) = (1u128, 1u128);
    for i in 0..l {
        num *= (p + i) as u128;
        den *= (i + 1) as u128;
    }
    (num / den) as usize
}

/// Exponent vectors of degree `l`: index multisets `i1 <= ... <= il` in
/// lexicographic order, so `w1^l, w1^{l-1} w2, ..., wp^l`.
fn exponents_of_degree(p: usize, l: usize) -> Vec<Vec<u32>> {
    fn rec(p: usize, left: usize, start: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..p {
            cur[i] += 1;
            rec(p, left - 1, i, cur, out);
            cur[i] -= 1;
        }
    }
    let mut out = Vec::with_capacity(monomial_count(p, l));
    if p > 0 {
        rec(p, l, 0, &mut vec![0; p], &mut out);
    }
    out
}

/// All degree-`l` monomials of `w` in graded listing order.
pub fn poly_basis<T: Real>(w: &DVector<T>, l: usize) -> Result<DVector<T>> {
    if l == 0 {
        return Err(Error::invalid("poly_basis: degree must be at least 1"));
    }
    let exps = exponents_of_degree(w.len(), l);
    Ok(DVector::from_iterator(exps.len(), exps.iter().map(|e| monomial(w, e))))
}

fn monomial<T: Real>(w: &DVector<T>, e: &[u32]) -> T {
    e.iter().enumerate().fold(T::one(), |acc, (j, &k)| acc * w[j].powi(k as i32))
}

/// Monomials of degrees `1..=degree` stacked block by block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    pub p: usize,
    pub degree: usize,
    exps: Vec<Vec<u32>>,
    /// `offsets[l - 1]` is the first index of block `l`; last entry is the total.
    offsets: Vec<usize>,
}

impl MonomialBasis {
    pub fn new(p: usize, degree: usize) -> Self {
        let mut exps = Vec::new();
        let mut offsets = Vec::with_capacity(degree + 1);
        for l in 1..=degree {
            offsets.push(exps.len());
            exps.extend(exponents_of_degree(p, l));
        }
        offsets.push(exps.len());
        MonomialBasis { p, degree, exps, offsets }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exps
    }

    /// Index range of the degree-`l` block.
    pub fn block(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l - 1]..self.offsets[l]
    }

    fn powers<T: Real>(&self, w: &DVector<T>) -> Vec<Vec<T>> {
        (0..self.p)
            .map(|j| {
                let mut v = Vec::with_capacity(self.degree + 1);
                v.push(T::one());
                for k in 1..=self.degree {
                    let prev = v[k - 1];
                    v.push(prev * w[j]);
                }
                v
            })
            .collect()
    }

    pub fn eval<T: Real>(&self, w: &DVector<T>) -> DVector<T> {
        debug_assert_eq!(w.len(), self.p);
        let pw = self.powers(w);
        DVector::from_iterator(
            self.len(),
            self.exps
                .iter()
                .map(|e| e.iter().enumerate().fold(T::one(), |a, (j, &k)| a * pw[j][k as usize])),
        )
    }

    /// Values and the `len x p` Jacobian.
    pub fn eval_with_jacobian<T: Real>(&self, w: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        debug_assert_eq!(w.len(), self.p);
        let pw = self.powers(w);
        let mut val = DVector::zeros(self.len());
        let mut jac = DMatrix::zeros(self.len(), self.p);
        for (r, e) in self.exps.iter().enumerate() {
            val[r] = e.iter().enumerate().fold(T::one(), |a, (j, &k)| a * pw[j][k as usize]);
            for d in 0..self.p {
                if e[d] == 0 {
                    continue;
                }
                let mut v = T::lit(e[d] as f64);
                for (j, &k) in e.iter().enumerate() {
                    let kk = if j == d { k - 1 } else { k };
                    v *= pw[j][kk as usize];
                }
                jac[(r, d)] = v;
            }
        }
        (val, jac)
    }
}

/// `w -> C Theta(w)` without constant term, so the map vanishes at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap<T: Real> {
    pub basis: MonomialBasis,
    /// `out_dim x basis.len()`.
    pub coeffs: DMatrix<T>,
}

impl<T: Real> PolyMap<T> {
    pub fn zeros(p: usize, out_dim: usize, degree: usize) -> Self {
        let basis = MonomialBasis::new(p, degree);
        let coeffs = DMatrix::zeros(out_dim, basis.len());
        PolyMap { basis, coeffs }
    }

    /// Degree-1 map `w -> M w`, padded with zero blocks up to `degree`.
    pub fn linear(m: &DMatrix<T>, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("polynomial degree must be at least 1"));
        }
        let mut pm = PolyMap::zeros(m.ncols(), m.nrows(), degree);
        // degree-1 block is w1..wp in order
        pm.coeffs.columns_mut(0, m.ncols()).copy_from(m);
        Ok(pm)
    }

    pub fn from_coeffs(p: usize, degree: usize, coeffs: DMatrix<T>) -> Result<Self> {
        let basis = MonomialBasis::new(p, degree);
        if coeffs.ncols() != basis.len() {
            return Err(Error::invalid(format!(
                "expected {} coefficient columns for p = {p}, degree {degree}, got {}",
                basis.len(),
                coeffs.ncols()
            )));
        }
        Ok(PolyMap { basis, coeffs })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.p
    }
    pub fn out_dim(&self) -> usize {
        self.coeffs.nrows()
    }
    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn eval(&self, w: &DVector<T>) -> DVector<T> {
        &self.coeffs * self.basis.eval(w)
    }

    /// `out_dim x p` derivative, computed from the coefficients.
    pub fn jacobian(&self, w: &DVector<T>) -> DMatrix<T> {
        &self.coeffs * self.basis.eval_with_jacobian(w).1
    }

    /// Coefficients of the degree-`l` block (`psi_l`).
    pub fn block(&self, l: usize) -> DMatrix<T> {
        let r = self.basis.block(l);
        self.coeffs.columns(r.start, r.len()).into_owned()
    }
}
