use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::pbh::is_stabilizable;
use crate::linalg::riccati::solve_care;
use crate::linalg::spectrum::{eigendecompose, Spectrum};
use crate::linalg::subspace::controllable_subspace;
use crate::scalar::{cabs, Real};

/// Desired closed-loop pole location.
#[derive(Debug, Clone, PartialEq)]
pub enum PoleTarget<T: Real> {
    /// Any Hurwitz placement.
    Hurwitz,
    /// Real parts inside `[min(a,b), max(a,b)]` (both negative).
    Interval(T, T),
    /// Exact pole set, closed under conjugation.
    Exact(Vec<Complex<T>>),
}

impl<T: Real> PoleTarget<T> {
    pub fn interval(a: T, b: T) -> Self {
        PoleTarget::Interval(a.min(b), a.max(b))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementOptions {
    /// Seed for the random input mixing used by multi-input exact placement.
    pub seed: u64,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions { seed: 0x5eed }
    }
}

pub fn place_state_feedback<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, target: &PoleTarget<T>) -> Result<DMatrix<T>> {
    place_state_feedback_with(a, b, target, &PlacementOptions::default())
}

/// Gain `K` with `A + B K` Hurwitz (and inside `target` when attainable).
pub fn place_state_feedback_with<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    target: &PoleTarget<T>,
    opts: &PlacementOptions,
) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::invalid("place_state_feedback: inconsistent dimensions"));
    }
    if !is_stabilizable(a, b)? {
        return Err(Error::Synthesis("pair (A, B) is not stabilizable".into()));
    }
    let k = match target {
        PoleTarget::Hurwitz => {
            if eigendecompose(a)?.is_hurwitz() {
                DMatrix::zeros(m, n)
            } else {
                care_gain(a, b, T::zero(), T::one())?
            }
        }
        PoleTarget::Interval(lo, hi) => {
            let (lo, hi) = (lo.min(*hi), lo.max(*hi));
            if hi >= T::zero() {
                return Err(Error::invalid("pole interval must lie in the open left half-plane"));
            }
            interval_gain(a, b, lo, hi, opts)?
        }
        PoleTarget::Exact(poles) => {
            if poles.len() != n {
                return Err(Error::invalid(format!("expected {n} target poles, got {}", poles.len())));
            }
            exact_gain(a, b, poles, opts)?
        }
    };
    let spec = closed_loop_spectrum(a, b, &k)?;
    if !spec.is_hurwitz() {
        return Err(Error::Synthesis(format!(
            "placement post-condition failed: max Re eig(A+BK) = {:e}",
            spec.max_real().to_f64_lossy()
        )));
    }
    Ok(k)
}

/// Observer gain `L` with `A_L - L C_L` Hurwitz, by duality.
pub fn place_observer_gain<T: Real>(a_l: &DMatrix<T>, c_l: &DMatrix<T>, target: &PoleTarget<T>) -> Result<DMatrix<T>> {
    place_observer_gain_with(a_l, c_l, target, &PlacementOptions::default())
}

pub fn place_observer_gain_with<T: Real>(
    a_l: &DMatrix<T>,
    c_l: &DMatrix<T>,
    target: &PoleTarget<T>,
    opts: &PlacementOptions,
) -> Result<DMatrix<T>> {
    if c_l.ncols() != a_l.nrows() {
        return Err(Error::invalid("place_observer_gain: inconsistent dimensions"));
    }
    match place_state_feedback_with(&a_l.transpose(), &c_l.transpose(), target, opts) {
        Ok(k) => Ok(-k.transpose()),
        Err(Error::Synthesis(msg)) if msg.contains("not stabilizable") => {
            Err(Error::Synthesis("pair (C_L, A_L) is not detectable".into()))
        }
        Err(e) => Err(e),
    }
}

pub fn closed_loop_spectrum<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, k: &DMatrix<T>) -> Result<Spectrum<T>> {
    eigendecompose(&(a + b * k))
}

fn in_interval<T: Real>(spec: &Spectrum<T>, lo: T, hi: T) -> bool {
    let tol = T::lit(1e-9) * T::one().max(lo.abs());
    spec.eigenvalues.iter().all(|z| z.re >= lo - tol && z.re <= hi + tol)
}

/// `K = -B' X` for the CARE of `(A + shift I, B, rho I, I)`.
fn care_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, shift: T, rho: T) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = b.ncols();
    let a_s = a + DMatrix::<T>::identity(n, n) * shift;
    let q = DMatrix::<T>::identity(n, n) * rho;
    let r = DMatrix::<T>::identity(m, m);
    let x = solve_care(&a_s, b, &q, &r)?;
    Ok(-(b.transpose() * x))
}

fn min_real<T: Real>(spec: &Spectrum<T>) -> T {
    spec.eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(T::lit(f64::INFINITY), |a, b| a.min(b))
}

fn interval_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, lo: T, hi: T, opts: &PlacementOptions) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = b.ncols();
    if in_interval(&eigendecompose(a)?, lo, hi) {
        return Ok(DMatrix::zeros(m, n));
    }
    let shift = -hi;
    let shifted_ok = is_stabilizable(&(a + DMatrix::<T>::identity(n, n) * shift), b)?;
    let mut best: Option<DMatrix<T>> = None;
    if shifted_ok {
        let eval = |rho: T| -> Result<(DMatrix<T>, T)> {
            let k = care_gain(a, b, shift, rho)?;
            let s = closed_loop_spectrum(a, b, &k)?;
            Ok((k, min_real(&s)))
        };
        let (k1, m1) = eval(T::one())?;
        if m1 >= lo {
            best = Some(k1);
        } else {
            let rho_lo = T::lit(1e-8);
            let (k0, m0) = eval(rho_lo)?;
            if m0 >= lo {
                // largest rho keeping every pole right of `lo`
                let (mut l, mut h) = (rho_lo.ln(), T::zero());
                let mut kb = k0;
                for _ in 0..50 {
                    let mid = (l + h) * T::lit(0.5);
                    let (k, mr) = eval(mid.exp())?;
                    if mr >= lo {
                        l = mid;
                        kb = k;
                    } else {
                        h = mid;
                    }
                }
                best = Some(kb);
            } else {
                best = Some(k0);
            }
        }
    }
    if let Some(k) = &best {
        if in_interval(&closed_loop_spectrum(a, b, k)?, lo, hi) {
            return Ok(k.clone());
        }
    }
    // Direct assignment at interior points of the interval.
    let controllable = controllable_subspace(a, b)?.dim() == n;
    if controllable {
        let width = hi - lo;
        let nf = T::from_usize(n).unwrap();
        let poles: Vec<Complex<T>> = (0..n)
            .map(|i| Complex::new(lo + width * (T::from_usize(i).unwrap() + T::lit(0.5)) / nf, T::zero()))
            .collect();
        let robust = if m >= 2 { robust_gain(a, b, &poles, opts).ok() } else { None };
        if let Some(k) = robust {
            if in_interval(&closed_loop_spectrum(a, b, &k)?, lo, hi) {
                return Ok(k);
            }
        }
        if let Ok(k) = exact_gain(a, b, &poles, opts) {
            if in_interval(&closed_loop_spectrum(a, b, &k)?, lo, hi) {
                return Ok(k);
            }
            if best.is_none() {
                best = Some(k);
            }
        }
    }
    match best {
        Some(k) => Ok(k),
        None => care_gain(a, b, T::zero(), T::one()),
    }
}

/// Real coefficients `c` of `prod (s - p_i) = s^n + c[n-1] s^{n-1} + ... + c[0]`.
pub(crate) fn poly_from_roots<T: Real>(poles: &[Complex<T>]) -> Result<Vec<T>> {
    let mut coeffs: Vec<Complex<T>> = vec![Complex::new(T::one(), T::zero())];
    for &p in poles {
        let mut next = vec![Complex::new(T::zero(), T::zero()); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * p;
        }
        coeffs = next;
    }
    let scale = coeffs.iter().map(|c| cabs(*c)).fold(T::one(), |a, b| a.max(b));
    if coeffs.iter().any(|c| c.im.abs() > T::lit(1e-9) * scale) {
        return Err(Error::invalid("target poles are not closed under conjugation"));
    }
    // drop the leading 1
    Ok(coeffs[..poles.len()].iter().map(|c| c.re).collect())
}

/// Single-input assignment `K = -e_n' Ctrb^-1 p(A)` on the balanced pair.
pub(crate) fn ackermann<T: Real>(a: &DMatrix<T>, b: &DVector<T>, poles: &[Complex<T>]) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let mut ab = a.clone();
    let d = nalgebra::linalg::balancing::balance_parlett_reinsch(&mut ab);
    let bb = b.component_div(&d);
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = bb.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = &ab * col;
    }
    let mut e_n = DVector::zeros(n);
    e_n[n - 1] = T::one();
    let y = ctrb
        .transpose()
        .lu()
        .solve(&e_n)
        .ok_or_else(|| Error::Synthesis("single-input pair is not controllable".into()))?;
    let coeffs = poly_from_roots(poles)?;
    // Horner: p(A) = (((A + c[n-1]) A + c[n-2]) A + ...) + c[0]
    let id = DMatrix::<T>::identity(n, n);
    let mut pa = id.clone();
    for i in (0..n).rev() {
        pa = &pa * &ab + &id * coeffs[i];
    }
    let k_bal = -(y.transpose() * pa);
    // undo the similarity: K = K_bal D^-1
    let mut k = DMatrix::zeros(1, n);
    for j in 0..n {
        k[(0, j)] = k_bal[(0, j)] / d[j];
    }
    if !crate::scalar::all_finite(k.iter().copied()) {
        return Err(Error::Synthesis("pole assignment produced non-finite gains".into()));
    }
    Ok(k)
}

/// Orthonormal basis of the complement of `range(m)`; `m` must have full
/// column rank.
fn complement<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let (n, k) = m.shape();
    let mut aug = DMatrix::zeros(n, k + n);
    aug.view_mut((0, 0), (n, k)).copy_from(m);
    aug.view_mut((0, k), (n, n)).fill_with_identity();
    let q = aug.qr().q();
    q.columns(k, n - k).into_owned()
}

/// Robust assignment of distinct real poles (Kautsky-Nichols-Van Dooren,
/// rank-one updates): picks closed-loop eigenvectors as close to orthogonal
/// as the input directions allow, which keeps `|K|` and the eigenvalue
/// condition numbers small.
fn robust_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, poles: &[Complex<T>], opts: &PlacementOptions) -> Result<DMatrix<T>> {
    let (n, m) = (a.nrows(), b.ncols());
    if poles.iter().any(|p| p.im != T::zero()) {
        return Err(Error::invalid("robust placement handles real poles only"));
    }
    let lam = DMatrix::from_diagonal(&DVector::from_iterator(n, poles.iter().map(|p| p.re)));
    if m >= n {
        // full row rank B: A + B K = diag(poles) with K = B^+ (diag - A)
        let svd = b.clone().svd(true, true);
        let smin = svd.singular_values.iter().copied().fold(T::lit(f64::INFINITY), |x, y| x.min(y));
        if svd.singular_values.len() < n || smin <= T::lit(1e-10) * svd.singular_values.max() {
            return Err(Error::invalid("robust placement with m >= n needs B of full row rank"));
        }
        let pinv = svd.pseudo_inverse(T::zero()).map_err(|e| Error::numerical(e.to_string()))?;
        return Ok(pinv * (lam - a));
    }
    let mut aug = DMatrix::zeros(n, m + n);
    aug.view_mut((0, 0), (n, m)).copy_from(b);
    aug.view_mut((0, m), (n, n)).fill_with_identity();
    let qr = aug.qr();
    let (q, r) = (qr.q(), qr.r());
    let z = r.view((0, 0), (m, m)).into_owned();
    let zinv = z.try_inverse().ok_or_else(|| Error::Synthesis("B is rank deficient".into()))?;
    let (u0, u1) = (q.columns(0, m).into_owned(), q.columns(m, n - m).into_owned());
    let id = DMatrix::<T>::identity(n, n);
    let s: Vec<DMatrix<T>> = poles
        .iter()
        .map(|p| complement(&((a - &id * p.re).transpose() * &u1)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::zeros(n, n);
    for (j, sj) in s.iter().enumerate() {
        let c = DVector::from_fn(sj.ncols(), |_, _| T::lit(rng.random_range(-1.0..1.0)));
        let v = sj * c;
        x.set_column(j, &(&v / v.norm()));
    }
    for _ in 0..20 {
        for j in 0..n {
            let others = x.clone().remove_column(j);
            let y = complement(&others).column(0).into_owned();
            let v = &s[j] * (s[j].transpose() * y);
            let nv = v.norm();
            if nv > T::lit(1e-12) {
                x.set_column(j, &(v / nv));
            }
        }
    }
    let xinv = x.clone().try_inverse().ok_or_else(|| Error::Synthesis("eigenvector matrix is singular".into()))?;
    let k = zinv * u0.transpose() * (&x * lam * xinv - a);
    if !crate::scalar::all_finite(k.iter().copied()) {
        return Err(Error::Synthesis("robust placement produced non-finite gains".into()));
    }
    Ok(k)
}

/// Exact assignment; multi-input pairs are reduced to a single input `B v`
/// after an optional random pre-feedback `K0` (Heymann's lemma).
fn exact_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, poles: &[Complex<T>], opts: &PlacementOptions) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = b.ncols();
    if controllable_subspace(a, b)?.dim() != n {
        return Err(Error::Synthesis("exact placement needs a controllable pair".into()));
    }
    if m == 1 {
        return ackermann(a, &b.column(0).into_owned(), poles);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for attempt in 0..20 {
        let k0 = if attempt == 0 {
            DMatrix::zeros(m, n)
        } else {
            DMatrix::from_fn(m, n, |_, _| T::lit(rng.random_range(-1.0..1.0)))
        };
        let v = DVector::from_fn(m, |_, _| T::lit(rng.random_range(-1.0..1.0)));
        let v = &v / v.norm();
        let a0 = a + b * &k0;
        let bv = b * &v;
        if controllable_subspace(&a0, &DMatrix::from_column_slice(n, 1, bv.as_slice()))?.dim() != n {
            continue;
        }
        if let Ok(k1) = ackermann(&a0, &bv, poles) {
            return Ok(k0 + v * k1);
        }
    }
    Err(Error::Synthesis("no cyclic input direction found for exact placement".into()))
}
