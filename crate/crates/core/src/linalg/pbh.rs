use nalgebra::{Complex, DMatrix, SVD};

use crate::error::{Error, Result};
use crate::linalg::linearization::LinearizationData;
use crate::linalg::spectrum::eigendecompose;
use crate::linalg::subspace::{
    controllable_subspace, intersect, unobservable_subspace, unstable_subspace, SubspaceBasis,
};
use crate::scalar::{cabs, Real};

/// Tolerance for the kernel test `[0 T] v = 0` of the inclusion condition.
pub const INCLUSION_TOL: f64 = 1e-8;
const PBH_RTOL: f64 = 1e-9;
const CLUSTER_TOL: f64 = 1e-6;

/// Non-stable eigenvalues of `a` with near-coincident values merged into their mean.
fn clustered_non_stable<T: Real>(a: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let spec = eigendecompose(a)?;
    let mut groups: Vec<(Complex<T>, usize)> = Vec::new();
    for z in spec.non_stable() {
        let tol = T::lit(CLUSTER_TOL) * (T::one() + cabs(z));
        match groups.iter_mut().find(|(c, k)| cabs(*c / T::from_usize(*k).unwrap() - z) <= tol) {
            Some((c, k)) => {
                *c += z;
                *k += 1;
            }
            None => groups.push((z, 1)),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(c, k)| c / T::from_usize(k).unwrap())
        .collect())
}

/// PBH rank test of `[A - lambda I, B]`; returns the first failing eigenvalue.
fn pbh_failure<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<Option<(Complex<T>, Vec<Complex<T>>)>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::invalid("PBH test: inconsistent dimensions"));
    }
    for lam in clustered_non_stable(a)? {
        let mut m = DMatrix::<Complex<T>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(a[(i, j)], T::zero());
            }
            m[(i, i)] -= lam;
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex::new(b[(i, j)], T::zero());
            }
        }
        let scale = T::one().max(m.norm());
        let svd = SVD::new(m, true, false);
        let smin = svd.singular_values[n - 1];
        if smin <= T::lit(PBH_RTOL) * scale {
            let u = svd.u.expect("requested U");
            let dir = u.column(n - 1).iter().map(|z| z.conj()).collect();
            return Ok(Some((lam, dir)));
        }
    }
    Ok(None)
}

/// PBH test at every eigenvalue with nonnegative real part.
pub fn is_stabilizable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    Ok(pbh_failure(a, b)?.is_none())
}

pub fn is_detectable<T: Real>(c: &DMatrix<T>, a: &DMatrix<T>) -> Result<bool> {
    if c.ncols() != a.nrows() {
        return Err(Error::invalid("detectability: C and A disagree"));
    }
    is_stabilizable(&a.transpose(), &c.transpose())
}

/// Subspace form of stabilizability: unstable subspace inside the controllable one.
pub fn is_stabilizable_by_subspaces<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let unstable = unstable_subspace(a)?;
    let ctrb = controllable_subspace(a, b)?;
    Ok(ctrb.contains(&unstable.columns, T::lit(1e-6)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness<T: Real> {
    pub item: &'static str,
    pub eigenvalue: Option<Complex<T>>,
    pub direction: Vec<Complex<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryConditionsReport<T: Real> {
    pub stabilizable: bool,
    pub detectable_plant: bool,
    pub detectable_extended: bool,
    pub inclusion_holds: bool,
    /// `sup |[0 T] v|` over unit vectors of the intersection.
    pub inclusion_violation: T,
    pub witnesses: Vec<Witness<T>>,
}

impl<T: Real> NecessaryConditionsReport<T> {
    /// Items 1) to 3) all hold.
    pub fn all_pass(&self) -> bool {
        self.stabilizable && self.detectable_plant && self.inclusion_holds
    }
}

pub fn check_necessary_conditions<T: Real>(lin: &LinearizationData<T>) -> Result<NecessaryConditionsReport<T>> {
    lin.validate()?;
    let d = lin.dims();
    let mut witnesses = Vec::new();

    let stab = pbh_failure(&lin.a, &lin.b)?;
    if let Some((lam, dir)) = &stab {
        witnesses.push(Witness { item: "stabilizable", eigenvalue: Some(*lam), direction: dir.clone() });
    }
    let det = pbh_failure(&lin.a.transpose(), &lin.c.transpose())?;
    if let Some((lam, dir)) = &det {
        witnesses.push(Witness { item: "detectable_plant", eigenvalue: Some(*lam), direction: dir.clone() });
    }
    let (a_l, c_l) = (lin.a_l(), lin.c_l());
    let det_ext = pbh_failure(&a_l.transpose(), &c_l.transpose())?;
    if let Some((lam, dir)) = &det_ext {
        witnesses.push(Witness { item: "detectable_extended", eigenvalue: Some(*lam), direction: dir.clone() });
    }

    let (inclusion_holds, inclusion_violation) = if det_ext.is_none() {
        (true, T::zero())
    } else {
        let unobs = unobservable_subspace(&c_l, &a_l)?;
        let unst = unstable_subspace(&a_l)?;
        let inter: SubspaceBasis<T> = intersect(&unobs, &unst, T::lit(1e-8));
        let mut zt = DMatrix::zeros(d.m, d.n + d.p);
        zt.view_mut((0, d.n), (d.m, d.p)).copy_from(&lin.t);
        let img = &zt * &inter.columns;
        let mut worst = T::zero();
        let mut worst_col = None;
        for j in 0..img.ncols() {
            let v = img.column(j).norm();
            if v > worst {
                worst = v;
                worst_col = Some(j);
            }
        }
        let ok = worst <= T::lit(INCLUSION_TOL) * T::one().max(lin.t.norm());
        if !ok {
            let j = worst_col.unwrap();
            witnesses.push(Witness {
                item: "inclusion",
                eigenvalue: None,
                direction: inter.columns.column(j).iter().map(|&v| Complex::new(v, T::zero())).collect(),
            });
        }
        (ok, worst)
    };

    Ok(NecessaryConditionsReport {
        stabilizable: stab.is_none(),
        detectable_plant: det.is_none(),
        detectable_extended: det_ext.is_none(),
        inclusion_holds,
        inclusion_violation,
        witnesses,
    })
}
