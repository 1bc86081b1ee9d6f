//! Random test instances: solvable LQ problems and structured pairs with a
//! known stabilizability answer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{check_necessary_conditions, eigendecompose};
use crate::problem::{harmonic_exosystem, lq_problem, LqProblem};

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Real spectrum drawn uniformly from `[lo, hi]`, mildly non-normal.
pub fn random_matrix_with_spectrum<R: Rng + ?Sized>(eigs: &[f64], rng: &mut R) -> DMatrix<f64> {
    let n = eigs.len();
    let v = random_orthogonal(n, rng);
    let mut t = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    for i in 0..n {
        for j in i + 1..n {
            t[(i, j)] = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    &v * t * v.transpose()
}

#[derive(Debug, Clone)]
pub struct LqInstanceSpec {
    pub max_n: usize,
    pub max_m: usize,
    pub max_q: usize,
    /// Harmonic channels only, so `p` is even and at most this.
    pub max_p: usize,
    pub spectrum: (f64, f64),
    pub lambda: (f64, f64),
    pub omega: (f64, f64),
}

impl Default for LqInstanceSpec {
    fn default() -> Self {
        LqInstanceSpec {
            max_n: 4,
            max_m: 4,
            max_q: 4,
            max_p: 4,
            spectrum: (-3.0, -0.5),
            lambda: (0.01, 1.0),
            omega: (0.2, 3.0),
        }
    }
}

/// Draws until the instance passes the necessary conditions, the extended
/// pair is detectable and the spectra of `A` and `S` are 1e-3 apart.
pub fn random_lq_instance<R: Rng + ?Sized>(spec: &LqInstanceSpec, rng: &mut R) -> Result<LqProblem<f64>> {
    for _ in 0..200 {
        let n = rng.random_range(1..=spec.max_n);
        let m = rng.random_range(1..=spec.max_m);
        let q = rng.random_range(1..=spec.max_q);
        let blocks = rng.random_range(1..=(spec.max_p / 2).max(1));
        let eigs: Vec<f64> = (0..n).map(|_| rng.random_range(spec.spectrum.0..=spec.spectrum.1)).collect();
        let a = random_matrix_with_spectrum(&eigs, rng);
        let b = gaussian_matrix(n, m, rng);
        let p = gaussian_matrix(n, 2 * blocks, rng);
        let c = gaussian_matrix(q, n, rng);
        let qm = gaussian_matrix(q, 2 * blocks, rng);
        let mut freqs: Vec<f64> = Vec::new();
        while freqs.len() < blocks {
            let f = rng.random_range(spec.omega.0..=spec.omega.1);
            if freqs.iter().all(|g| (g - f).abs() > 0.2) {
                freqs.push(f);
            }
        }
        let amps: Vec<f64> = (0..blocks).map(|_| rng.random_range(0.5..=1.5)).collect();
        let lambda = rng.random_range(spec.lambda.0..=spec.lambda.1);
        let exo = harmonic_exosystem(&freqs, &amps)?;

        let sa = eigendecompose(&a)?;
        let ss = eigendecompose(&exo.s)?;
        let gap = sa
            .eigenvalues
            .iter()
            .flat_map(|x| ss.eigenvalues.iter().map(move |y| (x - y).norm()))
            .fold(f64::INFINITY, f64::min);
        if gap < 1e-3 {
            continue;
        }
        let lq = match lq_problem(a, b, p, c, qm, lambda, exo) {
            Ok(lq) => lq,
            Err(_) => continue,
        };
        let lin = lq.problem.linearize()?;
        let rep = check_necessary_conditions(&lin)?;
        if rep.all_pass() && rep.detectable_extended {
            return Ok(lq);
        }
    }
    Err(Error::numerical("no admissible random LQ instance in 200 draws"))
}

/// Pair `(A, B)` with a known stabilizability answer.
#[derive(Debug, Clone)]
pub struct PbhInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub stabilizable: bool,
}

/// `A = V [[A11, A12], [0, A22]] V'`, `B = V [B1; 0]` with `(A11, B1)`
/// generic and the spectrum of `A22` chosen stable or not. Eigenvalues stay
/// at least 0.2 away from the imaginary axis and from each other.
pub fn random_pbh_instance<R: Rng + ?Sized>(max_n: usize, rng: &mut R) -> PbhInstance {
    let n = rng.random_range(1..=max_n);
    let n2 = rng.random_range(0..n);
    let n1 = n - n2;
    let m = rng.random_range(1..=n1.min(3));
    let mut eigs: Vec<f64> = Vec::with_capacity(n);
    let draw = |rng: &mut R, eigs: &mut Vec<f64>, sign: f64| loop {
        let v = sign * rng.random_range(0.2..=3.0);
        if eigs.iter().all(|e| (e - v).abs() > 0.2) {
            eigs.push(v);
            break;
        }
    };
    for _ in 0..n1 {
        let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        draw(rng, &mut eigs, s);
    }
    let hidden_unstable = n2 > 0 && rng.random_bool(0.5);
    for k in 0..n2 {
        let s = if hidden_unstable && k == 0 { 1.0 } else if rng.random_bool(0.3) && hidden_unstable { 1.0 } else { -1.0 };
        draw(rng, &mut eigs, s);
    }
    let mut t = DMatrix::from_diagonal(&DVector::from_column_slice(&eigs));
    for i in 0..n {
        for j in i + 1..n {
            {
                t[(i, j)] = 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let mut b0 = DMatrix::zeros(n, m);
    b0.view_mut((0, 0), (n1, m)).copy_from(&gaussian_matrix(n1, m, rng));
    let v = random_orthogonal(n, rng);
    PbhInstance { a: &v * t * v.transpose(), b: v * b0, stabilizable: !hidden_unstable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_stabilizable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(5, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).norm() < 1e-13);
    }

    #[test]
    fn lq_instances_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let lq = random_lq_instance(&LqInstanceSpec::default(), &mut rng).unwrap();
            let s = eigendecompose(&lq.plant.a).unwrap();
            assert!(s.max_real() <= -0.5 + 1e-9 && s.is_hurwitz());
            assert_eq!(lq.problem.exosystem.dim() % 2, 0);
        }
    }

    #[test]
    fn pbh_instances_match_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [0usize; 2];
        for _ in 0..100 {
            let inst = random_pbh_instance(6, &mut rng);
            assert_eq!(is_stabilizable(&inst.a, &inst.b).unwrap(), inst.stabilizable);
            seen[inst.stabilizable as usize] += 1;
        }
        assert!(seen[0] > 10 && seen[1] > 10, "{seen:?}");
    }
}
