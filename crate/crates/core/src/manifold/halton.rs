use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut x) = (inv, 0.0);
    while i > 0 {
        x += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    x
}

/// Halton sequence in `[0, 1)^dim` with a seeded Cranley-Patterson shift.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Halton { dim, shift }
    }

    /// Point with index `i` (index 0 is skipped by callers wanting to avoid the corner).
    pub fn point(&self, i: u64) -> Vec<f64> {
        (0..self.dim)
            .map(|d| {
                let v = radical_inverse(i, PRIMES[d]) + self.shift[d];
                v - v.floor()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_two_prefix() {
        let v: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn stays_in_unit_cube_and_is_seeded() {
        let h = Halton::new(4, 7);
        for i in 0..1000 {
            assert!(h.point(i).iter().all(|&x| (0.0..1.0).contains(&x)));
        }
        assert_eq!(Halton::new(4, 7).point(3), h.point(3));
        assert_ne!(Halton::new(4, 8).point(3), h.point(3));
    }

    #[test]
    fn roughly_uniform() {
        let h = Halton::new(2, 1);
        let mean: f64 = (0..4096).map(|i| h.point(i)[1]).sum::<f64>() / 4096.0;
        assert!((mean - 0.5).abs() < 1e-3);
    }
}
