//! Halton sequences with skip/leap subsampling and an optional digit scramble.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const DEFAULT_SKIP: u64 = 1000;
pub const DEFAULT_LEAP: u64 = 100;

/// The first 100 primes, used as bases.
pub const PRIMES: [u64; 100] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307,
    311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383, 389, 397, 401, 409, 419, 421,
    431, 433, 439, 443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521, 523, 541,
];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f *= inv;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Halton generator over the index set `{skip + 1 + k (leap + 1)}`.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    skip: u64,
    leap: u64,
    scramble: Option<Vec<Vec<u64>>>,
}

impl Halton {
    pub fn new(dim: usize, skip: u64, leap: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "Halton dimension must be positive".into(),
            ));
        }
        if dim > PRIMES.len() {
            return Err(Error::UnsupportedDimension {
                dim,
                reason: format!(
                    "Halton bases are limited to the first {} primes",
                    PRIMES.len()
                ),
            });
        }
        if let Some(&b) = PRIMES[..dim]
            .iter()
            .find(|&&b| (leap + 1).is_multiple_of(b))
        {
            log::warn!(
                "leap + 1 = {} is a multiple of base {b}; that coordinate degenerates",
                leap + 1
            );
        }
        Ok(Halton {
            dim,
            skip,
            leap,
            scramble: None,
        })
    }

    /// Applies one random digit permutation per base, drawn from `seed`.
    ///
    /// This is a generic random digit scramble, not a reproduction of any
    /// particular library's scrambling.
    pub fn scrambled(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = PRIMES[..self.dim]
            .iter()
            .map(|&b| {
                let mut p: Vec<u64> = (0..b).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        self.scramble = Some(perms);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn index(&self, k: u64) -> u64 {
        self.skip + 1 + k * (self.leap + 1)
    }

    /// The `k`-th point (0-based).
    pub fn point(&self, k: u64) -> Vec<f64> {
        let index = self.index(k);
        (0..self.dim)
            .map(|i| match &self.scramble {
                None => radical_inverse(index, PRIMES[i]),
                Some(perms) => scrambled_radical_inverse(index, PRIMES[i], &perms[i]),
            })
            .collect()
    }

    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u64).map(|k| self.point(k)).collect()
    }
}

fn scrambled_radical_inverse(mut index: u64, base: u64, perm: &[u64]) -> f64 {
    // permute enough digits that trailing zeros still reach double resolution
    let digits = (53.0 / (base as f64).log2()).ceil() as usize;
    let inv = 1.0 / base as f64;
    let mut f = 1.0;
    let mut r = 0.0;
    for _ in 0..digits {
        f *= inv;
        r += f * perm[(index % base) as usize] as f64;
        index /= base;
    }
    r.min(1.0 - f64::EPSILON / 2.0)
}

/// `n` Halton points in `d` dimensions.
pub fn halton(d: usize, n: usize, skip: u64, leap: u64) -> Result<Vec<Vec<f64>>> {
    Ok(Halton::new(d, skip, leap)?.points(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_der_corput_base_two() {
        let p = halton(1, 3, 0, 0).unwrap();
        assert_eq!(p, vec![vec![0.5], vec![0.25], vec![0.75]]);
    }

    #[test]
    fn first_two_dimensional_points() {
        let p = halton(2, 3, 0, 0).unwrap();
        assert_eq!(p[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(p[1][0], 0.25);
        assert!((p[1][1] - 2.0 / 3.0).abs() < 1e-16);
        assert_eq!(p[2][0], 0.75);
        assert!((p[2][1] - 1.0 / 9.0).abs() < 1e-16);
    }

    #[test]
    fn skip_and_leap_select_indices() {
        let h = Halton::new(2, 1000, 100).unwrap();
        assert_eq!(
            h.point(0),
            vec![radical_inverse(1001, 2), radical_inverse(1001, 3)]
        );
        assert_eq!(
            h.point(3),
            vec![
                radical_inverse(1001 + 303, 2),
                radical_inverse(1001 + 303, 3)
            ]
        );
    }

    #[test]
    fn open_unit_interval() {
        for p in halton(10, 2000, DEFAULT_SKIP, DEFAULT_LEAP).unwrap() {
            assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        }
        let h = Halton::new(5, 0, 0).unwrap().scrambled(42);
        for p in h.points(1000) {
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }

    #[test]
    fn dimension_limits() {
        assert!(matches!(
            halton(101, 1, 0, 0),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(halton(100, 1, 0, 0).is_ok());
        assert!(halton(0, 1, 0, 0).is_err());
    }

    #[test]
    fn product_integral_is_accurate() {
        let pts = halton(2, 1024, 0, 0).unwrap();
        let est = pts.iter().map(|p| p[0] * p[1]).sum::<f64>() / 1024.0;
        assert!((est - 0.25).abs() < 5e-3, "{est}");
    }

    #[test]
    fn scramble_is_seeded_and_keeps_stratification() {
        let a = Halton::new(2, 0, 0).unwrap().scrambled(7).points(64);
        let b = Halton::new(2, 0, 0).unwrap().scrambled(7).points(64);
        assert_eq!(a, b);
        // each base-2 stratum of width 1/64 still receives exactly one point
        let mut seen = [false; 64];
        for p in &a {
            seen[(p[0] * 64.0) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
