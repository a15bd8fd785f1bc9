#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zjet_core::germ::{Coeff, Poly, PolyGermMap, Term};

/// Random germ with small rational coefficients and total degree in `1..=degree`.
pub fn random_germ(n: usize, m: usize, k: u32, degree: u32, terms: usize, seed: u64) -> PolyGermMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = (0..m)
        .map(|_| {
            let ts: Vec<Term> = (0..terms)
                .map(|_| {
                    let total = rng.random_range(1..=degree);
                    let mut e = vec![0u32; n];
                    for _ in 0..total {
                        e[rng.random_range(0..n)] += 1;
                    }
                    let num = rng.random_range(-9i64..=9);
                    let den = rng.random_range(1i64..=4);
                    Term { exponents: e, coeff: Coeff::ratio(num, den) }
                })
                .collect();
            Poly::from_terms(n, ts).unwrap()
        })
        .collect();
    PolyGermMap::new(n, k, comps).unwrap()
}

pub fn random_point(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn scalar(n: usize, k: u32, terms: &[(i64, &[u32])]) -> PolyGermMap {
    PolyGermMap::scalar(n, k, terms).unwrap()
}
