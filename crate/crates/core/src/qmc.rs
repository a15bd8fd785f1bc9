//! Low-discrepancy point sets: randomly shifted Halton sequences mapped to balls and shells.
//!
//! Every generator is a pure function of its arguments. Shell samples are built on the
//! unit shell and then scaled, so the same seed and radius ratio give exactly
//! homothetic point sets at every scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

/// Halton sequence with a Cranley-Patterson rotation drawn from `seed`.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sequence supports at most {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Halton {
            shift: (0..dim).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// The `i`-th point in `[0, 1)^dim`.
    pub fn point(&self, i: u64) -> Vec<f64> {
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| {
                let v = radical_inverse(i + 1, p) + s;
                v - v.floor()
            })
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

fn unit_direction(u: &[f64]) -> Vec<f64> {
    let normal = Normal::standard();
    let g: Vec<f64> = u
        .iter()
        .map(|&v| normal.inverse_cdf(v.clamp(1e-12, 1.0 - 1e-12)))
        .collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; u.len()];
        e[0] = 1.0;
        e
    } else {
        g.into_iter().map(|v| v / norm).collect()
    }
}

/// `count` quasi-uniform unit vectors in `R^n`.
pub fn sphere_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let h = Halton::new(n, seed);
    (0..count as u64).map(|i| unit_direction(&h.point(i))).collect()
}

/// `count` points distributed uniformly by volume in `{inner_ratio <= |x| <= 1}`, scaled by `radius`.
pub fn shell_points(n: usize, count: usize, inner_ratio: f64, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let h = Halton::new(n + 1, seed);
    let inner = inner_ratio.powi(n as i32);
    (0..count as u64)
        .map(|i| {
            let u = h.point(i);
            let dir = unit_direction(&u[..n]);
            let r = (inner + u[n] * (1.0 - inner)).powf(1.0 / n as f64);
            dir.into_iter().map(|d| d * r * radius).collect()
        })
        .collect()
}

/// `count` quasi-uniform points in the closed ball of `radius`.
pub fn ball_points(n: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    shell_points(n, count, 0.0, radius, seed)
}

/// Euclidean norm without intermediate underflow or overflow.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc: f64, v| acc.hypot(*v))
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc: f64, (x, y)| acc.hypot(x - y))
}
