//! Linear maps `R^n -> R^m` (`m <= n`), the Rabier function and its minor-based surrogate.
//!
//! Norms are Euclidean on both sides, so the Rabier function
//! `nu(A) = inf { |A^T phi| : |phi| = 1 }` is the smallest singular value of `A`
//! and equals the spectral-norm distance from `A` to the non-surjective maps.
//!
//! The surrogate `g'(A) = max_I |M_I(A)| / h_I(A)` is built from maximal minors
//! `M_I` (columns `I`, `|I| = m`) and the largest `(m-1)`-subminor `h_I` inside
//! them. Minors are evaluated by cofactor expansion so that `h_I = 0` forces
//! `M_I = 0` bit-for-bit; shapes are expected to stay small (`n <= 8`, `m <= 4`).
//!
//! Column and row indices are zero-based throughout.

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold under which `nu` or `g'` is treated as zero (rank deficiency).
pub const RANK_TOL: f64 = 1e-12;

/// Dense real `m x n` matrix with `m <= n` and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    a: DMatrix<f64>,
}

impl LinearMap {
    /// Builds a map from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(m, n, &flat)
    }

    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::invalid("linear map needs at least one row and one column"));
        }
        if m > n {
            return Err(Error::invalid(format!("expected rows <= cols, got {m}x{n}")));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        Ok(LinearMap { a })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::zeros(rows, cols))
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.a[(row, col)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect()
    }

    /// Singular values in decreasing order (`m` of them).
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.a.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    }

    /// The Rabier function: the smallest singular value.
    pub fn nu(&self) -> f64 {
        self.singular_values().last().copied().unwrap_or(0.0)
    }

    /// Operator norm induced by the Euclidean norms (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.a.norm()
    }

    /// `nu(A) == 0` up to [`RANK_TOL`] relative to the Frobenius norm.
    pub fn is_rank_deficient(&self) -> bool {
        is_negligible(self.nu(), self.frobenius_norm())
    }

    /// Determinant of the `m x m` submatrix on the columns of `index`.
    pub fn minor(&self, index: &MinorIndex) -> Result<f64> {
        index.check(self.rows(), self.cols())?;
        let rows: Vec<usize> = (0..self.rows()).collect();
        Ok(cofactor_det(&self.a, &rows, &index.cols))
    }

    /// `(m-1) x (m-1)` minor on columns `cols` with row `deleted_row` removed.
    /// Equal to 1 when `m = 1`.
    pub fn sub_minor(&self, cols: &[usize], deleted_row: usize) -> Result<f64> {
        let m = self.rows();
        if cols.len() + 1 != m {
            return Err(Error::invalid(format!(
                "sub-minor needs {} columns, got {}",
                m - 1,
                cols.len()
            )));
        }
        if deleted_row >= m {
            return Err(Error::invalid(format!("row {deleted_row} out of range")));
        }
        if !strictly_increasing(cols) || cols.iter().any(|&c| c >= self.cols()) {
            return Err(Error::invalid(format!("bad column set {cols:?}")));
        }
        let rows: Vec<usize> = (0..m).filter(|&r| r != deleted_row).collect();
        Ok(cofactor_det(&self.a, &rows, cols))
    }

    /// `h_I(A) = max |M_J(j)(A)|` over `J ⊂ I` with `|J| = m-1` and deleted rows `j`.
    pub fn h(&self, index: &MinorIndex) -> Result<f64> {
        index.check(self.rows(), self.cols())?;
        Ok(self.h_unchecked(&index.cols))
    }

    fn h_unchecked(&self, cols: &[usize]) -> f64 {
        let m = self.rows();
        if m == 1 {
            return 1.0;
        }
        let mut best = 0.0_f64;
        for skip in 0..m {
            let sub: Vec<usize> = cols
                .iter()
                .enumerate()
                .filter(|&(p, _)| p != skip)
                .map(|(_, &c)| c)
                .collect();
            for row in 0..m {
                let rows: Vec<usize> = (0..m).filter(|&r| r != row).collect();
                best = best.max(cofactor_det(&self.a, &rows, &sub).abs());
            }
        }
        best
    }

    /// `|M_I| / h_I` with the convention `0/0 = 0`.
    pub fn minor_ratio(&self, index: &MinorIndex) -> Result<f64> {
        index.check(self.rows(), self.cols())?;
        Ok(self.minor_ratio_unchecked(&index.cols))
    }

    pub(crate) fn minor_ratio_unchecked(&self, cols: &[usize]) -> f64 {
        let rows: Vec<usize> = (0..self.rows()).collect();
        let minor = cofactor_det(&self.a, &rows, cols);
        let h = self.h_unchecked(cols);
        if h == 0.0 {
            // Laplace expansion: all subminors zero means the minor is zero.
            assert!(minor == 0.0, "nonzero minor {minor} with vanishing subminors");
            0.0
        } else {
            minor.abs() / h
        }
    }

    /// `g'(A) = max_I |M_I(A)| / h_I(A)`.
    pub fn g_prime(&self) -> f64 {
        MinorIndex::all(self.rows(), self.cols())
            .map(|idx| self.minor_ratio_unchecked(&idx.cols))
            .fold(0.0, f64::max)
    }
}

/// Column selection `I` of size `m` (strictly increasing, zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MinorIndex {
    cols: Vec<usize>,
}

impl MinorIndex {
    pub fn new(cols: Vec<usize>) -> Result<Self> {
        if cols.is_empty() || !strictly_increasing(&cols) {
            return Err(Error::invalid(format!("index set {cols:?} must be strictly increasing")));
        }
        Ok(MinorIndex { cols })
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Every `m`-subset of `0..n` in lexicographic order.
    pub fn all(m: usize, n: usize) -> impl Iterator<Item = MinorIndex> {
        (0..n).combinations(m).map(|cols| MinorIndex { cols })
    }

    fn check(&self, m: usize, n: usize) -> Result<()> {
        if self.cols.len() != m {
            return Err(Error::invalid(format!(
                "index set {:?} has {} columns, map has {m} rows",
                self.cols,
                self.cols.len()
            )));
        }
        if self.cols.iter().any(|&c| c >= n) {
            return Err(Error::invalid(format!("index set {:?} exceeds {n} columns", self.cols)));
        }
        Ok(())
    }
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Determinant of `a[rows, cols]` by cofactor expansion along the first column.
pub(crate) fn cofactor_det(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    debug_assert_eq!(rows.len(), cols.len());
    match cols.len() {
        0 => 1.0,
        1 => a[(rows[0], cols[0])],
        2 => a[(rows[0], cols[0])] * a[(rows[1], cols[1])] - a[(rows[0], cols[1])] * a[(rows[1], cols[0])],
        _ => {
            let mut det = 0.0;
            let mut sub = Vec::with_capacity(rows.len() - 1);
            for (p, &r) in rows.iter().enumerate() {
                let entry = a[(r, cols[0])];
                sub.clear();
                sub.extend(rows.iter().copied().filter(|&q| q != r));
                let cof = cofactor_det(a, &sub, &cols[1..]);
                let term = entry * cof;
                if p % 2 == 0 {
                    det += term;
                } else {
                    det -= term;
                }
            }
            det
        }
    }
}

pub(crate) fn is_negligible(value: f64, scale: f64) -> bool {
    value <= RANK_TOL * scale
}

/// Dense complex `m x n` matrix with `m <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexLinearMap {
    a: DMatrix<Complex64>,
}

impl ComplexLinearMap {
    pub fn from_matrix(a: DMatrix<Complex64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 || m > n {
            return Err(Error::invalid(format!("expected 0 < rows <= cols, got {m}x{n}")));
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        Ok(ComplexLinearMap { a })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    /// Smallest complex singular value.
    pub fn nu(&self) -> f64 {
        self.a
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Real `2m x 2n` form: `a + bi` becomes the block `[[a, -b], [b, a]]`.
    pub fn realify(&self) -> LinearMap {
        let (m, n) = self.a.shape();
        let mut r = DMatrix::zeros(2 * m, 2 * n);
        for i in 0..m {
            for j in 0..n {
                let z = self.a[(i, j)];
                r[(2 * i, 2 * j)] = z.re;
                r[(2 * i, 2 * j + 1)] = -z.im;
                r[(2 * i + 1, 2 * j)] = z.im;
                r[(2 * i + 1, 2 * j + 1)] = z.re;
            }
        }
        LinearMap { a: r }
    }
}

/// Empirical band of `nu / g'` over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceBand {
    pub c_low: f64,
    pub c_high: f64,
    /// Maps with a positive ratio.
    pub evaluated: usize,
    /// Maps where both `g'` and `nu` vanish.
    pub skipped_zero: usize,
}

/// Min and max of `nu(A) / g'(A)` over `sample`, skipping maps with `g' = 0`
/// (for which `nu = 0` is checked).
pub fn equivalence_band(sample: &[LinearMap]) -> Result<EquivalenceBand> {
    let mut band = EquivalenceBand {
        c_low: f64::INFINITY,
        c_high: 0.0,
        evaluated: 0,
        skipped_zero: 0,
    };
    for a in sample {
        let scale = a.frobenius_norm();
        let (nu, g) = (a.nu(), a.g_prime());
        let nu_zero = is_negligible(nu, scale);
        let g_zero = is_negligible(g, scale);
        if nu_zero != g_zero {
            return Err(Error::Inconsistent(format!(
                "nu = {nu:e} and g' = {g:e} disagree on rank deficiency"
            )));
        }
        if g_zero {
            band.skipped_zero += 1;
            continue;
        }
        let ratio = nu / g;
        band.c_low = band.c_low.min(ratio);
        band.c_high = band.c_high.max(ratio);
        band.evaluated += 1;
    }
    if band.evaluated == 0 {
        return Err(Error::invalid("sample contains no map with g' > 0"));
    }
    Ok(band)
}

/// `count` maps of shape `rows x cols` with entries uniform in `[-1, 1]`.
pub fn random_maps(rows: usize, cols: usize, count: usize, seed: u64) -> Result<Vec<LinearMap>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let entries: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..=1.0)).collect();
            LinearMap::new(rows, cols, &entries)
        })
        .collect()
}

/// Samples `count` random `rows x cols` maps and reports the band of `nu / g'`.
pub fn equivalence_constants_sample(
    rows: usize,
    cols: usize,
    count: usize,
    seed: u64,
) -> Result<EquivalenceBand> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    equivalence_band(&random_maps(rows, cols, count, seed)?)
}
