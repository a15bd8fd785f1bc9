use nalgebra::DMatrix;

use super::coeff::Coeff;
use super::poly::{FloatPoly, Poly};
use super::Germ;
use crate::error::{Error, Result};
use crate::linmap::LinearMap;

/// Upper bound on the total degree of any component.
pub const MAX_DEGREE: u32 = 64;

/// Polynomial map germ `(R^n, 0) -> (R^m, 0)` with `m <= n` and jet order `k > 1`.
///
/// Derivatives are taken symbolically once at construction; evaluation runs on
/// double-precision copies of the coefficients.
#[derive(Debug, Clone)]
pub struct PolyGermMap {
    n: usize,
    k: u32,
    components: Vec<Poly>,
    values: Vec<FloatPoly>,
    // gradient[c][i] = d f_c / d x_i
    gradient: Vec<Vec<FloatPoly>>,
    // hessian[c][i][j] = d^2 f_c / d x_i d x_j
    hessian: Vec<Vec<Vec<FloatPoly>>>,
}

impl PolyGermMap {
    pub fn new(n: usize, k: u32, components: Vec<Poly>) -> Result<Self> {
        let m = components.len();
        if n == 0 || m == 0 {
            return Err(Error::invalid("germ needs n >= 1 and m >= 1"));
        }
        if m > n {
            return Err(Error::invalid(format!("codomain dimension {m} exceeds domain dimension {n}")));
        }
        if k < 2 {
            return Err(Error::invalid(format!("jet order must be > 1, got {k}")));
        }
        for (c, p) in components.iter().enumerate() {
            if p.nvars() != n {
                return Err(Error::DimensionMismatch { expected: n, found: p.nvars() });
            }
            if !p.constant_term().is_zero() {
                return Err(Error::invalid(format!("component {c} does not vanish at the origin")));
            }
            if p.degree() > MAX_DEGREE {
                return Err(Error::invalid(format!("component {c} exceeds degree {MAX_DEGREE}")));
            }
        }
        let values = components.iter().map(Poly::compile).collect();
        let first: Vec<Vec<Poly>> = components
            .iter()
            .map(|p| (0..n).map(|i| p.derivative(i)).collect())
            .collect();
        let gradient = first
            .iter()
            .map(|row| row.iter().map(Poly::compile).collect())
            .collect();
        let hessian = first
            .iter()
            .map(|row| {
                row.iter()
                    .map(|di| (0..n).map(|j| di.derivative(j).compile()).collect())
                    .collect()
            })
            .collect();
        Ok(PolyGermMap { n, k, components, values, gradient, hessian })
    }

    /// Scalar germ from integer `(coeff, exponents)` pairs.
    pub fn scalar(n: usize, k: u32, terms: &[(i64, &[u32])]) -> Result<Self> {
        Self::new(n, k, vec![Poly::monomials(n, terms)?])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn with_k(&self, k: u32) -> Result<Self> {
        Self::new(self.n, k, self.components.clone())
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn is_exact(&self) -> bool {
        self.components.iter().all(Poly::is_exact)
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Poly::degree).max().unwrap_or(0)
    }

    /// Componentwise `self - other`; the jet order is taken from `self`.
    pub fn difference(&self, other: &PolyGermMap) -> Result<PolyGermMap> {
        if self.n != other.n || self.m() != other.m() {
            return Err(Error::invalid("germs have different shapes"));
        }
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.sub(b))
            .collect();
        PolyGermMap::new(self.n, self.k, comps)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        Ok(())
    }

    /// Taylor polynomial of degree `<= order` at `base`.
    ///
    /// The base point is converted to an exact rational, so the jet is exact
    /// whenever the coefficients are.
    pub fn jet_at(&self, base: &[f64], order: u32) -> Result<JetPoly> {
        self.check_point(base)?;
        let exact_base: Vec<Coeff> = base.iter().map(|&v| Coeff::exact_from_f64(v)).collect::<Result<_>>()?;
        Ok(JetPoly {
            base: base.to_vec(),
            order,
            components: self.components.iter().map(|p| p.taylor_at(&exact_base, order)).collect(),
        })
    }
}

impl Germ for PolyGermMap {
    fn domain_dim(&self) -> usize {
        self.n
    }

    fn codomain_dim(&self) -> usize {
        self.m()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.values.iter().map(|p| p.eval(x)).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<LinearMap> {
        self.check_point(x)?;
        let entries: Vec<f64> = self.gradient.iter().flatten().map(|p| p.eval(x)).collect();
        LinearMap::new(self.m(), self.n, &entries)
    }

    fn hessian(&self, component: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let rows = self
            .hessian
            .get(component)
            .ok_or_else(|| Error::invalid(format!("no component {component}")))?;
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| rows[i][j].eval(x)))
    }
}

/// Degree-`<= order` Taylor data of a germ at `base`, as polynomials in `h = x - base`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoly {
    pub base: Vec<f64>,
    pub order: u32,
    pub components: Vec<Poly>,
}

impl JetPoly {
    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    /// Largest coefficient of `self - other` in absolute value.
    pub fn max_residual(&self, other: &JetPoly) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.sub(b).max_abs_coeff())
            .fold(0.0, f64::max)
    }

    /// Rebuilds the polynomial in the original variables (`h = x - base`).
    pub fn shift_back(&self) -> Result<Vec<Poly>> {
        let neg_base: Vec<Coeff> = self
            .base
            .iter()
            .map(|&v| Coeff::exact_from_f64(-v))
            .collect::<Result<_>>()?;
        Ok(self
            .components
            .iter()
            .map(|p| p.taylor_at(&neg_base, u32::MAX))
            .collect())
    }
}
