use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::coeff::Coeff;
use crate::error::{Error, Result};

/// Sparse multivariate polynomial over [`Coeff`], keyed by exponent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Coeff>,
}

/// One `{exponents, coeff}` entry of the germ file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: Coeff,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let mut p = Poly::zero(nvars);
        for t in terms {
            if t.exponents.len() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    found: t.exponents.len(),
                });
            }
            if let Coeff::Float(v) = t.coeff {
                if !v.is_finite() {
                    return Err(Error::invalid("non-finite coefficient"));
                }
            }
            p.add_term(t.exponents, t.coeff);
        }
        Ok(p)
    }

    /// Convenience constructor from `(coeff, exponents)` pairs with integer coefficients.
    pub fn monomials(nvars: usize, terms: &[(i64, &[u32])]) -> Result<Self> {
        Self::from_terms(
            nvars,
            terms.iter().map(|&(c, e)| Term {
                exponents: e.to_vec(),
                coeff: Coeff::int(c),
            }),
        )
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.terms.values().all(Coeff::is_exact)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &Coeff)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    pub fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(e, c)| Term { exponents: e.clone(), coeff: c.clone() })
            .collect()
    }

    pub fn constant_term(&self) -> Coeff {
        self.terms.get(&vec![0; self.nvars]).cloned().unwrap_or_else(Coeff::zero)
    }

    fn add_term(&mut self, exponents: Vec<u32>, coeff: Coeff) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.remove(&exponents) {
            Some(old) => {
                let sum = old + coeff;
                if !sum.is_zero() {
                    self.terms.insert(exponents, sum);
                }
            }
            None => {
                self.terms.insert(exponents, coeff);
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut de = e.clone();
            de[var] -= 1;
            out.add_term(de, c.clone() * Coeff::int(e[var] as i64));
        }
        out
    }

    /// Taylor polynomial of degree `<= order` at `base`, in the shifted variable `h = x - base`.
    pub fn taylor_at(&self, base: &[Coeff], order: u32) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            // prod_i (a_i + h_i)^{e_i}, truncated to total degree <= order
            let mut partial: Vec<(Vec<u32>, Coeff)> = vec![(Vec::with_capacity(self.nvars), c.clone())];
            for (i, &ei) in e.iter().enumerate() {
                let mut next = Vec::new();
                for (pe, pc) in &partial {
                    let used: u32 = pe.iter().sum();
                    for b in 0..=ei.min(order.saturating_sub(used)) {
                        let factor = Coeff::int(binomial(ei, b)) * base[i].pow(ei - b);
                        if factor.is_zero() {
                            continue;
                        }
                        let mut ne = pe.clone();
                        ne.push(b);
                        next.push((ne, pc.clone() * factor));
                    }
                }
                partial = next;
            }
            for (pe, pc) in partial {
                out.add_term(pe, pc);
            }
        }
        out
    }

    /// Drops every term of total degree above `order`.
    pub fn truncate(&self, order: u32) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() <= order)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(Coeff::abs_f64).fold(0.0, f64::max)
    }

    pub fn compile(&self) -> FloatPoly {
        FloatPoly {
            nvars: self.nvars,
            max_exp: self.terms.keys().flatten().copied().max().unwrap_or(0),
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c.to_f64())).collect(),
        }
    }
}

fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// Double-precision evaluator for a [`Poly`].
#[derive(Debug, Clone)]
pub struct FloatPoly {
    nvars: usize,
    max_exp: u32,
    terms: Vec<(Vec<u32>, f64)>,
}

impl FloatPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        if self.terms.is_empty() {
            return 0.0;
        }
        // powers[i][p] = x_i^p
        let width = self.max_exp as usize + 1;
        let mut powers = vec![1.0; self.nvars * width];
        for (i, &xi) in x.iter().enumerate() {
            for p in 1..width {
                powers[i * width + p] = powers[i * width + p - 1] * xi;
            }
        }
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .enumerate()
                    .fold(*c, |acc, (i, &p)| acc * powers[i * width + p as usize])
            })
            .sum()
    }
}
